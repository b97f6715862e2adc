#ifndef DVSUPPORT_EVALUATE_HPP
#define DVSUPPORT_EVALUATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dvsupport/corpus.hpp"
#include "dvsupport/detect.hpp"
#include "dvsupport/error.hpp"
#include "dvsupport/llm_gateway.hpp"
#include "dvsupport/random.hpp"

/**
 * @file evaluate.hpp
 *
 * @brief Stratified k-fold evaluation of a detector, confusion-matrix metrics,
 * agreement scores and the synthetic corpus used as an end-to-end oracle.
 */

namespace dvsupport {

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
    std::size_t k = 10;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::string>> folds;  // test ids per fold
};

/**
 * Within each class (self-disclosure first) the ids are shuffled with the
 * seeded generator and dealt round-robin; dealing continues across classes
 * from where the previous class stopped so fold sizes stay within one.
 */
inline FoldPlan stratified_kfold(const LabelMap& labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorCode::InvalidArgument, "k-fold needs k >= 2");
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
    for (const auto& [id, label] : labels) {
        (label.value == Disclosure::SelfDisclosure ? positives : negatives).push_back(id);
    }
    if (positives.size() < k || negatives.size() < k) {
        throw Error(ErrorCode::ClassTooSmall, std::to_string(std::min(positives.size(), negatives.size())),
                    "each class needs at least k=" + std::to_string(k) + " members");
    }
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.folds.resize(k);
    Rng rng(seed);
    std::size_t next = 0;
    for (auto* cls : {&positives, &negatives}) {
        rng.shuffle(std::span<std::string>(*cls));
        for (auto& id : *cls) {
            plan.folds[next].push_back(std::move(id));
            next = (next + 1) % k;
        }
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Metrics

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

/// Positive class is SelfDisclosure.
inline void tally(ConfusionMatrix& cm, Disclosure truth, Disclosure predicted) {
    const bool t = truth == Disclosure::SelfDisclosure;
    const bool p = predicted == Disclosure::SelfDisclosure;
    if (t && p) ++cm.tp;
    else if (!t && p) ++cm.fp;
    else if (t && !p) ++cm.fn;
    else ++cm.tn;
}

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // Set when the metric's denominator was zero and 0 was reported instead.
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
};

inline Metrics metrics(const ConfusionMatrix& cm) {
    Metrics m;
    const std::size_t n = cm.total();
    m.accuracy = n == 0 ? 0.0 : static_cast<double>(cm.tp + cm.tn) / static_cast<double>(n);
    if (cm.tp + cm.fp == 0) {
        m.precision_undefined = true;
    } else {
        m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
    }
    if (cm.tp + cm.fn == 0) {
        m.recall_undefined = true;
    } else {
        m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    }
    if (m.precision + m.recall == 0.0) {
        m.f1_undefined = true;
    } else {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    return m;
}

/// Unweighted mean of the per-class precision/recall/F1 (both classes).
inline Metrics macro_metrics(const ConfusionMatrix& cm) {
    const Metrics pos = metrics(cm);
    const Metrics neg = metrics(ConfusionMatrix{cm.tn, cm.fn, cm.fp, cm.tp});
    Metrics m;
    m.accuracy = pos.accuracy;
    m.precision = (pos.precision + neg.precision) / 2.0;
    m.recall = (pos.recall + neg.recall) / 2.0;
    m.f1 = (pos.f1 + neg.f1) / 2.0;
    m.precision_undefined = pos.precision_undefined || neg.precision_undefined;
    m.recall_undefined = pos.recall_undefined || neg.recall_undefined;
    m.f1_undefined = pos.f1_undefined || neg.f1_undefined;
    return m;
}

struct Summary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
};

struct MetricReport {
    std::vector<ConfusionMatrix> confusion;  // per fold
    std::vector<Metrics> folds;
    std::vector<Metrics> macro_folds;
    Summary accuracy, precision, recall, f1;
    Summary macro_precision, macro_recall, macro_f1;
};

inline Summary summarize_values(std::span<const double> values) {
    Summary s;
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    return s;
}

/// Mean and Bessel-corrected standard deviation of each metric.
inline MetricReport aggregate(std::span<const Metrics> folds, std::span<const Metrics> macro_folds = {}) {
    if (folds.size() < 2) throw Error(ErrorCode::InvalidArgument, "aggregate needs at least two folds");
    MetricReport r;
    r.folds.assign(folds.begin(), folds.end());
    r.macro_folds.assign(macro_folds.begin(), macro_folds.end());
    auto column = [](std::span<const Metrics> src, double Metrics::*field) {
        std::vector<double> v;
        for (const auto& m : src) v.push_back(m.*field);
        return v;
    };
    r.accuracy = summarize_values(column(folds, &Metrics::accuracy));
    r.precision = summarize_values(column(folds, &Metrics::precision));
    r.recall = summarize_values(column(folds, &Metrics::recall));
    r.f1 = summarize_values(column(folds, &Metrics::f1));
    if (!macro_folds.empty()) {
        r.macro_precision = summarize_values(column(macro_folds, &Metrics::precision));
        r.macro_recall = summarize_values(column(macro_folds, &Metrics::recall));
        r.macro_f1 = summarize_values(column(macro_folds, &Metrics::f1));
    }
    return r;
}

/// "82.01% (±4.80%)".
inline std::string format_percent(const Summary& s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f%% (±%.2f%%)", s.mean * 100.0, s.stddev * 100.0);
    return buf;
}

// ---------------------------------------------------------------------------
// Cross-validation

/// A classifier under evaluation. `train` holds the other folds' labeled
/// posts; inference-only detectors may ignore it.
class Detector {
public:
    virtual ~Detector() = default;
    virtual LabelMap classify(std::span<const Post> test, std::span<const Post> train) = 0;
};

/// The prompted detector. Training folds are not used: the backend is
/// queried zero-shot for every test post.
class PromptDetector final : public Detector {
public:
    PromptDetector(DetectorConfig config, Gateway& gateway) : config_(std::move(config)), gateway_(&gateway) {}

    LabelMap classify(std::span<const Post> test, std::span<const Post>) override {
        return classify_corpus(test, config_, *gateway_, /*allow_labeled=*/true).labels();
    }

private:
    DetectorConfig config_;
    Gateway* gateway_;
};

struct FoldRow {
    std::size_t fold = 0;
    ConfusionMatrix confusion;
    Metrics metrics;
};

inline MetricReport run_cv(std::span<const Post> labeled, const FoldPlan& plan, Detector& detector) {
    std::map<std::string_view, const Post*> by_id;
    for (const auto& p : labeled) {
        if (!p.label) throw Error(ErrorCode::InvalidArgument, p.id, "cross-validation input must be labeled");
        by_id.emplace(p.id, &p);
    }
    std::vector<Metrics> per_fold;
    std::vector<Metrics> per_fold_macro;
    std::vector<ConfusionMatrix> confusion;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        std::set<std::string_view> in_test;
        std::vector<Post> test;
        for (const auto& id : plan.folds[f]) {
            auto it = by_id.find(id);
            if (it == by_id.end()) throw Error(ErrorCode::UnknownId, id, "fold " + std::to_string(f) + " references an unknown post");
            test.push_back(*it->second);
            in_test.insert(id);
        }
        std::vector<Post> train;
        for (const auto& p : labeled) {
            if (!in_test.contains(p.id)) train.push_back(p);
        }
        LabelMap predicted;
        try {
            predicted = detector.classify(test, train);
        } catch (const Error& e) {
            throw e.with_context("fold " + std::to_string(f));
        }
        ConfusionMatrix cm;
        for (const auto& p : test) {
            auto it = predicted.find(p.id);
            if (it == predicted.end()) {
                throw Error(ErrorCode::AmbiguousVerdict, p.id, "fold " + std::to_string(f) + ": no prediction for post");
            }
            tally(cm, p.label->value, it->second.value);
        }
        confusion.push_back(cm);
        per_fold.push_back(metrics(cm));
        per_fold_macro.push_back(macro_metrics(cm));
    }
    MetricReport report = aggregate(per_fold, per_fold_macro);
    report.confusion = std::move(confusion);
    return report;
}

inline nlohmann::ordered_json metrics_json(const Metrics& m) {
    nlohmann::ordered_json o;
    o["accuracy"] = m.accuracy;
    o["precision"] = m.precision;
    o["recall"] = m.recall;
    o["f1"] = m.f1;
    if (m.precision_undefined) o["precision_undefined"] = true;
    if (m.recall_undefined) o["recall_undefined"] = true;
    if (m.f1_undefined) o["f1_undefined"] = true;
    return o;
}

inline std::string serialize_report_json(const MetricReport& r, const FoldPlan& plan) {
    nlohmann::ordered_json root;
    root["protocol"] = "stratified k-fold, inference-only detector (training folds unused)";
    root["k"] = plan.k;
    root["seed"] = plan.seed;
    root["positive_class"] = "self-disclosure";
    nlohmann::ordered_json folds = nlohmann::ordered_json::array();
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
        nlohmann::ordered_json row;
        row["fold"] = f;
        if (f < r.confusion.size()) {
            row["tp"] = r.confusion[f].tp;
            row["fp"] = r.confusion[f].fp;
            row["fn"] = r.confusion[f].fn;
            row["tn"] = r.confusion[f].tn;
        }
        row["metrics"] = metrics_json(r.folds[f]);
        if (f < r.macro_folds.size()) row["macro"] = metrics_json(r.macro_folds[f]);
        folds.push_back(std::move(row));
    }
    root["folds"] = std::move(folds);
    auto summary = [](const Summary& s) {
        nlohmann::ordered_json o;
        o["mean"] = s.mean;
        o["std"] = s.stddev;
        o["formatted"] = format_percent(s);
        return o;
    };
    root["aggregate"]["accuracy"] = summary(r.accuracy);
    root["aggregate"]["precision"] = summary(r.precision);
    root["aggregate"]["recall"] = summary(r.recall);
    root["aggregate"]["f1"] = summary(r.f1);
    root["aggregate_macro"]["precision"] = summary(r.macro_precision);
    root["aggregate_macro"]["recall"] = summary(r.macro_recall);
    root["aggregate_macro"]["f1"] = summary(r.macro_f1);
    return root.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

/// fold,metric,value rows for plotting per-fold bars.
inline std::string serialize_report_csv(const MetricReport& r) {
    std::string out = "fold,metric,value\n";
    char buf[128];
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
        const Metrics& m = r.folds[f];
        for (auto [name, value] : {std::pair{"accuracy", m.accuracy}, std::pair{"precision", m.precision},
                                   std::pair{"recall", m.recall}, std::pair{"f1", m.f1}}) {
            std::snprintf(buf, sizeof buf, "%zu,%s,%.17g\n", f, name, value);
            out += buf;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Agreement

/// Adjusted Rand index; every distinct label (including -1) is one group.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "label vectors differ in length");
    const std::size_t n = a.size();
    if (n < 2) return 1.0;
    std::map<std::pair<int, int>, std::size_t> joint;
    std::map<int, std::size_t> ra;
    std::map<int, std::size_t> rb;
    for (std::size_t i = 0; i < n; ++i) {
        ++joint[{a[i], b[i]}];
        ++ra[a[i]];
        ++rb[b[i]];
    }
    auto pairs = [](std::size_t x) { return static_cast<double>(x) * static_cast<double>(x - (x > 0 ? 1 : 0)) / 2.0; };
    double index = 0.0;
    for (const auto& [key, c] : joint) index += pairs(c);
    double sum_a = 0.0;
    for (const auto& [key, c] : ra) sum_a += pairs(c);
    double sum_b = 0.0;
    for (const auto& [key, c] : rb) sum_b += pairs(c);
    const double expected = sum_a * sum_b / pairs(n);
    const double max_index = (sum_a + sum_b) / 2.0;
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SynthSpec {
    std::size_t blobs = 3;
    std::size_t posts_per_blob = 50;
    std::size_t comments_per_post = 3;
    /// Per-blob vocabularies; generated from the seed when empty. Must be
    /// pairwise disjoint.
    std::vector<std::vector<std::string>> vocabularies;
    std::size_t vocabulary_size = 20;
    std::size_t words_per_post = 24;
    double disclosure_rate = 0.5;
    /// Posts per class that carry a human label (0 = none labeled).
    std::size_t labeled_per_class = 0;
    std::uint64_t seed = 7;
};

struct SynthCorpus {
    std::vector<Post> posts;
    std::vector<Disclosure> planted_labels;
    std::vector<int> planted_clusters;
};

namespace detail {

inline std::string synth_word(Rng& rng) {
    static constexpr const char* kOnset[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "gl"};
    static constexpr const char* kVowel[] = {"a", "e", "i", "o", "u", "ai", "ou"};
    std::string w;
    const std::size_t syllables = 2 + rng.below(2);
    for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnset[rng.below(std::size(kOnset))];
        w += kVowel[rng.below(std::size(kVowel))];
    }
    return w;
}

// Support themes used for comment text; cluster b leans on theme b mod 5.
inline const std::vector<std::vector<std::string>>& support_themes() {
    static const std::vector<std::vector<std::string>> themes = {
        {"safety", "shelter", "plan", "leave"},
        {"therapy", "counselor", "healing", "trauma"},
        {"lawyer", "custody", "court", "documentation"},
        {"friends", "family", "network", "trust"},
        {"hotline", "advocate", "resources", "call"},
    };
    return themes;
}

} // namespace detail

/**
 * Deterministic corpus with planted topical blobs. Posts in one blob draw all
 * content words from that blob's vocabulary. Self-disclosure posts are
 * written in the first person ("I", "my"), others in the third person.
 */
inline SynthCorpus synth_corpus(const SynthSpec& spec) {
    Rng rng(spec.seed);
    std::vector<std::vector<std::string>> vocab = spec.vocabularies;
    if (vocab.empty()) {
        std::set<std::string> used = {"i", "my", "me", "they", "their", "them"};
        for (const auto& theme : detail::support_themes()) used.insert(theme.begin(), theme.end());
        vocab.resize(spec.blobs);
        for (auto& v : vocab) {
            while (v.size() < spec.vocabulary_size) {
                std::string w = detail::synth_word(rng);
                if (used.insert(w).second) v.push_back(std::move(w));
            }
        }
    }
    if (vocab.size() != spec.blobs) throw Error(ErrorCode::InvalidArgument, "one vocabulary per blob required");
    {
        std::set<std::string> all;
        std::size_t total = 0;
        for (const auto& v : vocab) {
            if (v.empty()) throw Error(ErrorCode::InvalidArgument, "empty vocabulary");
            all.insert(v.begin(), v.end());
            total += v.size();
        }
        if (all.size() != total) throw Error(ErrorCode::InvalidArgument, "vocabularies must be disjoint");
    }

    SynthCorpus out;
    const auto& themes = detail::support_themes();
    std::size_t comment_serial = 0;
    for (std::size_t b = 0; b < spec.blobs; ++b) {
        for (std::size_t j = 0; j < spec.posts_per_blob; ++j) {
            const bool disclosure = rng.uniform() < spec.disclosure_rate;
            auto pick = [&](std::size_t count) {
                std::string s;
                for (std::size_t w = 0; w < count; ++w) {
                    if (w > 0) s += ' ';
                    s += vocab[b][rng.below(vocab[b].size())];
                }
                return s;
            };
            Post p;
            char id[32];
            std::snprintf(id, sizeof id, "p%02zu%04zu", b, j);
            p.id = id;
            p.subreddit = default_subreddits()[(b + j) % default_subreddits().size()];
            p.title = pick(4);
            p.body = (disclosure ? "I lived this and my " : "They described how their ") + pick(spec.words_per_post);
            p.created_utc = 1'600'000'000 + static_cast<std::int64_t>(b * 100'000 + j * 60);
            p.karma = static_cast<std::int64_t>(rng.below(500));
            for (std::size_t c = 0; c < spec.comments_per_post; ++c) {
                const auto& theme = themes[(b + (rng.uniform() < 0.8 ? 0 : 1 + rng.below(themes.size() - 1))) % themes.size()];
                std::string body = "Please consider";
                for (int w = 0; w < 5; ++w) body += " " + theme[rng.below(theme.size())];
                char cid[32];
                std::snprintf(cid, sizeof cid, "c%06zu", comment_serial++);
                p.comments.push_back({cid, body, static_cast<std::int64_t>(rng.below(300)) - 20, p.created_utc + 3600});
            }
            out.posts.push_back(std::move(p));
            out.planted_labels.push_back(disclosure ? Disclosure::SelfDisclosure : Disclosure::NonSelfDisclosure);
            out.planted_clusters.push_back(static_cast<int>(b));
        }
    }

    if (spec.labeled_per_class > 0) {
        std::vector<std::size_t> order(out.posts.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(std::span<std::size_t>(order));
        std::size_t pos = 0;
        std::size_t neg = 0;
        for (std::size_t i : order) {
            const bool is_pos = out.planted_labels[i] == Disclosure::SelfDisclosure;
            std::size_t& taken = is_pos ? pos : neg;
            if (taken >= spec.labeled_per_class) continue;
            ++taken;
            out.posts[i].label = DisclosureLabel{out.planted_labels[i], LabelSource::Human};
        }
        if (pos < spec.labeled_per_class || neg < spec.labeled_per_class) {
            throw Error(ErrorCode::ClassTooSmall, "synthetic corpus has too few posts of one class to label");
        }
    }
    return out;
}

} // namespace dvsupport

#endif // DVSUPPORT_EVALUATE_HPP
