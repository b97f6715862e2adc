#ifndef DVSUPPORT_DETECT_HPP
#define DVSUPPORT_DETECT_HPP

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dvsupport/corpus.hpp"
#include "dvsupport/error.hpp"
#include "dvsupport/io.hpp"
#include "dvsupport/llm_gateway.hpp"
#include "dvsupport/log.hpp"
#include "dvsupport/text.hpp"

namespace dvsupport {

/// Accepted surface forms, compared after normalization (see parse_verdict).
struct VerdictLexicon {
    std::vector<std::string> affirmative{"yes"};
    std::vector<std::string> negative{"no"};
    std::size_t max_length = 8;
};

struct DetectorConfig {
    std::string model_id;
    PromptTemplate prompt = prompts::detection();
    VerdictLexicon lexicon{};
    double temperature = 0.0;
    int max_output_tokens = 8;
};

struct Verdict {
    DisclosureLabel label{Disclosure::NonSelfDisclosure, LabelSource::Model};
    std::string raw_text;
};

inline std::string build_detection_prompt(const Post& post, const PromptTemplate& tmpl = prompts::detection()) {
    if (tmpl.name != TemplateName::Detection) throw Error(ErrorCode::InvalidArgument, "detector needs the Detection template");
    const std::string content = post_text(post);
    if (text::blank(content)) throw Error(ErrorCode::InvalidArgument, post.id, "post has no text");
    return render(tmpl, {{std::string(prompts::kPostContent), content}});
}

namespace detail {

inline bool is_terminal_punct(char c) { return c == '.' || c == '!' || c == '?' || c == ',' || c == ';' || c == ':'; }

// Strips one layer of ASCII or typographic quotes around `s`.
inline std::string_view strip_quotes(std::string_view s) {
    static constexpr std::string_view kPairs[][2] = {
        {"\"", "\""}, {"'", "'"}, {"`", "`"}, {"“", "”"}, {"‘", "’"},
    };
    for (const auto& pair : kPairs) {
        if (s.size() >= pair[0].size() + pair[1].size() && s.starts_with(pair[0]) && s.ends_with(pair[1])) {
            return s.substr(pair[0].size(), s.size() - pair[0].size() - pair[1].size());
        }
    }
    return s;
}

} // namespace detail

/**
 * Maps a raw completion onto a label. The text is trimmed; anything longer
 * than the lexicon's max_length is ambiguous. Otherwise surrounding quotes and
 * trailing punctuation are removed (repeatedly, so `"No."` and `'yes'!` both
 * work) and the remainder is matched case-insensitively.
 */
inline Verdict parse_verdict(std::string_view raw, const VerdictLexicon& lexicon = {}) {
    std::string_view s = text::trim(raw);
    if (s.size() > lexicon.max_length) throw Error(ErrorCode::AmbiguousVerdict, std::string(raw), "response is not a bare verdict");
    for (;;) {
        const std::size_t before = s.size();
        while (!s.empty() && detail::is_terminal_punct(s.back())) s.remove_suffix(1);
        s = text::trim(detail::strip_quotes(text::trim(s)));
        if (s.size() == before) break;
    }
    const std::string word = text::lower_ascii(s);
    Verdict v;
    v.raw_text = std::string(raw);
    v.label.source = LabelSource::Model;
    for (const auto& yes : lexicon.affirmative) {
        if (word == yes) {
            v.label.value = Disclosure::SelfDisclosure;
            return v;
        }
    }
    for (const auto& no : lexicon.negative) {
        if (word == no) {
            v.label.value = Disclosure::NonSelfDisclosure;
            return v;
        }
    }
    throw Error(ErrorCode::AmbiguousVerdict, std::string(raw), "response outside the verdict lexicon");
}

struct DetectionFailure {
    std::string id;
    std::string raw;
    std::string reason;
};

struct LabeledVerdict {
    std::string id;
    Verdict verdict;
};

struct ClassificationResult {
    std::vector<LabeledVerdict> verdicts;  // input order, failures omitted
    std::vector<DetectionFailure> failures;
    ClassCounts counts;

    LabelMap labels() const {
        LabelMap out;
        for (const auto& v : verdicts) out.emplace(v.id, v.verdict.label);
        return out;
    }
};

/**
 * Classifies every post through the gateway. An ambiguous answer is retried
 * once (temperature 0); a second ambiguous answer lands in `failures` rather
 * than defaulting to either class. Gateway errors propagate with the post id.
 */
inline ClassificationResult classify_corpus(std::span<const Post> posts, const DetectorConfig& config, Gateway& gateway,
                                            bool allow_labeled = false) {
    ClassificationResult result;
    if (posts.empty()) return result;

    std::vector<ChatRequest> requests;
    requests.reserve(posts.size());
    for (const auto& p : posts) {
        if (p.label && !allow_labeled) throw Error(ErrorCode::InvalidArgument, p.id, "post already labeled");
        requests.push_back({build_detection_prompt(p, config.prompt), config.temperature, config.max_output_tokens, config.model_id});
    }

    auto run = [&](std::span<const ChatRequest> batch, std::span<const std::size_t> index) {
        return gateway.complete_all(batch, [&](std::size_t b) { return "post " + posts[index[b]].id; });
    };

    std::vector<std::size_t> all(posts.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const std::vector<ChatResponse> first = run(requests, all);

    std::vector<std::optional<Verdict>> parsed(posts.size());
    std::vector<std::size_t> retry;
    for (std::size_t i = 0; i < posts.size(); ++i) {
        try {
            parsed[i] = parse_verdict(first[i].text, config.lexicon);
        } catch (const Error&) {
            retry.push_back(i);
        }
    }
    if (!retry.empty()) {
        std::vector<ChatRequest> again;
        for (std::size_t i : retry) {
            ChatRequest r = requests[i];
            r.temperature = 0.0;
            again.push_back(std::move(r));
        }
        const std::vector<ChatResponse> second = run(again, retry);
        for (std::size_t r = 0; r < retry.size(); ++r) {
            const std::size_t i = retry[r];
            try {
                parsed[i] = parse_verdict(second[r].text, config.lexicon);
            } catch (const Error&) {
                result.failures.push_back({posts[i].id, second[r].text, "ambiguous verdict after retry"});
            }
        }
    }

    for (std::size_t i = 0; i < posts.size(); ++i) {
        if (!parsed[i]) continue;
        if (parsed[i]->label.value == Disclosure::SelfDisclosure) {
            ++result.counts.self_disclosure;
        } else {
            ++result.counts.non_self_disclosure;
        }
        result.verdicts.push_back({posts[i].id, std::move(*parsed[i])});
    }
    log::info("detection: " + std::to_string(result.counts.self_disclosure) + " self-disclosure, " +
              std::to_string(result.counts.non_self_disclosure) + " non-self-disclosure, " +
              std::to_string(result.failures.size()) + " unresolved");
    return result;
}

// ---------------------------------------------------------------------------
// Stage artifacts: labels.jsonl and failures.jsonl

inline std::string serialize_labels(std::span<const LabeledVerdict> verdicts) {
    std::string out;
    for (const auto& v : verdicts) {
        nlohmann::ordered_json obj;
        obj["id"] = v.id;
        obj["label"] = label_token(v.verdict.label.value);
        obj["source"] = "model";
        obj["raw"] = v.verdict.raw_text;
        out += obj.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out += '\n';
    }
    return out;
}

inline std::string serialize_failures(std::span<const DetectionFailure> failures) {
    std::string out;
    for (const auto& f : failures) {
        nlohmann::ordered_json obj;
        obj["id"] = f.id;
        obj["raw"] = f.raw;
        obj["reason"] = f.reason;
        out += obj.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out += '\n';
    }
    return out;
}

inline LabelMap parse_labels(std::string_view content) {
    LabelMap labels;
    std::size_t line_no = 0;
    for (auto line : text::lines(content)) {
        ++line_no;
        if (text::blank(line)) continue;
        const auto obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("id") || !obj.contains("label")) {
            throw Error(ErrorCode::MalformedRecord, std::to_string(line_no), "label record needs id and label");
        }
        const auto value = parse_label_token(obj["label"].get<std::string>());
        if (!value) throw Error(ErrorCode::MalformedRecord, std::to_string(line_no), "label must be yes or no");
        const bool model = obj.value("source", std::string("model")) == "model";
        labels.emplace(obj["id"].get<std::string>(), DisclosureLabel{*value, model ? LabelSource::Model : LabelSource::Human});
    }
    return labels;
}

} // namespace dvsupport

#endif // DVSUPPORT_DETECT_HPP
