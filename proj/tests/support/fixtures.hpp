#ifndef DVSUPPORT_TESTS_FIXTURES_HPP
#define DVSUPPORT_TESTS_FIXTURES_HPP

// Shared fixtures and independent oracles for the unit and acceptance tests.
// Each oracle uses an algorithm independent of the library code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dvsupport/dvsupport.hpp"

namespace fixtures {

using namespace dvsupport;

inline Post make_post(std::string id, std::string title, std::string body, std::vector<Comment> comments = {},
                      std::optional<DisclosureLabel> label = std::nullopt) {
    Post p;
    p.id = std::move(id);
    p.subreddit = "domesticviolence";
    p.title = std::move(title);
    p.body = std::move(body);
    p.created_utc = 1'650'000'000;
    p.karma = 1;
    p.comments = std::move(comments);
    p.label = label;
    return p;
}

inline Comment make_comment(std::string id, std::string body, std::int64_t karma) {
    return Comment{std::move(id), std::move(body), karma, 1'650'000'100};
}

// ---------------------------------------------------------------------------
// Golden prompt fixture: three posts in two clusters.

inline std::vector<Post> golden_posts() {
    return {
        make_post("g1", "I finally left", "After five years I packed a bag and went to my sister's place.",
                  {make_comment("c1", "You are so brave. Please reach out to a local shelter.", 12),
                   make_comment("c2", "Document everything and talk to a lawyer about custody.", 30)}),
        make_post("g2", "Court date next week", "My ex is contesting the protective order.",
                  {make_comment("c3", "Bring copies of every message he sent you.", 8)}),
        make_post("g3", "Is this normal?", "",
                  {make_comment("c4", "Therapy helped me see the pattern. You deserve support.", 21),
                   make_comment("c5", "Call the hotline, they can help you plan.", 21)}),
    };
}

inline ClusterModel golden_model() {
    ClusterModel m;
    m.labels = {0, 0, 1};
    m.sizes = {2, 1};
    m.stabilities = {1.0, 0.5};
    return m;
}

inline std::filesystem::path golden_dir() { return DVSUPPORT_GOLDEN_DIR; }

inline bool regenerate_golden() {
    const char* flag = std::getenv("DVSUPPORT_REGEN_GOLDEN");
    return flag != nullptr && std::string(flag) == "1";
}

/// Rendered prompts for the golden fixture, keyed by golden file name.
inline std::vector<std::pair<std::string, std::string>> golden_prompts() {
    const auto posts = golden_posts();
    const auto model = golden_model();
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back("detection.txt", build_detection_prompt(posts[0]));
    out.emplace_back("detection_title_only.txt", build_detection_prompt(posts[2]));
    out.emplace_back("topic_summary.txt", build_topic_prompt(assemble_documents(posts, model)));
    const auto comments = top_comments_by_cluster(posts, model);
    out.emplace_back("support_global.txt", build_global_support_prompt(comments).prompt);
    out.emplace_back("support_cluster.txt", build_cluster_support_prompt(comments[0].comments).prompt);
    return out;
}

// ---------------------------------------------------------------------------
// Bookkeeping fixture: 9,013 engaged posts of which 700 carry
// human labels (350/350); 487 extra posts have no comments.

struct BookkeepingFixture {
    std::vector<Post> raw;          // before engagement filtering
    LabelMap human;                 // 700 labels
    LabelMap predictions;           // 8,313 model labels, 2,712 yes
};

inline BookkeepingFixture bookkeeping_fixture() {
    BookkeepingFixture f;
    constexpr std::size_t kEngaged = 9013;
    constexpr std::size_t kSilent = 487;
    f.raw.reserve(kEngaged + kSilent);
    for (std::size_t i = 0; i < kEngaged + kSilent; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "t%05zu", i);
        Post p = make_post(id, "post " + std::string(id), "");
        if (i < kEngaged) p.comments.push_back(make_comment("c" + std::string(id), "reply", 1));
        f.raw.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < 700; ++i) {
        f.human.emplace(f.raw[i].id, DisclosureLabel{i < 350 ? Disclosure::SelfDisclosure : Disclosure::NonSelfDisclosure, LabelSource::Human});
    }
    for (std::size_t i = 700; i < kEngaged; ++i) {
        f.predictions.emplace(f.raw[i].id,
                              DisclosureLabel{i < 700 + 2712 ? Disclosure::SelfDisclosure : Disclosure::NonSelfDisclosure, LabelSource::Model});
    }
    return f;
}

/// 700 labeled posts with distinct text, balanced 350/350.
inline std::vector<Post> labeled_700() {
    std::vector<Post> posts;
    for (std::size_t i = 0; i < 700; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "L%03zu", i);
        posts.push_back(make_post(id, "labeled post " + std::string(id), "body text " + std::to_string(i * 7919 % 1000),
                                  {make_comment("k" + std::string(id), "reply", 1)},
                                  DisclosureLabel{i % 2 == 0 ? Disclosure::SelfDisclosure : Disclosure::NonSelfDisclosure, LabelSource::Human}));
    }
    return posts;
}

// ---------------------------------------------------------------------------
// Oracles

/// Kruskal over all pairs with an independent disjoint-set; returns total weight.
inline double kruskal_weight(const Matrix& points, const std::vector<double>& cores) {
    const std::size_t n = points.rows();
    struct E {
        double w;
        std::size_t a, b;
    };
    std::vector<E> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = 0.0;
            for (std::size_t c = 0; c < points.cols(); ++c) d += (points(i, c) - points(j, c)) * (points(i, c) - points(j, c));
            d = std::sqrt(d);
            edges.push_back({std::max({d, cores[i], cores[j]}), i, j});
        }
    }
    std::sort(edges.begin(), edges.end(), [](const E& x, const E& y) { return x.w < y.w; });
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto root = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x];
        return x;
    };
    double total = 0.0;
    std::vector<double> chosen;
    for (const auto& e : edges) {
        const auto ra = root(e.a);
        const auto rb = root(e.b);
        if (ra == rb) continue;
        parent[ra] = rb;
        chosen.push_back(e.w);
    }
    std::sort(chosen.begin(), chosen.end());
    for (double w : chosen) total += w;
    return total;
}

inline double sorted_sum(std::vector<double> w) {
    std::sort(w.begin(), w.end());
    double total = 0.0;
    for (double x : w) total += x;
    return total;
}

/// Core distance by sorting every other distance.
inline std::vector<double> core_oracle(const Matrix& points, std::size_t min_samples) {
    std::vector<double> out;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < points.rows(); ++j) {
            if (j != i) d.push_back(euclidean(points.row(i), points.row(j)));
        }
        std::sort(d.begin(), d.end());
        out.push_back(d[min_samples - 2]);
    }
    return out;
}

struct MetricOracle {
    double accuracy, precision, recall, f1;
};

inline MetricOracle metric_oracle(double tp, double fp, double fn, double tn) {
    MetricOracle m{};
    m.accuracy = (tp + tn) / (tp + fp + fn + tn);
    m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    m.f1 = tp > 0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    return m;
}

inline Matrix random_points(Rng& rng, std::size_t n, std::size_t dim, double lo = 0.0, double hi = 1.0) {
    Matrix m(n, dim);
    for (double& v : m.values()) v = rng.uniform(lo, hi);
    return m;
}

/// Gaussian blobs around well separated centres; returns points and labels.
inline std::pair<Matrix, std::vector<int>> gaussian_blobs(Rng& rng, std::size_t blobs, std::size_t per_blob, std::size_t dim,
                                                          double separation, double stddev) {
    Matrix m(blobs * per_blob, dim);
    std::vector<int> labels;
    for (std::size_t b = 0; b < blobs; ++b) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            const std::size_t row = b * per_blob + i;
            for (std::size_t d = 0; d < dim; ++d) m(row, d) = (d == b % dim ? separation * static_cast<double>(b + 1) : 0.0) + stddev * rng.normal();
            labels.push_back(static_cast<int>(b));
        }
    }
    return {m, labels};
}

/// Planted 3-blob synthetic corpus through the offline pipeline to 5-d and
/// HDBSCAN(10, 10); returns the ARI against the planted cluster ids.
inline double planted_recovery_ari(std::uint64_t seed) {
    SynthSpec spec;
    spec.blobs = 3;
    spec.posts_per_blob = 50;
    spec.seed = seed;
    const SynthCorpus corpus = synth_corpus(spec);
    HashingEmbedder embedder;
    const EmbeddingMatrix m = embed_corpus(corpus.posts, embedder);
    LayoutParams lp;
    lp.seed = seed;
    const Layout layout = reduce_embeddings(m.to_matrix(), m.row_ids, lp);
    const ClusterModel model = hdbscan(layout.coords, {10, 10});
    return adjusted_rand_index(model.labels, corpus.planted_clusters);
}

} // namespace fixtures

#endif // DVSUPPORT_TESTS_FIXTURES_HPP
