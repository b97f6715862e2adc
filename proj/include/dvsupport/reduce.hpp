#ifndef DVSUPPORT_REDUCE_HPP
#define DVSUPPORT_REDUCE_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "dvsupport/error.hpp"
#include "dvsupport/log.hpp"
#include "dvsupport/matrix.hpp"
#include "dvsupport/random.hpp"

/**
 * @file reduce.hpp
 *
 * @brief Manifold reduction of the embedding matrix, from an exact kNN graph
 * to a stochastic layout optimization.
 */

namespace dvsupport {

// ---------------------------------------------------------------------------
// Exact kNN

struct KnnGraph {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<std::size_t> indices;  // n * k, row-major
    std::vector<double> distances;     // n * k, ascending per row

    std::span<const std::size_t> neighbors(std::size_t i) const { return {indices.data() + i * k, k}; }
    std::span<const double> row_distances(std::size_t i) const { return {distances.data() + i * k, k}; }
};

namespace detail {

template <class Fn>
void parallel_rows(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads <= 1 || n < 2 * threads) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace detail

/// Exact Euclidean k nearest neighbors, excluding the point itself. Ties are
/// broken by the smaller index. Rows are independent, so `threads` > 1 gives
/// the same result as the sequential scan.
inline KnnGraph knn(const Matrix& data, std::size_t k, unsigned threads = 1) {
    const std::size_t n = data.rows();
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    if (n <= k) {
        throw Error(ErrorCode::TooFewPoints, std::to_string(n), "need more than k=" + std::to_string(k) + " points");
    }
    KnnGraph g;
    g.n = n;
    g.k = k;
    g.indices.resize(n * k);
    g.distances.resize(n * k);
    detail::parallel_rows(n, threads, [&](std::size_t i) {
        std::vector<std::pair<double, std::size_t>> candidates;
        candidates.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) candidates.emplace_back(euclidean(data.row(i), data.row(j)), j);
        }
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end());
        for (std::size_t r = 0; r < k; ++r) {
            g.distances[i * k + r] = candidates[r].first;
            g.indices[i * k + r] = candidates[r].second;
        }
    });
    return g;
}

// ---------------------------------------------------------------------------
// Bandwidth calibration

struct Bandwidths {
    std::vector<double> rho;
    std::vector<double> sigma;
};

inline constexpr int kBandwidthIterations = 64;
inline constexpr double kBandwidthTolerance = 1e-5;
inline constexpr double kMinBandwidthScale = 1e-3;

/// Σ_j exp(-max(0, d_j - rho) / sigma) over one kNN row.
inline double membership_sum(std::span<const double> row, double rho, double sigma) {
    double sum = 0.0;
    for (double d : row) sum += std::exp(-std::max(0.0, d - rho) / sigma);
    return sum;
}

/**
 * For each point: rho is the smallest strictly positive neighbor distance and
 * sigma is found by bisection so that membership_sum() equals log2(k).
 * sigma is floored at 1e-3 times the mean neighbor distance of the row (the
 * mean over all rows when the row is all zeros).
 */
inline Bandwidths smooth_knn(const KnnGraph& graph) {
    const double target = std::log2(static_cast<double>(graph.k));
    Bandwidths out;
    out.rho.assign(graph.n, 0.0);
    out.sigma.assign(graph.n, 1.0);

    double global_mean = 0.0;
    for (double d : graph.distances) global_mean += d;
    if (!graph.distances.empty()) global_mean /= static_cast<double>(graph.distances.size());

    for (std::size_t i = 0; i < graph.n; ++i) {
        const auto row = graph.row_distances(i);
        double rho = 0.0;
        for (double d : row) {
            if (d > 0.0) {
                rho = d;
                break;
            }
        }

        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double mid = 1.0;
        for (int iter = 0; iter < kBandwidthIterations; ++iter) {
            const double sum = membership_sum(row, rho, mid);
            if (std::abs(sum - target) < kBandwidthTolerance) break;
            if (sum > target) {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                mid = std::isinf(hi) ? mid * 2.0 : (lo + hi) / 2.0;
            }
        }

        double row_mean = 0.0;
        for (double d : row) row_mean += d;
        row_mean /= static_cast<double>(row.size());
        const double floor = kMinBandwidthScale * (row_mean > 0.0 ? row_mean : global_mean);
        out.rho[i] = rho;
        out.sigma[i] = std::max(mid, floor);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fuzzy union

struct FuzzyEdge {
    std::size_t i;  // i < j
    std::size_t j;
    double weight;  // (0, 1]

    bool operator==(const FuzzyEdge&) const = default;
};

struct FuzzyGraph {
    std::size_t n = 0;
    std::vector<FuzzyEdge> edges;  // sorted by (i, j)
    std::vector<double> rho;
    std::vector<double> sigma;
};

inline double directed_membership(double distance, double rho, double sigma) {
    return std::exp(-std::max(0.0, distance - rho) / sigma);
}

/// Probabilistic union a + b - a*b.
constexpr double fuzzy_or(double a, double b) { return a + b - a * b; }

inline FuzzyGraph fuzzy_union(const KnnGraph& graph, const Bandwidths& bw) {
    struct Directed {
        std::size_t lo, hi;
        bool forward;  // true when the edge points lo -> hi
        double w;
    };
    std::vector<Directed> directed;
    directed.reserve(graph.n * graph.k);
    for (std::size_t i = 0; i < graph.n; ++i) {
        const auto nbrs = graph.neighbors(i);
        const auto dists = graph.row_distances(i);
        for (std::size_t r = 0; r < graph.k; ++r) {
            const std::size_t j = nbrs[r];
            const double w = directed_membership(dists[r], bw.rho[i], bw.sigma[i]);
            directed.push_back({std::min(i, j), std::max(i, j), i < j, w});
        }
    }
    std::sort(directed.begin(), directed.end(), [](const Directed& a, const Directed& b) {
        return std::tie(a.lo, a.hi, a.forward) < std::tie(b.lo, b.hi, b.forward);
    });

    FuzzyGraph out;
    out.n = graph.n;
    out.rho = bw.rho;
    out.sigma = bw.sigma;
    for (std::size_t e = 0; e < directed.size();) {
        double fwd = 0.0;
        double bwd = 0.0;
        const std::size_t lo = directed[e].lo;
        const std::size_t hi = directed[e].hi;
        for (; e < directed.size() && directed[e].lo == lo && directed[e].hi == hi; ++e) {
            (directed[e].forward ? fwd : bwd) = directed[e].w;
        }
        const double w = std::min(1.0, fuzzy_or(fwd, bwd));
        if (w > 0.0) out.edges.push_back({lo, hi, w});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Low-dimensional similarity curve

struct CurveFit {
    double a = 0.0;
    double b = 0.0;
    double residual = 0.0;  // sum of squared errors over the fit grid
    int iterations = 0;
};

inline double low_dim_similarity(double d, double a, double b) { return 1.0 / (1.0 + a * std::pow(d, 2.0 * b)); }

/**
 * Levenberg-Marquardt fit of 1 / (1 + a d^(2b)) to the target that is 1 up to
 * min_dist and decays as exp(-(d - min_dist) / spread) beyond it, sampled at
 * 300 points evenly spaced over (0, 3 * spread].
 */
inline CurveFit fit_ab(double min_dist, double spread) {
    if (!(spread > 0.0) || !(min_dist > 0.0) || !(min_dist < spread * 10.0)) {
        throw Error(ErrorCode::InvalidArgument, "fit_ab requires 0 < min_dist < 10 * spread");
    }
    constexpr int kGrid = 300;
    constexpr int kMaxIterations = 1000;
    std::vector<double> xs(kGrid);
    std::vector<double> ys(kGrid);
    for (int i = 0; i < kGrid; ++i) {
        xs[i] = 3.0 * spread * (i + 1) / kGrid;
        ys[i] = xs[i] <= min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
    }
    auto sse = [&](double a, double b) {
        double s = 0.0;
        for (int i = 0; i < kGrid; ++i) {
            const double r = low_dim_similarity(xs[i], a, b) - ys[i];
            s += r * r;
        }
        return s;
    };

    double a = 1.0;
    double b = 1.0;
    double cost = sse(a, b);
    double damping = 1e-3;
    for (int iter = 1; iter <= kMaxIterations; ++iter) {
        // Normal equations of the 2-parameter problem.
        double jaa = 0.0, jab = 0.0, jbb = 0.0, ga = 0.0, gb = 0.0;
        for (int i = 0; i < kGrid; ++i) {
            const double x = xs[i];
            const double p = std::pow(x, 2.0 * b);
            const double denom = 1.0 + a * p;
            const double f = 1.0 / denom;
            const double r = f - ys[i];
            const double da = -p / (denom * denom);
            const double db = -a * p * 2.0 * std::log(x) / (denom * denom);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }

        bool accepted = false;
        while (damping < 1e12) {
            const double m00 = jaa * (1.0 + damping);
            const double m11 = jbb * (1.0 + damping);
            const double det = m00 * m11 - jab * jab;
            if (det != 0.0 && std::isfinite(det)) {
                const double step_a = -(m11 * ga - jab * gb) / det;
                const double step_b = -(m00 * gb - jab * ga) / det;
                const double na = a + step_a;
                const double nb = b + step_b;
                if (na > 0.0 && nb > 0.0) {
                    const double next = sse(na, nb);
                    if (next <= cost) {
                        const bool converged = std::abs(step_a) <= 1e-12 * (1.0 + std::abs(a)) &&
                                               std::abs(step_b) <= 1e-12 * (1.0 + std::abs(b));
                        const bool flat = cost - next <= 1e-16 * (1.0 + cost);
                        a = na;
                        b = nb;
                        cost = next;
                        damping = std::max(damping / 10.0, 1e-15);
                        accepted = true;
                        if (converged || flat) return {a, b, cost, iter};
                        break;
                    }
                }
            }
            damping *= 10.0;
        }
        if (!accepted) return {a, b, cost, iter};  // no descent direction left: at a minimum
    }
    throw Error(ErrorCode::NonConvergence, "curve fit did not converge in " + std::to_string(kMaxIterations) + " iterations");
}

// ---------------------------------------------------------------------------
// Layout optimization

struct LayoutParams {
    std::size_t n_components = 5;
    std::size_t n_neighbors = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    /// a, b <= 0 means "fit from min_dist and spread".
    double a = 0.0;
    double b = 0.0;
    int epochs = 200;
    double negative_sample_rate = 5.0;
    std::uint64_t seed = 42;
    /// Opt-in multi-threaded SGD. Results stay finite but are no longer
    /// bitwise reproducible.
    bool parallel = false;
    unsigned threads = 0;
};

/// Checks ranges and fills a, b from fit_ab() when unset. Explicit a, b must
/// agree with the fit to within 1e-3.
inline LayoutParams resolve(LayoutParams p) {
    if (p.n_components == 0) throw Error(ErrorCode::InvalidArgument, "n_components must be positive");
    if (p.n_neighbors == 0) throw Error(ErrorCode::InvalidArgument, "n_neighbors must be positive");
    if (p.epochs <= 0) throw Error(ErrorCode::InvalidArgument, "epochs must be positive");
    if (!(p.negative_sample_rate >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative_sample_rate must be >= 0");
    const CurveFit fit = fit_ab(p.min_dist, p.spread);
    if (p.a <= 0.0 || p.b <= 0.0) {
        p.a = fit.a;
        p.b = fit.b;
    } else if (std::abs(p.a - fit.a) > 1e-3 || std::abs(p.b - fit.b) > 1e-3) {
        throw Error(ErrorCode::InvalidArgument, "a, b are inconsistent with min_dist and spread");
    }
    return p;
}

struct Layout {
    Matrix coords;
    std::vector<std::string> row_ids;
};

namespace detail {

inline double clip_gradient(double g) { return std::clamp(g, -4.0, 4.0); }

// Coordinate access: plain in sequential mode, relaxed atomics when several
// threads update the shared embedding.
struct PlainAccess {
    static double load(const double& x) { return x; }
    static void add(double& x, double v) { x += v; }
};

struct RelaxedAccess {
    static double load(const double& x) {
        return std::atomic_ref<double>(const_cast<double&>(x)).load(std::memory_order_relaxed);
    }
    static void add(double& x, double v) {
        std::atomic_ref<double> ref(x);
        ref.store(ref.load(std::memory_order_relaxed) + v, std::memory_order_relaxed);
    }
};

struct EdgeSchedule {
    std::vector<std::size_t> head;
    std::vector<std::size_t> tail;
    std::vector<double> epochs_per_sample;
    std::vector<double> next_sample;
    std::vector<double> epochs_per_negative;
    std::vector<double> next_negative;
};

inline EdgeSchedule make_schedule(const FuzzyGraph& graph, const LayoutParams& p) {
    EdgeSchedule s;
    double max_w = 0.0;
    for (const auto& e : graph.edges) max_w = std::max(max_w, e.weight);
    // Edges too weak to be sampled even once over the run are dropped.
    const double cutoff = max_w / static_cast<double>(p.epochs);
    for (const auto& e : graph.edges) {
        if (e.weight < cutoff) continue;
        const double eps = max_w / e.weight;
        for (int dir = 0; dir < 2; ++dir) {
            s.head.push_back(dir == 0 ? e.i : e.j);
            s.tail.push_back(dir == 0 ? e.j : e.i);
            s.epochs_per_sample.push_back(eps);
        }
    }
    s.next_sample = s.epochs_per_sample;
    s.epochs_per_negative.resize(s.epochs_per_sample.size());
    for (std::size_t e = 0; e < s.epochs_per_sample.size(); ++e) {
        s.epochs_per_negative[e] = p.negative_sample_rate > 0.0 ? s.epochs_per_sample[e] / p.negative_sample_rate
                                                                 : std::numeric_limits<double>::infinity();
    }
    s.next_negative = s.epochs_per_negative;
    return s;
}

template <class Access>
void optimize_edges(Matrix& coords, EdgeSchedule& s, std::size_t begin, std::size_t end, int epoch,
                    double alpha, const LayoutParams& p, Rng& rng) {
    const std::size_t n = coords.rows();
    const std::size_t dim = coords.cols();
    const double a = p.a;
    const double b = p.b;
    const double now = static_cast<double>(epoch);
    std::vector<double> diff(dim);
    for (std::size_t e = begin; e < end; ++e) {
        if (s.next_sample[e] > now) continue;
        auto head = coords.row(s.head[e]);
        auto tail = coords.row(s.tail[e]);

        double d2 = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            diff[d] = Access::load(head[d]) - Access::load(tail[d]);
            d2 += diff[d] * diff[d];
        }
        if (d2 > 0.0) {
            const double coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
            for (std::size_t d = 0; d < dim; ++d) {
                const double g = clip_gradient(coeff * diff[d]) * alpha;
                Access::add(head[d], g);
                Access::add(tail[d], -g);
            }
        }
        s.next_sample[e] += s.epochs_per_sample[e];

        const auto negatives = static_cast<long>((now - s.next_negative[e]) / s.epochs_per_negative[e]);
        for (long q = 0; q < negatives; ++q) {
            const auto other = static_cast<std::size_t>(rng.below(n));
            if (other == s.head[e]) continue;
            auto far = coords.row(other);
            double r2 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                diff[d] = Access::load(head[d]) - Access::load(far[d]);
                r2 += diff[d] * diff[d];
            }
            if (r2 > 0.0) {
                const double coeff = 2.0 * b / ((0.001 + r2) * (a * std::pow(r2, b) + 1.0));
                for (std::size_t d = 0; d < dim; ++d) Access::add(head[d], clip_gradient(coeff * diff[d]) * alpha);
            } else {
                // Coincident points: push apart with the maximal step.
                for (std::size_t d = 0; d < dim; ++d) Access::add(head[d], 4.0 * alpha);
            }
        }
        if (negatives > 0) s.next_negative[e] += static_cast<double>(negatives) * s.epochs_per_negative[e];
    }
}

} // namespace detail

/**
 * Stochastic layout optimization. Coordinates start uniform in [-10, 10];
 * each epoch samples every edge in proportion to its weight, applies the
 * clipped attractive gradient to both endpoints and negative_sample_rate
 * repulsive samples to the head. The learning rate decays linearly from 1.
 */
inline Matrix optimize_layout(const FuzzyGraph& graph, const LayoutParams& params) {
    const LayoutParams p = resolve(params);
    const std::size_t n = graph.n;
    if (n < p.n_components) {
        throw Error(ErrorCode::TooFewPoints, std::to_string(n), "need at least n_components points");
    }
    Rng rng(p.seed);
    Matrix coords(n, p.n_components);
    for (double& x : coords.values()) x = rng.uniform(-10.0, 10.0);

    detail::EdgeSchedule schedule = detail::make_schedule(graph, p);
    const std::size_t edges = schedule.head.size();
    const unsigned threads =
        p.parallel ? (p.threads > 0 ? p.threads : std::max(1u, std::thread::hardware_concurrency())) : 1u;

    for (int epoch = 0; epoch < p.epochs; ++epoch) {
        const double alpha = 1.0 - static_cast<double>(epoch) / static_cast<double>(p.epochs);
        if (threads <= 1) {
            detail::optimize_edges<detail::PlainAccess>(coords, schedule, 0, edges, epoch, alpha, p, rng);
            continue;
        }
        std::vector<std::thread> pool;
        const std::size_t chunk = (edges + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(edges, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back([&, begin, end, t] {
                Rng local(p.seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) * threads + t + 1)));
                detail::optimize_edges<detail::RelaxedAccess>(coords, schedule, begin, end, epoch, alpha, p, local);
            });
        }
        for (auto& th : pool) th.join();
    }
    for (double x : coords.values()) {
        if (!std::isfinite(x)) throw Error(ErrorCode::NonConvergence, "layout produced a non-finite coordinate");
    }
    return coords;
}

/// kNN -> bandwidths -> fuzzy union -> layout. n_neighbors is capped at n-1
/// for small inputs.
inline Layout reduce_embeddings(const Matrix& data, std::vector<std::string> ids, const LayoutParams& params,
                                unsigned knn_threads = 1) {
    if (data.rows() < 2) throw Error(ErrorCode::TooFewPoints, std::to_string(data.rows()), "need at least two points");
    if (!ids.empty() && ids.size() != data.rows()) throw Error(ErrorCode::InvalidArgument, "id count does not match rows");
    std::size_t k = params.n_neighbors;
    if (k >= data.rows()) {
        k = data.rows() - 1;
        log::warn("n_neighbors capped at " + std::to_string(k) + " for " + std::to_string(data.rows()) + " points");
    }
    const KnnGraph graph = knn(data, k, knn_threads);
    const FuzzyGraph fuzzy = fuzzy_union(graph, smooth_knn(graph));
    return {optimize_layout(fuzzy, params), std::move(ids)};
}

} // namespace dvsupport

#endif // DVSUPPORT_REDUCE_HPP
