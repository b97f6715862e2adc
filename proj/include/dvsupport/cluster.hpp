#ifndef DVSUPPORT_CLUSTER_HPP
#define DVSUPPORT_CLUSTER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dvsupport/error.hpp"
#include "dvsupport/matrix.hpp"

/**
 * @file cluster.hpp
 *
 * @brief Density-based hierarchical clustering over a reduced layout.
 *
 * Pipeline: core distances -> Prim MST over the implicit mutual-reachability
 * graph -> single-linkage merge order -> condensed tree pruned by
 * min_cluster_size -> excess-of-mass selection of flat clusters.
 */

namespace dvsupport {

struct ClusterParams {
    std::size_t min_cluster_size = 20;
    std::size_t min_samples = 20;
};

inline void validate(const ClusterParams& p) {
    if (p.min_cluster_size < 2) throw Error(ErrorCode::InvalidArgument, "min_cluster_size must be at least 2");
    if (p.min_samples < 2) throw Error(ErrorCode::InvalidArgument, "min_samples must be at least 2");
}

/// Distance to the (min_samples - 1)-th nearest other point. The point itself
/// is its own 0th neighbor, so min_samples = 2 gives the nearest-other distance.
inline std::vector<double> core_distances(const Matrix& points, std::size_t min_samples) {
    const std::size_t n = points.rows();
    if (min_samples == 0) throw Error(ErrorCode::InvalidArgument, "min_samples must be positive");
    if (n <= min_samples) {
        throw Error(ErrorCode::TooFewPoints, std::to_string(n), "need more than min_samples=" + std::to_string(min_samples) + " points");
    }
    std::vector<double> core(n, 0.0);
    if (min_samples == 1) return core;
    std::vector<double> others(n - 1);
    const auto rank = static_cast<std::ptrdiff_t>(min_samples - 2);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t w = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) others[w++] = euclidean(points.row(i), points.row(j));
        }
        std::nth_element(others.begin(), others.begin() + rank, others.end());
        core[i] = others[static_cast<std::size_t>(rank)];
    }
    return core;
}

constexpr double mutual_reachability(double distance, double core_a, double core_b) {
    return std::max({core_a, core_b, distance});
}

struct MstEdge {
    std::size_t a;  // a < b
    std::size_t b;
    double weight;

    bool operator==(const MstEdge&) const = default;
};

/**
 * Prim's algorithm on an implicit complete graph, O(n^2) time and O(n) memory.
 * `weight(i, j)` must be symmetric. Among equal candidate weights the smaller
 * (min, max) vertex pair wins, which makes the edge set deterministic.
 */
template <class WeightFn>
std::vector<MstEdge> prim_mst(std::size_t n, WeightFn&& weight) {
    std::vector<MstEdge> edges;
    if (n < 2) return edges;
    edges.reserve(n - 1);
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> best(n, kInf);
    std::vector<std::size_t> from(n, 0);
    std::vector<char> in_tree(n, 0);

    auto pair_of = [](std::size_t u, std::size_t v) { return std::make_pair(std::min(u, v), std::max(u, v)); };
    std::size_t current = 0;
    in_tree[0] = 1;
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t next = n;
        for (std::size_t v = 0; v < n; ++v) {
            if (in_tree[v]) continue;
            const double w = weight(current, v);
            if (w < best[v] || (w == best[v] && pair_of(current, v) < pair_of(from[v], v))) {
                best[v] = w;
                from[v] = current;
            }
            if (next == n || best[v] < best[next] ||
                (best[v] == best[next] && pair_of(from[v], v) < pair_of(from[next], next))) {
                next = v;
            }
        }
        in_tree[next] = 1;
        const auto [lo, hi] = pair_of(from[next], next);
        edges.push_back({lo, hi, best[next]});
        current = next;
    }
    return edges;
}

/// MST of the mutual-reachability graph of `points` under `cores`.
inline std::vector<MstEdge> mst(const Matrix& points, const std::vector<double>& cores) {
    if (points.rows() < 2) throw Error(ErrorCode::TooFewPoints, std::to_string(points.rows()), "need at least two points");
    if (cores.size() != points.rows()) throw Error(ErrorCode::InvalidArgument, "one core distance per point required");
    return prim_mst(points.rows(), [&](std::size_t i, std::size_t j) {
        return mutual_reachability(euclidean(points.row(i), points.row(j)), cores[i], cores[j]);
    });
}

// ---------------------------------------------------------------------------
// Condensed tree

inline constexpr double kMinSplitDistance = 1e-12;

inline double lambda_of(double distance) { return 1.0 / std::max(distance, kMinSplitDistance); }

struct CondensedNode {
    int parent = -1;
    double lambda_birth = 0.0;
    double lambda_death = 0.0;
    std::size_t size = 0;
    std::vector<int> children;
};

struct PointExit {
    int node = 0;
    double lambda = 0.0;
};

/// Node 0 is the root. Child ids are always larger than their parent's.
struct CondensedTree {
    std::size_t n_points = 0;
    std::vector<CondensedNode> nodes;
    std::vector<PointExit> exits;  // indexed by point
};

namespace detail {

struct Dendrogram {
    // Internal node k (id n + k) merges left[k] and right[k] at distance[k].
    std::vector<std::size_t> left, right, size;
    std::vector<double> distance;
};

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void unite(std::size_t into, std::size_t other) { parent_[other] = into; }

private:
    std::vector<std::size_t> parent_;
};

inline Dendrogram single_linkage(std::size_t n, std::vector<MstEdge> edges) {
    std::sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) {
        return std::tie(x.weight, x.a, x.b) < std::tie(y.weight, y.a, y.b);
    });
    Dendrogram d;
    UnionFind uf(n);
    std::vector<std::size_t> node_of(n);
    std::iota(node_of.begin(), node_of.end(), 0);
    auto size_of = [&](std::size_t node) { return node < n ? std::size_t{1} : d.size[node - n]; };
    for (const auto& e : edges) {
        const std::size_t ra = uf.find(e.a);
        const std::size_t rb = uf.find(e.b);
        if (ra == rb) throw Error(ErrorCode::InvalidArgument, "edge list contains a cycle");
        const std::size_t na = node_of[ra];
        const std::size_t nb = node_of[rb];
        d.left.push_back(na);
        d.right.push_back(nb);
        d.distance.push_back(e.weight);
        d.size.push_back(size_of(na) + size_of(nb));
        uf.unite(ra, rb);
        node_of[ra] = n + d.left.size() - 1;
    }
    return d;
}

} // namespace detail

/**
 * Condenses the single-linkage hierarchy of `edges` (a spanning tree over
 * n_points). Walking down from the root, a merge is a true split only when
 * both sides hold at least min_cluster_size points; otherwise the smaller
 * side's points leave the current cluster at lambda = 1 / distance.
 */
inline CondensedTree condense(std::size_t n_points, const std::vector<MstEdge>& edges, std::size_t min_cluster_size) {
    if (n_points == 0) throw Error(ErrorCode::TooFewPoints, "0", "empty input");
    if (edges.size() + 1 != n_points) throw Error(ErrorCode::InvalidArgument, "edges must form a spanning tree");
    const std::size_t n = n_points;
    const detail::Dendrogram dendro = detail::single_linkage(n, edges);

    CondensedTree tree;
    tree.n_points = n;
    tree.exits.assign(n, PointExit{});
    tree.nodes.push_back(CondensedNode{-1, 0.0, 0.0, n, {}});
    if (n == 1) {
        tree.exits[0] = {0, 0.0};
        return tree;
    }

    auto size_of = [&](std::size_t node) { return node < n ? std::size_t{1} : dendro.size[node - n]; };
    auto exit_subtree = [&](std::size_t start, int cluster, double lambda) {
        std::vector<std::size_t> stack{start};
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            if (node < n) {
                tree.exits[node] = {cluster, lambda};
            } else {
                stack.push_back(dendro.right[node - n]);
                stack.push_back(dendro.left[node - n]);
            }
        }
    };

    // (dendrogram node, condensed cluster it belongs to)
    std::vector<std::pair<std::size_t, int>> work{{2 * n - 2, 0}};
    while (!work.empty()) {
        const auto [node, cluster] = work.back();
        work.pop_back();
        if (node < n) {
            // A lone point reached directly (only when min_cluster_size <= 1).
            tree.exits[node] = {cluster, tree.nodes[static_cast<std::size_t>(cluster)].lambda_birth};
            continue;
        }
        const std::size_t k = node - n;
        const double lambda = lambda_of(dendro.distance[k]);
        const std::size_t left = dendro.left[k];
        const std::size_t right = dendro.right[k];
        const bool left_big = size_of(left) >= min_cluster_size;
        const bool right_big = size_of(right) >= min_cluster_size;

        if (left_big && right_big) {
            for (std::size_t child : {left, right}) {
                const int id = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back(CondensedNode{cluster, lambda, 0.0, size_of(child), {}});
                tree.nodes[static_cast<std::size_t>(cluster)].children.push_back(id);
                work.emplace_back(child, id);
            }
        } else if (!left_big && !right_big) {
            exit_subtree(left, cluster, lambda);
            exit_subtree(right, cluster, lambda);
        } else if (!left_big) {
            exit_subtree(left, cluster, lambda);
            work.emplace_back(right, cluster);
        } else {
            exit_subtree(right, cluster, lambda);
            work.emplace_back(left, cluster);
        }
    }

    for (auto& node : tree.nodes) node.lambda_death = node.lambda_birth;
    for (const auto& e : tree.exits) {
        auto& node = tree.nodes[static_cast<std::size_t>(e.node)];
        node.lambda_death = std::max(node.lambda_death, e.lambda);
    }
    for (auto& node : tree.nodes) {
        for (int c : node.children) node.lambda_death = std::max(node.lambda_death, tree.nodes[static_cast<std::size_t>(c)].lambda_birth);
    }
    return tree;
}

/// Excess of mass of every condensed node: each point contributes the lambda
/// span it spends in the node, whether it leaves by exiting or by moving into
/// a child cluster.
inline std::vector<double> stabilities(const CondensedTree& tree) {
    std::vector<double> s(tree.nodes.size(), 0.0);
    for (const auto& e : tree.exits) {
        const auto node = static_cast<std::size_t>(e.node);
        s[node] += e.lambda - tree.nodes[node].lambda_birth;
    }
    for (std::size_t c = 0; c < tree.nodes.size(); ++c) {
        for (int child : tree.nodes[c].children) {
            const auto& ch = tree.nodes[static_cast<std::size_t>(child)];
            s[c] += static_cast<double>(ch.size) * (ch.lambda_birth - tree.nodes[c].lambda_birth);
        }
    }
    return s;
}

struct ClusterModel {
    std::vector<int> labels;          // -1 noise, else 0..K-1 by decreasing size
    std::vector<double> stabilities;  // per label
    std::vector<std::size_t> sizes;   // per label
    std::vector<int> cluster_nodes;   // condensed node behind each label
    std::vector<double> lambda_exit;  // per point
    std::vector<MstEdge> mst;
    CondensedTree tree;

    std::size_t cluster_count() const { return sizes.size(); }
};

/**
 * Excess-of-mass selection, bottom-up: a node is kept iff its own stability
 * exceeds the summed stability of its selected descendants. The root is never
 * selected, so a tree without a true split labels everything noise.
 */
inline ClusterModel extract(const CondensedTree& tree) {
    const std::size_t m = tree.nodes.size();
    const std::vector<double> stab = stabilities(tree);
    std::vector<char> selected(m, 0);
    std::vector<double> subtree(m, 0.0);

    auto deselect_descendants = [&](std::size_t root) {
        std::vector<int> stack(tree.nodes[root].children);
        while (!stack.empty()) {
            const auto c = static_cast<std::size_t>(stack.back());
            stack.pop_back();
            selected[c] = 0;
            for (int g : tree.nodes[c].children) stack.push_back(g);
        }
    };
    // Children always have larger ids than parents.
    for (std::size_t c = m; c-- > 1;) {
        const auto& node = tree.nodes[c];
        double children_sum = 0.0;
        for (int ch : node.children) children_sum += subtree[static_cast<std::size_t>(ch)];
        if (node.children.empty() || stab[c] > children_sum) {
            selected[c] = 1;
            subtree[c] = stab[c];
            deselect_descendants(c);
        } else {
            subtree[c] = children_sum;
        }
    }

    ClusterModel model;
    model.tree = tree;
    model.labels.assign(tree.n_points, -1);
    model.lambda_exit.resize(tree.n_points);
    std::vector<int> owner(tree.n_points, -1);
    for (std::size_t p = 0; p < tree.n_points; ++p) {
        model.lambda_exit[p] = tree.exits[p].lambda;
        for (int c = tree.exits[p].node; c > 0; c = tree.nodes[static_cast<std::size_t>(c)].parent) {
            if (selected[static_cast<std::size_t>(c)]) {
                owner[p] = c;
                break;
            }
        }
    }

    std::vector<std::size_t> counts(m, 0);
    for (int o : owner) {
        if (o > 0) ++counts[static_cast<std::size_t>(o)];
    }
    std::vector<int> chosen;
    for (std::size_t c = 1; c < m; ++c) {
        if (selected[c] && counts[c] > 0) chosen.push_back(static_cast<int>(c));
    }
    std::sort(chosen.begin(), chosen.end(), [&](int x, int y) {
        const auto ux = static_cast<std::size_t>(x);
        const auto uy = static_cast<std::size_t>(y);
        if (counts[ux] != counts[uy]) return counts[ux] > counts[uy];
        if (tree.nodes[ux].lambda_birth != tree.nodes[uy].lambda_birth) return tree.nodes[ux].lambda_birth < tree.nodes[uy].lambda_birth;
        return x < y;
    });
    std::vector<int> label_of(m, -1);
    for (std::size_t l = 0; l < chosen.size(); ++l) {
        const auto c = static_cast<std::size_t>(chosen[l]);
        label_of[c] = static_cast<int>(l);
        model.cluster_nodes.push_back(chosen[l]);
        model.sizes.push_back(counts[c]);
        model.stabilities.push_back(stab[c]);
    }
    for (std::size_t p = 0; p < tree.n_points; ++p) {
        if (owner[p] > 0) model.labels[p] = label_of[static_cast<std::size_t>(owner[p])];
    }
    return model;
}

/// Full clustering of a layout.
inline ClusterModel hdbscan(const Matrix& points, const ClusterParams& params) {
    validate(params);
    const std::vector<double> cores = core_distances(points, params.min_samples);
    std::vector<MstEdge> tree_edges = mst(points, cores);
    ClusterModel model = extract(condense(points.rows(), tree_edges, params.min_cluster_size));
    model.mst = std::move(tree_edges);
    return model;
}

} // namespace dvsupport

#endif // DVSUPPORT_CLUSTER_HPP
