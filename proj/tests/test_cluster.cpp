#include <gtest/gtest.h>

#include "support/fixtures.hpp"

using namespace dvsupport;

namespace {

Matrix line_points(std::initializer_list<double> xs) {
    Matrix m(xs.size(), 1);
    std::size_t i = 0;
    for (double x : xs) m(i++, 0) = x;
    return m;
}

} // namespace

TEST(CoreDistance, SecondNearestOnALine) {
    const auto cores = core_distances(line_points({0, 1, 2, 3, 4}), 3);
    EXPECT_EQ(cores, (std::vector<double>{2, 1, 1, 1, 2}));
    EXPECT_THROW(core_distances(line_points({0, 1, 2}), 3), Error);
}

TEST(CoreDistanceProperty, MatchesSortingOracle) {
    Rng rng(12);
    for (int t = 0; t < 10; ++t) {
        const Matrix pts = fixtures::random_points(rng, 30, 2);
        const std::size_t ms = 2 + rng.below(8);
        EXPECT_EQ(core_distances(pts, ms), fixtures::core_oracle(pts, ms));
    }
}

TEST(MutualReachability, MaxOfThree) {
    EXPECT_EQ(mutual_reachability(1.0, 2.0, 0.5), 2.0);
    EXPECT_EQ(mutual_reachability(3.0, 2.0, 0.5), 3.0);
    EXPECT_EQ(mutual_reachability(0.1, 0.2, 0.7), 0.7);
}

TEST(Mst, ThreePointsOnALine) {
    const auto edges = mst(line_points({0.0, 1.0, 3.0}), {0.0, 0.0, 0.0});
    ASSERT_EQ(edges.size(), 2u);
    EXPECT_EQ(edges[0], (MstEdge{0, 1, 1.0}));
    EXPECT_EQ(edges[1], (MstEdge{1, 2, 2.0}));
}

TEST(MstProperty, WeightEqualsKruskal) {
    Rng rng(13);
    for (int t = 0; t < 10; ++t) {
        const Matrix pts = fixtures::random_points(rng, 35, 3);
        const auto cores = core_distances(pts, 4);
        const auto edges = mst(pts, cores);
        ASSERT_EQ(edges.size(), pts.rows() - 1);
        std::vector<double> w;
        for (const auto& e : edges) w.push_back(e.weight);
        EXPECT_NEAR(fixtures::sorted_sum(w), fixtures::kruskal_weight(pts, cores), 1e-9);
    }
}

TEST(Hdbscan, TwoBlobsRecovered) {
    Rng rng(14);
    const auto [pts, truth] = fixtures::gaussian_blobs(rng, 2, 25, 2, 10.0, 0.5);
    const auto model = hdbscan(pts, {5, 5});
    EXPECT_EQ(model.cluster_count(), 2u);
    EXPECT_DOUBLE_EQ(adjusted_rand_index(model.labels, truth), 1.0);
}

TEST(Hdbscan, UniformNoiseHasNoClusters) {
    Rng rng(15);
    const Matrix pts = fixtures::random_points(rng, 30, 2);
    const auto model = hdbscan(pts, {20, 20});
    EXPECT_EQ(model.cluster_count(), 0u);
    for (int l : model.labels) EXPECT_EQ(l, -1);
}

TEST(Hdbscan, ParameterValidation) {
    Rng rng(15);
    const Matrix pts = fixtures::random_points(rng, 30, 2);
    EXPECT_THROW(hdbscan(pts, {1, 5}), Error);
    EXPECT_THROW(hdbscan(pts, {5, 1}), Error);
    EXPECT_THROW(hdbscan(pts, {5, 40}), Error);
}

TEST(HdbscanProperty, ModelInvariants) {
    Rng rng(16);
    for (int t = 0; t < 12; ++t) {
        const std::size_t blobs = 1 + rng.below(4);
        auto [pts, truth] = fixtures::gaussian_blobs(rng, blobs, 15 + rng.below(20), 3, 4.0 + rng.uniform(0.0, 6.0), 0.6);
        const std::size_t mcs = 4 + rng.below(8);
        const auto model = hdbscan(pts, {mcs, 2 + rng.below(6)});
        std::vector<std::size_t> counted(model.cluster_count(), 0);
        for (int l : model.labels) {
            ASSERT_GE(l, -1);
            ASSERT_LT(l, static_cast<int>(model.cluster_count()));
            if (l >= 0) ++counted[static_cast<std::size_t>(l)];
        }
        ASSERT_EQ(counted, model.sizes);
        for (std::size_t c = 0; c < model.cluster_count(); ++c) {
            ASSERT_GE(model.sizes[c], mcs);
            ASSERT_GE(model.stabilities[c], 0.0);
            if (c > 0) { ASSERT_GE(model.sizes[c - 1], model.sizes[c]); }
        }
        ASSERT_EQ(model.mst.size(), pts.rows() - 1);
    }
}

TEST(HdbscanProperty, PermutationEquivariant) {
    Rng rng(18);
    const auto [pts, truth] = fixtures::gaussian_blobs(rng, 3, 20, 2, 8.0, 0.4);
    const auto base = hdbscan(pts, {6, 6});
    std::vector<std::size_t> perm(pts.rows());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    Matrix shuffled(pts.rows(), pts.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        for (std::size_t d = 0; d < pts.cols(); ++d) shuffled(i, d) = pts(perm[i], d);
    }
    const auto moved = hdbscan(shuffled, {6, 6});
    std::vector<int> back(pts.rows());
    for (std::size_t i = 0; i < perm.size(); ++i) back[perm[i]] = moved.labels[i];
    EXPECT_DOUBLE_EQ(adjusted_rand_index(back, base.labels), 1.0);
    EXPECT_EQ(moved.sizes, base.sizes);
}

TEST(Ari, KnownValues) {
    const std::vector<int> a = {0, 0, 1, 1};
    EXPECT_DOUBLE_EQ(adjusted_rand_index(a, std::vector<int>{5, 5, 7, 7}), 1.0);
    EXPECT_NEAR(adjusted_rand_index(a, std::vector<int>{0, 1, 0, 1}), -0.5, 1e-12);
}
