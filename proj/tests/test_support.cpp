#include <gtest/gtest.h>

#include "support/fixtures.hpp"

using namespace dvsupport;
using fixtures::make_comment;
using fixtures::make_post;

TEST(TopComments, KarmaDescendingThenId) {
    const std::vector<Post> posts = {make_post("p", "t", "", {make_comment("b", "x", 5), make_comment("a", "y", 9)}),
                                     make_post("q", "t", "", {make_comment("c", "z", 3)})};
    const auto top = top_comments(posts);
    ASSERT_EQ(top.size(), 3u);
    EXPECT_EQ(top[0].karma, 9);
    EXPECT_EQ(top[1].karma, 5);
    EXPECT_EQ(top[2].karma, 3);
}

TEST(TopComments, CappedAtTenAndTiesByName) {
    std::vector<Comment> many;
    for (int i = 0; i < 25; ++i) many.push_back(make_comment("c" + std::to_string(100 + i), "x", 1));
    many.push_back(make_comment("b", "x", 7));
    many.push_back(make_comment("a", "x", 7));
    const std::vector<Post> posts = {make_post("p", "t", "", many)};
    const auto top = top_comments(posts);
    ASSERT_EQ(top.size(), 10u);
    EXPECT_EQ(top[0].id, "a");
    EXPECT_EQ(top[1].id, "b");
}

TEST(TopCommentsProperty, SubsetOrderedAndMaximal) {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Post> posts;
        std::vector<Comment> all;
        for (std::size_t p = 0; p < 1 + rng.below(5); ++p) {
            std::vector<Comment> cs;
            for (std::size_t c = 0; c < rng.below(8); ++c) {
                cs.push_back(make_comment("c" + std::to_string(p) + "_" + std::to_string(c), "x", static_cast<std::int64_t>(rng.below(20)) - 5));
                all.push_back(cs.back());
            }
            posts.push_back(make_post("p" + std::to_string(p), "t", "", cs));
        }
        const auto top = top_comments(posts);
        ASSERT_EQ(top.size(), std::min<std::size_t>(10, all.size()));
        for (std::size_t i = 1; i < top.size(); ++i) {
            ASSERT_TRUE(top[i - 1].karma > top[i].karma || (top[i - 1].karma == top[i].karma && top[i - 1].id < top[i].id));
        }
        if (!top.empty()) {
            for (const auto& c : all) {
                const bool in = std::any_of(top.begin(), top.end(), [&](const Comment& t) { return t.id == c.id; });
                if (!in) { ASSERT_LE(c.karma, top.back().karma); }
            }
        }
    }
}

TEST(SupportPrompts, GlobalPromptIsClusterMajor) {
    const std::vector<ClusterComments> cc = {{0, {make_comment("a", "first\nline", 3)}}, {1, {make_comment("b", "second", 2)}}};
    const auto p = build_global_support_prompt(cc);
    EXPECT_EQ(p.comments_included, 2u);
    const auto first = p.prompt.find("Cluster 0:\n- first line");
    const auto second = p.prompt.find("Cluster 1:\n- second");
    ASSERT_NE(first, std::string::npos);
    ASSERT_NE(second, std::string::npos);
    EXPECT_LT(first, second);
}

TEST(SupportPrompts, BudgetDropsWholeComments) {
    std::vector<Comment> cs;
    for (int i = 0; i < 10; ++i) cs.push_back(make_comment("c" + std::to_string(i), std::string(400, 'x'), 10 - i));
    TokenBudget b;
    b.limit = 500;
    const auto p = build_cluster_support_prompt(cs, b);
    EXPECT_LT(p.comments_included, 10u);
    EXPECT_GT(p.comments_included, 0u);
    EXPECT_TRUE(b.admits(p.prompt));
    b.limit = 50;
    EXPECT_THROW(build_cluster_support_prompt(cs, b), Error);
}

TEST(SupportPool, ParsedFromScriptedResponse) {
    const std::vector<ClusterComments> cc = {{0, {make_comment("a", "go to a shelter", 3)}}};
    MockBackend mock([](std::string_view) {
        return std::optional<std::string>(
            "Here you go:\nSupport 1: Emotional support — validation and empathy\nSupport 2: **Legal advice** - lawyers and "
            "custody\nSupport 3: Safety planning: how to leave safely\n");
    });
    Gateway g(mock);
    const auto pool = extract_global_pool(cc, g, "m");
    ASSERT_EQ(pool.size(), 3u);
    EXPECT_EQ(pool[0], (SupportCategory{1, "Emotional support", "validation and empathy"}));
    EXPECT_EQ(pool[1].name, "Legal advice");
    EXPECT_EQ(pool[2].description, "how to leave safely");
}

TEST(SupportPool, DuplicateNamesDroppedAndEmptyRejected) {
    const auto pool = parse_support_pool("Support 1: Therapy — a\nSupport 2: therapy — b\nSupport 3: Hotlines — c\n");
    ASSERT_EQ(pool.size(), 2u);
    EXPECT_EQ(pool[1].id, 2);
    EXPECT_EQ(pool[1].name, "Hotlines");
    try {
        parse_support_pool("nothing useful");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyPool);
    }
}

TEST(ClusterSupports, PhrasesAndEmptyClusterSkipped) {
    const std::vector<ClusterComments> cc = {{0, {make_comment("a", "x", 1)}}, {1, {}}};
    MockBackend mock([](std::string_view) { return std::optional<std::string>("Support 1: therapy\nSupport 2: shelters\n"); });
    Gateway g(mock);
    const auto raw = extract_cluster_supports(cc, g, "m");
    ASSERT_EQ(raw.size(), 2u);
    EXPECT_EQ(raw[0].phrases, (std::vector<std::string>{"therapy", "shelters"}));
    EXPECT_TRUE(raw[1].phrases.empty());
    EXPECT_EQ(g.telemetry().requests, 1u);
}

TEST(Mapping, IdenticalNameMapsAndDisjointPhraseDoesNot) {
    const std::vector<SupportCategory> pool = {{1, "legal advice", "lawyers custody court"}, {2, "emotional support", "empathy"}};
    const std::vector<ClusterSupports> raw = {{0, {"legal advice", "zebra quantum"}}};
    const std::vector<TopicSummary> topics = {{0, "court"}};
    HashingEmbedder e;
    const auto map = map_supports(pool, raw, topics, e);
    ASSERT_EQ(map.clusters.size(), 1u);
    EXPECT_EQ(map.clusters[0].topic, "court");
    EXPECT_EQ(map.clusters[0].supports, (std::vector<int>{1}));
    EXPECT_NEAR(map.clusters[0].best_similarity[0], 1.0, 1e-12);
    EXPECT_EQ(map.clusters[0].unmapped, (std::vector<std::string>{"zebra quantum"}));
}

TEST(MappingProperty, ReferentialIntegrity) {
    Rng rng(43);
    const std::vector<std::string> words = {"shelter", "therapy", "lawyer", "friends", "hotline", "plan", "court", "trust"};
    HashingEmbedder e;
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<SupportCategory> pool;
        for (int i = 0; i < 1 + static_cast<int>(rng.below(5)); ++i) {
            pool.push_back({i + 1, words[rng.below(words.size())] + " " + words[rng.below(words.size())], ""});
        }
        std::vector<ClusterSupports> raw;
        for (int c = 0; c < 3; ++c) {
            ClusterSupports cs{c, {}};
            for (std::size_t p = 0; p < rng.below(5); ++p) cs.phrases.push_back(words[rng.below(words.size())]);
            raw.push_back(cs);
        }
        const auto map = map_supports(pool, raw, {}, e, rng.uniform(0.2, 0.9));
        for (std::size_t c = 0; c < map.clusters.size(); ++c) {
            const auto& entry = map.clusters[c];
            ASSERT_TRUE(std::is_sorted(entry.supports.begin(), entry.supports.end()));
            ASSERT_EQ(std::adjacent_find(entry.supports.begin(), entry.supports.end()), entry.supports.end());
            for (int id : entry.supports) ASSERT_TRUE(id >= 1 && id <= static_cast<int>(pool.size()));
            ASSERT_LE(entry.unmapped.size(), raw[c].phrases.size());
            for (std::size_t p = 0; p < raw[c].phrases.size(); ++p) {
                const bool unmapped = std::find(entry.unmapped.begin(), entry.unmapped.end(), raw[c].phrases[p]) != entry.unmapped.end();
                if (entry.best_similarity[p] >= map.threshold) { ASSERT_FALSE(entry.supports.empty()); }
                if (entry.best_similarity[p] < map.threshold) { ASSERT_TRUE(unmapped); }
            }
        }
    }
}

TEST(SupportJson, PoolAndMappingRoundTrip) {
    const std::vector<SupportCategory> pool = {{1, "a", "x"}, {2, "b", ""}};
    EXPECT_EQ(parse_pool_json(serialize_pool(pool)), pool);
    TopicSupportMap map;
    map.clusters.push_back({0, "t", {1, 2}, {"odd"}, {}});
    const auto back = parse_mapping_json(serialize_mapping(map));
    ASSERT_EQ(back.clusters.size(), 1u);
    EXPECT_EQ(back.clusters[0].supports, (std::vector<int>{1, 2}));
    EXPECT_EQ(back.clusters[0].unmapped, (std::vector<std::string>{"odd"}));
}
