#include <gtest/gtest.h>

#include <filesystem>

#include "support/fixtures.hpp"

using namespace dvsupport;
using fixtures::make_comment;
using fixtures::make_post;

namespace {

std::string record(std::string_view id, std::string_view extra = "") {
    return std::string(R"({"id":")") + std::string(id) +
           R"(","subreddit":"abuse","title":"t","body":"b","created_utc":1,"karma":2,"comments":[{"id":"c","body":"hi","karma":3,"created_utc":4}])" +
           std::string(extra) + "}";
}

void expect_error(ErrorCode code, auto&& fn, std::string_view subject = {}) {
    try {
        fn();
        FAIL() << "expected " << to_string(code);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), code) << e.what();
        if (!subject.empty()) { EXPECT_EQ(e.subject(), subject); }
    }
}

} // namespace

TEST(Corpus, EmptyContentYieldsNoPosts) { EXPECT_TRUE(parse_posts("").empty()); }

TEST(Corpus, RecordWithTwoComments) {
    const std::string line =
        R"({"id":"p1","subreddit":"abuse","title":"t","body":"b","created_utc":1,"karma":2,"comments":[{"id":"c1","body":"x","karma":1,"created_utc":2},{"id":"c2","body":"y","karma":-4,"created_utc":3}]})";
    const auto posts = parse_posts(line + "\n");
    ASSERT_EQ(posts.size(), 1u);
    EXPECT_EQ(posts[0].comments.size(), 2u);
    EXPECT_EQ(posts[0].comments[1].karma, -4);
}

TEST(Corpus, MissingTitleIsMalformedAtLineOne) {
    expect_error(ErrorCode::MalformedRecord, [] { parse_posts(R"({"id":"p","body":"b","comments":[]})"); }, "1");
}

TEST(Corpus, MalformedLineNumberCountsBlankLines) {
    const std::string content = record("a") + "\n\n{not json}\n";
    expect_error(ErrorCode::MalformedRecord, [&] { parse_posts(content); }, "3");
}

TEST(Corpus, DuplicateIdRejected) {
    expect_error(ErrorCode::DuplicateId, [] { parse_posts(record("a") + "\n" + record("a") + "\n"); }, "a");
}

TEST(Corpus, EmptyTextRejected) {
    expect_error(ErrorCode::MalformedRecord, [] { parse_posts(R"({"id":"p","title":"  ","body":"","comments":[]})"); });
}

TEST(Corpus, MissingCommentKarmaReadsAsZero) {
    const auto posts = parse_posts(R"({"id":"p","title":"t","comments":[{"id":"c","body":"x"}]})");
    EXPECT_EQ(posts[0].comments[0].karma, 0);
}

TEST(Corpus, LabelParsedAsHuman) {
    const auto posts = parse_posts(record("a", R"(,"label":"yes")"));
    ASSERT_TRUE(posts[0].label);
    EXPECT_EQ(posts[0].label->value, Disclosure::SelfDisclosure);
    EXPECT_EQ(posts[0].label->source, LabelSource::Human);
    expect_error(ErrorCode::MalformedRecord, [] { parse_posts(record("a", R"(,"label":"maybe")")); });
}

TEST(Corpus, PostTextJoinsTitleAndBody) {
    EXPECT_EQ(post_text(make_post("p", "A", "B")), "A\nB");
    EXPECT_EQ(post_text(make_post("p", "A", "")), "A");
}

TEST(Corpus, FilterEngagedKeepsCommentedPostsInOrder) {
    std::vector<Post> posts;
    const std::size_t counts[] = {0, 1, 3, 0};
    for (std::size_t i = 0; i < 4; ++i) {
        Post p = make_post("p" + std::to_string(i + 1), "t", "b");
        for (std::size_t c = 0; c < counts[i]; ++c) p.comments.push_back(make_comment("c" + std::to_string(c), "x", 0));
        posts.push_back(p);
    }
    const auto r = filter_engaged(posts);
    ASSERT_EQ(r.kept.size(), 2u);
    EXPECT_EQ(r.kept[0].id, "p2");
    EXPECT_EQ(r.kept[1].id, "p3");
    EXPECT_EQ(r.removed, 2u);
    // Idempotent, identity on fully engaged input.
    const auto again = filter_engaged(r.kept);
    EXPECT_EQ(again.kept, r.kept);
    EXPECT_EQ(again.removed, 0u);
}

TEST(Corpus, BookkeepingFixtureFiltersTo9013) {
    const auto f = fixtures::bookkeeping_fixture();
    EXPECT_EQ(filter_engaged(f.raw).kept.size(), 9013u);
}

TEST(Corpus, PartitionSizesOnBookkeepingFixture) {
    const auto f = fixtures::bookkeeping_fixture();
    const auto kept = filter_engaged(f.raw).kept;
    const auto part = partition(kept, f.human);
    EXPECT_EQ(part.labeled.size(), 700u);
    EXPECT_EQ(part.unlabeled.size(), 8313u);
    EXPECT_EQ(count_classes(part.labeled), (ClassCounts{350, 350}));
}

TEST(Corpus, PartitionWithoutLabelsAndUnknownId) {
    const std::vector<Post> posts = {make_post("a", "t", ""), make_post("b", "t", "")};
    const auto part = partition(posts, {});
    EXPECT_TRUE(part.labeled.empty());
    EXPECT_EQ(part.unlabeled.size(), 2u);
    LabelMap bad{{"zzz", {Disclosure::SelfDisclosure, LabelSource::Human}}};
    expect_error(ErrorCode::UnknownId, [&] { partition(posts, bad); }, "zzz");
}

TEST(Corpus, PartitionLogsImbalance) {
    const std::vector<Post> posts = {make_post("a", "t", ""), make_post("b", "t", "")};
    std::vector<std::string> warnings;
    log::ScopedSink sink([&](log::Level level, std::string_view msg) {
        if (level == log::Level::Warning) warnings.emplace_back(msg);
    });
    partition(posts, {{"a", {Disclosure::SelfDisclosure, LabelSource::Human}}});
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("ImbalanceWarning"), std::string::npos);
}

TEST(Corpus, MergeTotalsOnBookkeepingFixture) {
    const auto f = fixtures::bookkeeping_fixture();
    const auto part = partition(filter_engaged(f.raw).kept, f.human);
    const auto merged = merge_annotations(part, f.predictions);
    EXPECT_EQ(merged.size(), 9013u);
    const auto totals = count_classes(merged);
    EXPECT_EQ(totals.self_disclosure, 3062u);
    EXPECT_EQ(totals.non_self_disclosure, 5951u);
}

TEST(Corpus, MergeErrors) {
    const std::vector<Post> posts = {make_post("a", "t", ""), make_post("b", "t", ""), make_post("c", "t", "")};
    const auto part = partition(posts, {{"a", {Disclosure::SelfDisclosure, LabelSource::Human}}});
    expect_error(ErrorCode::CoverageGap, [&] { merge_annotations(part, {{"b", {Disclosure::SelfDisclosure, LabelSource::Model}}}); });
    expect_error(ErrorCode::SourceViolation, [&] {
        merge_annotations(part, {{"a", {Disclosure::SelfDisclosure, LabelSource::Model}},
                                 {"b", {Disclosure::SelfDisclosure, LabelSource::Model}},
                                 {"c", {Disclosure::SelfDisclosure, LabelSource::Model}}});
    });
    expect_error(ErrorCode::SourceViolation, [&] {
        merge_annotations(part, {{"b", {Disclosure::SelfDisclosure, LabelSource::Human}}, {"c", {Disclosure::SelfDisclosure, LabelSource::Model}}});
    });
}

TEST(Corpus, MergeWithNothingUnlabeledIsIdentity) {
    const std::vector<Post> posts = {make_post("a", "t", "", {}, DisclosureLabel{Disclosure::SelfDisclosure, LabelSource::Human})};
    const auto part = partition(posts, human_labels(posts));
    EXPECT_EQ(merge_annotations(part, {}), posts);
}

TEST(CorpusProperty, ConservationAndMergeArithmetic) {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(30);
        std::vector<Post> posts;
        LabelMap human;
        LabelMap predicted;
        for (std::size_t i = 0; i < n; ++i) {
            posts.push_back(make_post("p" + std::to_string(i), "t", "", {make_comment("c", "x", 0)}));
            const auto value = rng.below(2) == 0 ? Disclosure::SelfDisclosure : Disclosure::NonSelfDisclosure;
            if (rng.below(3) == 0) {
                human.emplace(posts.back().id, DisclosureLabel{value, LabelSource::Human});
            } else {
                predicted.emplace(posts.back().id, DisclosureLabel{value, LabelSource::Model});
            }
        }
        log::ScopedSink quiet([](log::Level, std::string_view) {});
        const auto part = partition(posts, human);
        ASSERT_EQ(part.labeled.size() + part.unlabeled.size(), posts.size());
        const auto merged = merge_annotations(part, predicted);
        const auto h = count_classes(human);
        const auto m = count_classes(predicted);
        const auto t = count_classes(merged);
        ASSERT_EQ(t.self_disclosure, h.self_disclosure + m.self_disclosure);
        ASSERT_EQ(t.non_self_disclosure, h.non_self_disclosure + m.non_self_disclosure);
        for (const auto& p : merged) {
            if (human.contains(p.id)) { ASSERT_EQ(p.label->source, LabelSource::Human); }
        }
    }
}

TEST(CorpusProperty, WriteThenLoadRoundTrips) {
    Rng rng(5);
    std::vector<Post> posts;
    for (int i = 0; i < 50; ++i) {
        Post p = make_post("id-" + std::to_string(i), "Title \"quoted\" ü " + std::to_string(rng.next()), i % 3 == 0 ? "" : "line1\nline2\ttab");
        p.karma = static_cast<std::int64_t>(rng.below(1000)) - 500;
        p.created_utc = static_cast<std::int64_t>(rng.next() >> 20);
        for (std::uint64_t c = 0; c < 1 + rng.below(4); ++c) {
            p.comments.push_back(make_comment("c" + std::to_string(c), "comment ✓ " + std::to_string(c), static_cast<std::int64_t>(rng.below(100)) - 50));
        }
        if (i % 4 == 1) p.label = DisclosureLabel{Disclosure::SelfDisclosure, LabelSource::Human};
        if (i % 4 == 2) p.label = DisclosureLabel{Disclosure::NonSelfDisclosure, LabelSource::Model};
        posts.push_back(std::move(p));
    }
    const auto dir = std::filesystem::temp_directory_path() / "dvsupport_corpus_rt";
    std::filesystem::create_directories(dir);
    write_posts(dir / "posts.jsonl", posts);
    EXPECT_EQ(load_posts(dir / "posts.jsonl"), posts);
    std::filesystem::remove_all(dir);
}

TEST(Corpus, DefaultSubredditsAreAdvisory) {
    EXPECT_EQ(default_subreddits().size(), 12u);
    EXPECT_NO_THROW(parse_posts(R"({"id":"p","subreddit":"somewhere_else","title":"t","comments":[]})"));
}
