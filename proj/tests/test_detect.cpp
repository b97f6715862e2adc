#include <gtest/gtest.h>

#include "support/fixtures.hpp"

using namespace dvsupport;
using fixtures::make_post;

TEST(DetectPrompt, TitleAndBodyJoinedByNewline) {
    const auto prompt = build_detection_prompt(make_post("p", "A", "B"));
    EXPECT_TRUE(prompt.starts_with(prompts::detection().instruction + "\n\n"));
    EXPECT_NE(prompt.find("Given a social media post: A\nB, classify"), std::string::npos);
}

TEST(DetectPrompt, TitleOnlyPostUsesTitleAlone) {
    const auto prompt = build_detection_prompt(make_post("p", "Only title", ""));
    EXPECT_NE(prompt.find("post: Only title, classify"), std::string::npos);
}

TEST(DetectPrompt, BlankPostRejected) { EXPECT_THROW(build_detection_prompt(make_post("p", "  ", "")), Error); }

TEST(Verdict, AcceptedForms) {
    EXPECT_EQ(parse_verdict("Yes").label.value, Disclosure::SelfDisclosure);
    EXPECT_EQ(parse_verdict("  no.\n").label.value, Disclosure::NonSelfDisclosure);
    EXPECT_EQ(parse_verdict("\"No.\"").label.value, Disclosure::NonSelfDisclosure);
    EXPECT_EQ(parse_verdict("'yes'!").label.value, Disclosure::SelfDisclosure);
    EXPECT_EQ(parse_verdict("YES").label.source, LabelSource::Model);
    EXPECT_EQ(parse_verdict("Yes").raw_text, "Yes");
}

TEST(Verdict, AmbiguousForms) {
    for (const char* raw : {"It depends", "Yes, because the author", "maybe", "", "yes no", "Yess"}) {
        try {
            parse_verdict(raw);
            FAIL() << raw;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::AmbiguousVerdict) << raw;
        }
    }
}

TEST(VerdictProperty, DecoratedYesNoAlwaysParse) {
    Rng rng(5);
    const std::vector<std::string> pads = {"", " ", "\n", "  \t"};
    const std::vector<std::string> puncts = {"", ".", "!", "."};
    for (int i = 0; i < 400; ++i) {
        const bool yes = rng.below(2) == 0;
        std::string word = yes ? "yes" : "no";
        for (char& c : word) {
            if (rng.below(2) == 0) c = static_cast<char>(c - 'a' + 'A');
        }
        const std::string raw = pads[rng.below(pads.size())] + word + puncts[rng.below(puncts.size())] + pads[rng.below(pads.size())];
        EXPECT_EQ(parse_verdict(raw).label.value, yes ? Disclosure::SelfDisclosure : Disclosure::NonSelfDisclosure) << raw;
    }
}

namespace {

std::vector<Post> three_posts() {
    return {make_post("a", "I was hurt", "x"), make_post("b", "News story", "y"), make_post("c", "Question", "z")};
}

} // namespace

TEST(Classify, AmbiguousRetriedThenSidecar) {
    const auto posts = three_posts();
    int calls_for_c = 0;
    MockBackend mock([&](std::string_view p) -> std::optional<std::string> {
        if (p.find("I was hurt") != std::string_view::npos) return "Yes";
        if (p.find("News story") != std::string_view::npos) return "No";
        ++calls_for_c;
        return "I cannot say";
    });
    Gateway g(mock);
    const auto r = classify_corpus(posts, {}, g);
    EXPECT_EQ(calls_for_c, 2);
    ASSERT_EQ(r.verdicts.size(), 2u);
    EXPECT_EQ(r.verdicts[0].id, "a");
    EXPECT_EQ(r.verdicts[1].id, "b");
    ASSERT_EQ(r.failures.size(), 1u);
    EXPECT_EQ(r.failures[0].id, "c");
    EXPECT_EQ(r.counts.self_disclosure, 1u);
    EXPECT_EQ(r.counts.non_self_disclosure, 1u);
    const auto sidecar = serialize_failures(r.failures);
    EXPECT_NE(sidecar.find("\"id\":\"c\""), std::string::npos);
}

TEST(Classify, SecondAttemptCanResolve) {
    const auto posts = three_posts();
    std::atomic<int> n{0};
    MockBackend mock([&](std::string_view p) -> std::optional<std::string> {
        if (p.find("Question") != std::string_view::npos) return n++ == 0 ? "Hmm, unsure" : "no";
        return "Yes";
    });
    Gateway g(mock);
    const auto r = classify_corpus(posts, {}, g);
    EXPECT_TRUE(r.failures.empty());
    EXPECT_EQ(r.verdicts.size(), 3u);
}

TEST(Classify, EmptyInputMakesNoCalls) {
    MockBackend mock;
    Gateway g(mock);
    const auto r = classify_corpus({}, {}, g);
    EXPECT_TRUE(r.verdicts.empty());
    EXPECT_EQ(g.telemetry().requests, 0u);
}

TEST(Classify, LabeledPostsRejectedUnlessAllowed) {
    std::vector<Post> posts = {make_post("h", "t", "b", {}, DisclosureLabel{Disclosure::SelfDisclosure, LabelSource::Human})};
    MockBackend mock([](std::string_view) { return std::optional<std::string>("Yes"); });
    Gateway g(mock);
    EXPECT_THROW(classify_corpus(posts, {}, g), Error);
    EXPECT_EQ(classify_corpus(posts, {}, g, true).verdicts.size(), 1u);
}

TEST(Classify, GatewayErrorCarriesPostId) {
    std::vector<Post> posts = {make_post("x1", "t", "b"), make_post("x2", "u", "b")};
    MockBackend mock([](std::string_view p) -> std::optional<std::string> {
        if (p.find("post: u\nb") != std::string_view::npos) return std::nullopt;
        return "No";
    });
    Gateway g(mock);
    try {
        classify_corpus(posts, {}, g);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("post x2"), std::string::npos) << e.what();
    }
}

TEST(ClassifyProperty, TotalityOverRandomAnswers) {
    Rng rng(17);
    const std::vector<std::string> answers = {"Yes", "No", "yes.", "NO", "perhaps", "It is a story about", ""};
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Post> posts;
        const std::size_t n = 1 + rng.below(30);
        std::map<std::string, std::string> reply;
        for (std::size_t i = 0; i < n; ++i) {
            posts.push_back(make_post("q" + std::to_string(i), "title " + std::to_string(i), ""));
            reply["title " + std::to_string(i)] = answers[rng.below(answers.size())];
        }
        MockBackend mock([&](std::string_view p) -> std::optional<std::string> {
            const auto a = p.find("post: ") + 6;
            const auto b = p.find(", classify");
            return reply.at(std::string(p.substr(a, b - a)));
        });
        Gateway g(mock);
        const auto r = classify_corpus(posts, {}, g);
        ASSERT_EQ(r.verdicts.size() + r.failures.size(), n);
        ASSERT_EQ(r.counts.self_disclosure + r.counts.non_self_disclosure, r.verdicts.size());
        std::set<std::string> ids;
        for (const auto& v : r.verdicts) ids.insert(v.id);
        for (const auto& f : r.failures) ASSERT_TRUE(ids.insert(f.id).second);
    }
}

TEST(Labels, SerializeParseRoundTrip) {
    std::vector<LabeledVerdict> v = {{"a", parse_verdict("Yes")}, {"b", parse_verdict("no")}};
    const auto labels = parse_labels(serialize_labels(v));
    ASSERT_EQ(labels.size(), 2u);
    EXPECT_EQ(labels.at("a").value, Disclosure::SelfDisclosure);
    EXPECT_EQ(labels.at("b").source, LabelSource::Model);
    EXPECT_THROW(parse_labels("{\"id\":\"x\",\"label\":\"maybe\"}\n"), Error);
}
