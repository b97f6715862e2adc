#ifndef DVSUPPORT_SUMMARIZE_HPP
#define DVSUPPORT_SUMMARIZE_HPP

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dvsupport/cluster.hpp"
#include "dvsupport/corpus.hpp"
#include "dvsupport/error.hpp"
#include "dvsupport/llm_gateway.hpp"
#include "dvsupport/log.hpp"
#include "dvsupport/text.hpp"

namespace dvsupport {

struct ClusterDocument {
    int cluster = 0;
    std::string text;
    std::size_t member_count = 0;  // posts included after budget truncation
    std::size_t token_cost = 0;
    std::vector<std::string> member_ids;
};

struct TopicSummary {
    int cluster = 0;
    std::string topic;

    bool operator==(const TopicSummary&) const = default;
};

// ---------------------------------------------------------------------------
// Numbered-list responses

struct ListEntry {
    int index = 0;
    std::string body;
    std::string line;
};

/**
 * Extracts "<Keyword> <i>: <body>" lines. Tolerates bullets, bold markers and
 * the separators ':', '.', '-', '–', '—' after the number. Lines before the
 * first entry and after the last are prose and skipped; a non-blank line
 * sitting between two entries throws UnparseableLine.
 */
inline std::vector<ListEntry> parse_numbered_list(std::string_view response, std::string_view keyword) {
    const std::regex pattern(
        R"(^\s*(?:[-*+]\s+)?(?:\d+[.)]\s+)?(?:\*\*)?\s*)" + std::string(keyword) +
            R"(\s+(\d+)\s*(?:\*\*)?\s*(?::|\.|-|–|—)\s*(?:\*\*)?\s*(.*?)\s*$)",
        std::regex::icase | std::regex::ECMAScript);

    std::vector<ListEntry> entries;
    std::vector<std::string_view> pending;  // non-matching lines since the last entry
    for (std::string_view line : text::lines(response)) {
        std::match_results<std::string_view::const_iterator> m;
        if (std::regex_match(line.begin(), line.end(), m, pattern)) {
            if (!entries.empty()) {
                for (auto p : pending) {
                    if (!text::blank(p)) throw Error(ErrorCode::UnparseableLine, std::string(p), "line inside the list does not match");
                }
            }
            pending.clear();
            std::string body = m[2].str();
            while (body.size() >= 2 && body.ends_with("**")) body.resize(body.size() - 2);
            entries.push_back({std::stoi(m[1].str()), std::string(text::trim(body)), std::string(line)});
        } else {
            pending.push_back(line);
        }
    }
    return entries;
}

// ---------------------------------------------------------------------------
// Documents

/// Token allowance reserved for each "Cluster <i>:" header and separator.
inline constexpr std::size_t kClusterHeaderTokens = 8;

/**
 * One document per non-noise cluster, members in ascending post-id order and
 * separated by a blank line. Each document gets an equal share of the budget
 * left after the topic prompt's fixed text; posts are dropped whole from the
 * end until the document fits its share.
 */
inline std::vector<ClusterDocument> assemble_documents(std::span<const Post> posts, const ClusterModel& model,
                                                       const TokenBudget& budget = {}) {
    if (model.labels.size() != posts.size()) {
        throw Error(ErrorCode::InvalidArgument, "cluster labels must cover every post");
    }
    const std::size_t k = model.cluster_count();
    if (k == 0) throw Error(ErrorCode::EmptyClusterSet, "no non-noise clusters to summarize");

    std::vector<std::vector<const Post*>> members(k);
    for (std::size_t i = 0; i < posts.size(); ++i) {
        if (model.labels[i] >= 0) members[static_cast<std::size_t>(model.labels[i])].push_back(&posts[i]);
    }

    const std::string skeleton = render(prompts::topic_summary(), {{"N", std::to_string(k)}, {"Post Content", ""}});
    const std::size_t fixed = budget.count(skeleton) + k * kClusterHeaderTokens;
    const std::size_t share = fixed >= budget.limit ? 0 : (budget.limit - fixed) / k;

    std::vector<ClusterDocument> docs;
    docs.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        auto& group = members[c];
        std::sort(group.begin(), group.end(), [](const Post* a, const Post* b) { return a->id < b->id; });
        std::vector<std::string> texts;
        texts.reserve(group.size());
        for (const Post* p : group) texts.push_back(post_text(*p));

        // Longest id-ordered prefix that fits; equivalent to dropping posts
        // from the end until the document fits.
        std::string doc;
        std::size_t keep = 0;
        for (const auto& t : texts) {
            std::string candidate = keep == 0 ? t : doc + "\n\n" + t;
            if (budget.count(candidate) > share) break;
            doc = std::move(candidate);
            ++keep;
        }
        if (keep < texts.size()) {
            log::warn("cluster " + std::to_string(c) + " document truncated to " + std::to_string(keep) + " of " +
                      std::to_string(texts.size()) + " posts to fit the token budget");
        }
        ClusterDocument d;
        d.cluster = static_cast<int>(c);
        d.text = std::move(doc);
        d.member_count = keep;
        d.token_cost = budget.count(d.text);
        for (std::size_t i = 0; i < keep; ++i) d.member_ids.push_back(group[i]->id);
        docs.push_back(std::move(d));
    }
    return docs;
}

/// Renders the topic prompt: N = |docs| and one "Cluster <i>:\n<text>" block
/// per document in id order, blocks separated by blank lines.
inline std::string build_topic_prompt(std::span<const ClusterDocument> docs) {
    if (docs.empty()) throw Error(ErrorCode::EmptyClusterSet, "no documents");
    std::string blocks = "\n\n";
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (i > 0) blocks += "\n\n";
        blocks += "Cluster " + std::to_string(docs[i].cluster) + ":\n" + docs[i].text;
    }
    blocks += "\n\n";
    return render(prompts::topic_summary(), {{"N", std::to_string(docs.size())}, {"Post Content", blocks}});
}

/// Parses "Cluster <i>: <topic>" lines; exactly ids 0..expected-1, each once.
inline std::vector<TopicSummary> parse_topics(std::string_view response, std::size_t expected) {
    const auto entries = parse_numbered_list(response, "Cluster");
    std::map<int, std::string> by_id;
    for (const auto& e : entries) {
        if (e.index < 0 || static_cast<std::size_t>(e.index) >= expected) {
            throw Error(ErrorCode::UnparseableLine, e.line, "cluster id out of range");
        }
        if (e.body.empty()) throw Error(ErrorCode::UnparseableLine, e.line, "empty topic");
        by_id.emplace(e.index, e.body);
    }
    if (entries.size() != expected || by_id.size() != expected) {
        throw Error(ErrorCode::CountMismatch, std::to_string(by_id.size()) + "/" + std::to_string(expected),
                    "found " + std::to_string(by_id.size()) + " distinct cluster topics in " +
                        std::to_string(entries.size()) + " lines, expected " + std::to_string(expected));
    }
    std::vector<TopicSummary> out;
    out.reserve(expected);
    for (auto& [id, topic] : by_id) out.push_back({id, topic});
    return out;
}

/**
 * Asks for all topics in one request. On CountMismatch falls back to one
 * single-cluster prompt per document (each labeled "Cluster 0").
 */
inline std::vector<TopicSummary> summarize_topics(std::span<const ClusterDocument> docs, Gateway& gateway,
                                                  const std::string& model_id, int max_output_tokens = 2048) {
    const std::string prompt = build_topic_prompt(docs);
    const ChatResponse response = gateway.complete({prompt, 0.0, max_output_tokens, model_id});
    try {
        return parse_topics(response.text, docs.size());
    } catch (const Error& e) {
        if (e.code() != ErrorCode::CountMismatch) throw;
        log::warn(std::string("topic response incomplete, falling back to per-cluster prompts: ") + e.what());
    }
    std::vector<ChatRequest> requests;
    for (const auto& d : docs) {
        ClusterDocument single = d;
        single.cluster = 0;
        requests.push_back({build_topic_prompt(std::span(&single, 1)), 0.0, max_output_tokens, model_id});
    }
    const auto responses = gateway.complete_all(requests, [&](std::size_t i) { return "cluster " + std::to_string(docs[i].cluster); });
    std::vector<TopicSummary> out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto one = parse_topics(responses[i].text, 1);
        out.push_back({docs[i].cluster, one.front().topic});
    }
    return out;
}

inline std::string serialize_topics(std::span<const TopicSummary> topics) {
    std::vector<TopicSummary> sorted(topics.begin(), topics.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.cluster < b.cluster; });
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& t : sorted) {
        nlohmann::ordered_json obj;
        obj["cluster"] = t.cluster;
        obj["topic"] = t.topic;
        arr.push_back(std::move(obj));
    }
    return arr.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

inline std::vector<TopicSummary> parse_topics_json(std::string_view content) {
    const auto arr = nlohmann::json::parse(content, nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) throw Error(ErrorCode::MalformedRecord, "topics.json", "expected an array");
    std::vector<TopicSummary> out;
    for (const auto& obj : arr) out.push_back({obj.at("cluster").get<int>(), obj.at("topic").get<std::string>()});
    return out;
}

} // namespace dvsupport

#endif // DVSUPPORT_SUMMARIZE_HPP
