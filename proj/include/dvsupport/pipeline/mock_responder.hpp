#ifndef DVSUPPORT_PIPELINE_MOCK_RESPONDER_HPP
#define DVSUPPORT_PIPELINE_MOCK_RESPONDER_HPP

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dvsupport/embed.hpp"
#include "dvsupport/llm_gateway.hpp"
#include "dvsupport/text.hpp"

/**
 * @file mock_responder.hpp
 *
 * A deterministic stand-in for the chat model used by `--mock` runs. It
 * recognises each built-in template by its instruction text and answers from
 * word counts over the prompt. A detection prompt gets "Yes" when the post
 * uses a first-person singular pronoun.
 */

namespace dvsupport::pipeline {

namespace mock_detail {

inline bool stopword(std::string_view w) {
    static const std::set<std::string, std::less<>> words = {
        "about", "after", "also", "been", "being", "but", "could", "described", "does", "from", "have", "here",
        "just", "like", "lived", "more", "please", "consider", "some", "than", "that", "their", "them", "then",
        "there", "they", "this", "what", "when", "which", "with", "would", "your", "were", "will", "into",
    };
    return w.size() < 4 || words.contains(w);
}

inline std::map<std::string, std::size_t> content_counts(std::string_view text) {
    std::map<std::string, std::size_t> counts;
    for (auto& t : hashing_tokens(text)) {
        if (!stopword(t)) ++counts[t];
    }
    return counts;
}

// Highest count first, ties alphabetical.
inline std::vector<std::string> top_words(const std::map<std::string, std::size_t>& counts, std::size_t n,
                                          const std::set<std::string>& exclude = {}) {
    std::vector<std::pair<std::string, std::size_t>> v;
    for (const auto& [w, c] : counts) {
        if (!exclude.contains(w)) v.emplace_back(w, c);
    }
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size() && i < n; ++i) out.push_back(v[i].first);
    return out;
}

inline std::string_view between(std::string_view s, std::string_view open, std::string_view close) {
    const auto a = s.find(open);
    if (a == std::string_view::npos) return {};
    const auto start = a + open.size();
    const auto b = s.rfind(close);
    if (b == std::string_view::npos || b < start) return s.substr(start);
    return s.substr(start, b - start);
}

inline std::string join_topic(const std::vector<std::string>& words) {
    if (words.empty()) return "general discussion";
    if (words.size() == 1) return words[0];
    std::string out;
    for (std::size_t i = 0; i + 1 < words.size(); ++i) {
        if (i > 0) out += ", ";
        out += words[i];
    }
    return out + " and " + words.back();
}

inline std::string answer_detection(std::string_view prompt) {
    const auto post = between(prompt, "Given a social media post: ", ", classify whether it is a self-disclosure");
    for (const auto& t : hashing_tokens(post)) {
        if (t == "i" || t == "my" || t == "me" || t == "myself") return "Yes";
    }
    return "No";
}

inline std::string answer_topics(std::string_view prompt) {
    const auto body = between(prompt, " clusters of posts: ", ". Generate a concise summary for each cluster");
    std::vector<std::pair<int, std::string>> blocks;
    for (auto line : text::lines(body)) {
        const auto t = text::trim(line);
        if (t.starts_with("Cluster ") && t.ends_with(":")) {
            const std::string num(t.substr(8, t.size() - 9));
            if (!num.empty() && std::all_of(num.begin(), num.end(), [](char c) { return c >= '0' && c <= '9'; })) {
                blocks.emplace_back(std::stoi(num), std::string());
                continue;
            }
        }
        if (!blocks.empty()) {
            blocks.back().second += line;
            blocks.back().second += '\n';
        }
    }
    std::vector<std::map<std::string, std::size_t>> counts;
    std::map<std::string, std::size_t> df;
    for (const auto& b : blocks) {
        counts.push_back(content_counts(b.second));
        for (const auto& [w, c] : counts.back()) ++df[w];
    }
    std::set<std::string> everywhere;
    if (blocks.size() > 1) {
        for (const auto& [w, d] : df) {
            if (d == blocks.size()) everywhere.insert(w);
        }
    }
    std::string out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        out += "Cluster " + std::to_string(blocks[i].first) + ": " + join_topic(top_words(counts[i], 3, everywhere)) + "\n";
    }
    return out;
}

inline std::string answer_supports(std::string_view prompt, bool global) {
    std::string comments;
    for (auto line : text::lines(prompt)) {
        if (line.starts_with("- ")) {
            comments += line.substr(2);
            comments += '\n';
        }
    }
    const auto words = top_words(content_counts(comments), global ? 5 : 3);
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        out += "Support " + std::to_string(i + 1) + ": " + words[i] + " support";
        if (global) out += " — comments recommend " + words[i];
        out += '\n';
    }
    return out;
}

} // namespace mock_detail

/// Answer function for MockBackend; nullopt for prompts it does not know.
inline std::optional<std::string> mock_answer(std::string_view prompt) {
    if (prompt.starts_with(prompts::detection().instruction)) return mock_detail::answer_detection(prompt);
    if (prompt.starts_with("Given a set of posts grouped into")) return mock_detail::answer_topics(prompt);
    if (prompt.starts_with(prompts::support_global().instruction)) return mock_detail::answer_supports(prompt, true);
    if (prompt.starts_with(prompts::support_cluster().instruction)) return mock_detail::answer_supports(prompt, false);
    return std::nullopt;
}

} // namespace dvsupport::pipeline

#endif // DVSUPPORT_PIPELINE_MOCK_RESPONDER_HPP
