#ifndef DVSUPPORT_SUPPORT_HPP
#define DVSUPPORT_SUPPORT_HPP

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dvsupport/corpus.hpp"
#include "dvsupport/embed.hpp"
#include "dvsupport/error.hpp"
#include "dvsupport/llm_gateway.hpp"
#include "dvsupport/log.hpp"
#include "dvsupport/summarize.hpp"
#include "dvsupport/text.hpp"

/**
 * @file support.hpp
 *
 * @brief Support extraction from high-karma comments and the mapping of
 * per-cluster supports onto the global support pool.
 */

namespace dvsupport {

inline constexpr std::size_t kTopComments = 10;
inline constexpr double kDefaultMappingThreshold = 0.6;

struct SupportCategory {
    int id = 0;  // 1-based pool index
    std::string name;
    std::string description;

    bool operator==(const SupportCategory&) const = default;
};

struct ClusterComments {
    int cluster = 0;
    std::vector<Comment> comments;
};

struct ClusterSupports {
    int cluster = 0;
    std::vector<std::string> phrases;
};

struct TopicSupportEntry {
    int cluster = 0;
    std::string topic;
    std::vector<int> supports;           // ascending, unique
    std::vector<std::string> unmapped;   // raw phrases below the threshold
    std::vector<double> best_similarity; // parallel to the cluster's raw phrases
};

struct TopicSupportMap {
    double threshold = kDefaultMappingThreshold;
    std::vector<TopicSupportEntry> clusters;
};

/// Comments pooled across `posts`, sorted by karma descending then id
/// ascending, truncated to k.
inline std::vector<Comment> top_comments(std::span<const Post> posts, std::size_t k = kTopComments) {
    std::vector<Comment> pool;
    for (const auto& p : posts) pool.insert(pool.end(), p.comments.begin(), p.comments.end());
    auto order = [](const Comment& a, const Comment& b) {
        if (a.karma != b.karma) return a.karma > b.karma;
        return a.id < b.id;
    };
    const std::size_t keep = std::min(k, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), order);
    pool.resize(keep);
    return pool;
}

/// Top comments for every cluster 0..K-1 of `model` over `posts`.
inline std::vector<ClusterComments> top_comments_by_cluster(std::span<const Post> posts, const ClusterModel& model,
                                                            std::size_t k = kTopComments) {
    if (model.labels.size() != posts.size()) throw Error(ErrorCode::InvalidArgument, "cluster labels must cover every post");
    std::vector<std::vector<Post>> members(model.cluster_count());
    for (std::size_t i = 0; i < posts.size(); ++i) {
        if (model.labels[i] >= 0) members[static_cast<std::size_t>(model.labels[i])].push_back(posts[i]);
    }
    std::vector<ClusterComments> out;
    for (std::size_t c = 0; c < members.size(); ++c) out.push_back({static_cast<int>(c), top_comments(members[c], k)});
    return out;
}

namespace detail {

inline std::string comment_line(const Comment& c) { return "- " + text::single_line(c.body); }

} // namespace detail

struct AssembledPrompt {
    std::string prompt;
    std::size_t comments_included = 0;
    std::size_t comments_available = 0;
};

/**
 * Global support prompt over every cluster's top comments, cluster-major.
 * Comment lines (the first of each cluster carries its "Cluster <i>:" header)
 * are admitted as whole items by fit_to_budget; the finished prompt is
 * re-checked against the budget.
 */
inline AssembledPrompt build_global_support_prompt(std::span<const ClusterComments> clusters, const TokenBudget& budget = {}) {
    std::vector<std::string> items;
    for (const auto& cc : clusters) {
        for (std::size_t i = 0; i < cc.comments.size(); ++i) {
            std::string item = detail::comment_line(cc.comments[i]);
            if (i == 0) item = "Cluster " + std::to_string(cc.cluster) + ":\n" + item;
            items.push_back(std::move(item));
        }
    }
    if (items.empty()) throw Error(ErrorCode::InvalidArgument, "no comments in any cluster");

    const std::string skeleton = render(prompts::support_global(), {{std::string(prompts::kGlobalComments), "\n\n\n"}});
    // One extra token per item covers the joining newline.
    const std::size_t fixed = budget.count(skeleton) + items.size();
    if (fixed >= budget.limit) throw Error(ErrorCode::BudgetExceeded, "template alone exceeds the token budget");
    TokenBudget item_budget = budget;
    item_budget.limit = budget.limit - fixed;
    const auto kept = fit_to_budget(items, item_budget);

    std::string content = "\n";
    for (std::size_t i = 0; i < kept.size(); ++i) {
        content += i == 0 ? "" : "\n";
        content += kept[i];
    }
    content += "\n";
    AssembledPrompt out{render(prompts::support_global(), {{std::string(prompts::kGlobalComments), content}}), kept.size(), items.size()};
    if (!budget.admits(out.prompt)) throw Error(ErrorCode::BudgetExceeded, std::to_string(budget.count(out.prompt)), "global support prompt");
    if (kept.size() < items.size()) {
        log::warn("global support prompt keeps " + std::to_string(kept.size()) + " of " + std::to_string(items.size()) + " comments");
    }
    return out;
}

inline AssembledPrompt build_cluster_support_prompt(std::span<const Comment> comments, const TokenBudget& budget = {}) {
    if (comments.empty()) throw Error(ErrorCode::InvalidArgument, "cluster has no comments");
    std::vector<std::string> items;
    for (const auto& c : comments) items.push_back(detail::comment_line(c));
    const std::string skeleton = render(prompts::support_cluster(), {{std::string(prompts::kClusterComments), "\n\n"}});
    const std::size_t fixed = budget.count(skeleton) + items.size();
    if (fixed >= budget.limit) throw Error(ErrorCode::BudgetExceeded, "template alone exceeds the token budget");
    TokenBudget item_budget = budget;
    item_budget.limit = budget.limit - fixed;
    const auto kept = fit_to_budget(items, item_budget);
    std::string content = "\n";
    for (std::size_t i = 0; i < kept.size(); ++i) {
        content += i == 0 ? "" : "\n";
        content += kept[i];
    }
    content += "\n";
    AssembledPrompt out{render(prompts::support_cluster(), {{std::string(prompts::kClusterComments), content}}), kept.size(), items.size()};
    if (!budget.admits(out.prompt)) throw Error(ErrorCode::BudgetExceeded, std::to_string(budget.count(out.prompt)), "cluster support prompt");
    return out;
}

namespace detail {

// Splits "<name> — <description>" on the first dash-like separator.
inline std::pair<std::string, std::string> split_name(std::string_view body) {
    static constexpr std::string_view kSeparators[] = {" — ", " – ", " - ", "—", "–", ": "};
    for (auto sep : kSeparators) {
        if (const auto at = body.find(sep); at != std::string_view::npos && at > 0) {
            return {std::string(text::trim(body.substr(0, at))), std::string(text::trim(body.substr(at + sep.size())))};
        }
    }
    return {std::string(text::trim(body)), {}};
}

inline std::string strip_decoration(std::string s) {
    auto trim_chars = [](std::string& x) {
        while (!x.empty() && (x.front() == '*' || x.front() == '"' || text::is_space(x.front()))) x.erase(x.begin());
        while (!x.empty() && (x.back() == '*' || x.back() == '"' || x.back() == '.' || text::is_space(x.back()))) x.pop_back();
    };
    trim_chars(s);
    return s;
}

} // namespace detail

/// Parses "Support <i>: <name> — <description>" lines into a pool with ids
/// 1..n in response order. Case-folded duplicate names are dropped with a
/// warning.
inline std::vector<SupportCategory> parse_support_pool(std::string_view response) {
    std::vector<SupportCategory> pool;
    std::set<std::string> seen;
    for (const auto& e : parse_numbered_list(response, "Support")) {
        auto [name, description] = detail::split_name(e.body);
        name = detail::strip_decoration(std::move(name));
        if (name.empty()) throw Error(ErrorCode::UnparseableLine, e.line, "support entry has no name");
        if (!seen.insert(text::lower_ascii(name)).second) {
            log::warn("duplicate support \"" + name + "\" dropped from the pool");
            continue;
        }
        pool.push_back({static_cast<int>(pool.size()) + 1, std::move(name), std::move(description)});
    }
    if (pool.empty()) throw Error(ErrorCode::EmptyPool, "no support entries could be parsed");
    return pool;
}

inline std::vector<std::string> parse_support_phrases(std::string_view response) {
    std::vector<std::string> phrases;
    for (const auto& e : parse_numbered_list(response, "Support")) {
        std::string phrase = detail::strip_decoration(e.body);
        if (phrase.empty()) throw Error(ErrorCode::UnparseableLine, e.line, "empty support phrase");
        phrases.push_back(std::move(phrase));
    }
    return phrases;
}

inline std::vector<SupportCategory> extract_global_pool(std::span<const ClusterComments> clusters, Gateway& gateway,
                                                        const std::string& model_id, int max_output_tokens = 2048) {
    const bool any = std::any_of(clusters.begin(), clusters.end(), [](const auto& c) { return !c.comments.empty(); });
    if (!any) throw Error(ErrorCode::InvalidArgument, "no cluster has comments");
    const AssembledPrompt prompt = build_global_support_prompt(clusters, gateway.budget());
    return parse_support_pool(gateway.complete({prompt.prompt, 0.0, max_output_tokens, model_id}).text);
}

/// Per-cluster raw supports. Clusters without comments are skipped with a
/// warning and yield an empty phrase list without sending a request.
inline std::vector<ClusterSupports> extract_cluster_supports(std::span<const ClusterComments> clusters, Gateway& gateway,
                                                             const std::string& model_id, int max_output_tokens = 1024) {
    std::vector<ChatRequest> requests;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        if (clusters[i].comments.empty()) {
            log::warn("cluster " + std::to_string(clusters[i].cluster) + " has no comments; support extraction skipped");
            continue;
        }
        requests.push_back({build_cluster_support_prompt(clusters[i].comments, gateway.budget()).prompt, 0.0, max_output_tokens, model_id});
        index.push_back(i);
    }
    const auto responses =
        gateway.complete_all(requests, [&](std::size_t r) { return "cluster " + std::to_string(clusters[index[r]].cluster); });
    std::vector<ClusterSupports> out;
    for (const auto& c : clusters) out.push_back({c.cluster, {}});
    for (std::size_t r = 0; r < responses.size(); ++r) {
        try {
            out[index[r]].phrases = parse_support_phrases(responses[r].text);
        } catch (const Error& e) {
            throw e.with_context("cluster " + std::to_string(clusters[index[r]].cluster));
        }
    }
    return out;
}

/**
 * Matches each raw phrase to the pool entry with the highest cosine
 * similarity, comparing against both the entry name alone and name plus
 * description and taking the larger. A match is accepted at or above
 * `threshold`; ties go to the lower pool id.
 */
inline TopicSupportMap map_supports(std::span<const SupportCategory> pool, std::span<const ClusterSupports> raw,
                                    std::span<const TopicSummary> topics, EmbeddingProvider& embedder,
                                    double threshold = kDefaultMappingThreshold) {
    if (pool.empty()) throw Error(ErrorCode::EmptyPool, "support pool is empty");
    std::vector<std::string> keys;
    for (const auto& s : pool) {
        keys.push_back(s.name);
        keys.push_back(s.description.empty() ? s.name : s.name + "\n" + s.description);
    }
    const auto key_vectors = embedder.embed_batch(keys);

    std::map<int, std::string> topic_of;
    for (const auto& t : topics) topic_of[t.cluster] = t.topic;

    TopicSupportMap out;
    out.threshold = threshold;
    for (const auto& cs : raw) {
        TopicSupportEntry entry;
        entry.cluster = cs.cluster;
        if (auto it = topic_of.find(cs.cluster); it != topic_of.end()) entry.topic = it->second;
        std::set<int> ids;
        const auto phrase_vectors = embedder.embed_batch(cs.phrases);
        for (std::size_t p = 0; p < cs.phrases.size(); ++p) {
            double best = -2.0;
            int best_id = 0;
            for (std::size_t s = 0; s < pool.size(); ++s) {
                const double sim = std::max(cosine(phrase_vectors[p], key_vectors[2 * s]), cosine(phrase_vectors[p], key_vectors[2 * s + 1]));
                if (sim > best) {
                    best = sim;
                    best_id = pool[s].id;
                }
            }
            entry.best_similarity.push_back(best);
            if (best >= threshold) {
                ids.insert(best_id);
            } else {
                entry.unmapped.push_back(cs.phrases[p]);
            }
        }
        entry.supports.assign(ids.begin(), ids.end());
        out.clusters.push_back(std::move(entry));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Artifacts: supports.json, mapping.json

inline std::string serialize_pool(std::span<const SupportCategory> pool) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& s : pool) {
        nlohmann::ordered_json obj;
        obj["id"] = s.id;
        obj["name"] = s.name;
        obj["description"] = s.description;
        arr.push_back(std::move(obj));
    }
    return arr.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

inline std::vector<SupportCategory> parse_pool_json(std::string_view content) {
    const auto arr = nlohmann::json::parse(content, nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) throw Error(ErrorCode::MalformedRecord, "supports.json", "expected an array");
    std::vector<SupportCategory> pool;
    for (const auto& o : arr) pool.push_back({o.at("id").get<int>(), o.at("name").get<std::string>(), o.value("description", std::string())});
    return pool;
}

inline std::string serialize_mapping(const TopicSupportMap& map) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& e : map.clusters) {
        nlohmann::ordered_json obj;
        obj["cluster"] = e.cluster;
        obj["topic"] = e.topic;
        obj["supports"] = e.supports;
        obj["unmapped"] = e.unmapped;
        arr.push_back(std::move(obj));
    }
    return arr.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

inline TopicSupportMap parse_mapping_json(std::string_view content) {
    const auto arr = nlohmann::json::parse(content, nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) throw Error(ErrorCode::MalformedRecord, "mapping.json", "expected an array");
    TopicSupportMap map;
    for (const auto& o : arr) {
        TopicSupportEntry e;
        e.cluster = o.at("cluster").get<int>();
        e.topic = o.value("topic", std::string());
        e.supports = o.at("supports").get<std::vector<int>>();
        e.unmapped = o.at("unmapped").get<std::vector<std::string>>();
        map.clusters.push_back(std::move(e));
    }
    return map;
}

} // namespace dvsupport

#endif // DVSUPPORT_SUPPORT_HPP
