#ifndef DVSUPPORT_CORPUS_HPP
#define DVSUPPORT_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dvsupport/error.hpp"
#include "dvsupport/io.hpp"
#include "dvsupport/log.hpp"
#include "dvsupport/text.hpp"

/**
 * @file corpus.hpp
 *
 * @brief Post/comment records, JSON Lines ingestion, engagement filtering and
 * the labeled/unlabeled bookkeeping around human and model annotations.
 */

namespace dvsupport {

struct Comment {
    std::string id;
    std::string body;
    std::int64_t karma = 0;
    std::int64_t created_utc = 0;

    bool operator==(const Comment&) const = default;
};

enum class Disclosure { SelfDisclosure, NonSelfDisclosure };
enum class LabelSource { Human, Model };

struct DisclosureLabel {
    Disclosure value = Disclosure::NonSelfDisclosure;
    LabelSource source = LabelSource::Human;

    bool operator==(const DisclosureLabel&) const = default;
};

struct Post {
    std::string id;
    std::string subreddit;
    std::string title;
    std::string body;
    std::int64_t created_utc = 0;
    std::int64_t karma = 0;
    std::vector<Comment> comments;
    std::optional<DisclosureLabel> label;

    bool operator==(const Post&) const = default;
};

/// Ordered by id so iteration (and anything serialized from it) is stable.
using LabelMap = std::map<std::string, DisclosureLabel>;

struct CorpusPartition {
    std::vector<Post> labeled;
    std::vector<Post> unlabeled;
};

struct ClassCounts {
    std::size_t self_disclosure = 0;
    std::size_t non_self_disclosure = 0;

    std::size_t total() const { return self_disclosure + non_self_disclosure; }
    bool operator==(const ClassCounts&) const = default;
};

struct FilterResult {
    std::vector<Post> kept;
    std::size_t removed = 0;
};

/// The twelve communities the corpus was drawn from. Advisory only: loading
/// never rejects other subreddit names.
inline const std::vector<std::string>& default_subreddits() {
    static const std::vector<std::string> names = {
        "domesticviolence", "relationships",      "AbuseInterrupted", "abusiverelationships",
        "traumatoobox",     "familycourt",        "abusiveparents",   "raisedbynarcissists",
        "abusivesiblings",  "insaneparents",      "relationship_advice", "emotionalabuse",
    };
    return names;
}

/// Text used for classification and embedding: title and body joined by a
/// single newline, or whichever of the two is non-empty.
inline std::string post_text(const Post& post) {
    if (post.body.empty()) return post.title;
    if (post.title.empty()) return post.body;
    return post.title + "\n" + post.body;
}

inline std::string_view label_token(Disclosure d) {
    return d == Disclosure::SelfDisclosure ? "yes" : "no";
}

inline std::optional<Disclosure> parse_label_token(std::string_view token) {
    if (token == "yes") return Disclosure::SelfDisclosure;
    if (token == "no") return Disclosure::NonSelfDisclosure;
    return std::nullopt;
}

namespace detail {

using ordered_json = nlohmann::ordered_json;

inline const ordered_json& require(const ordered_json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw Error(ErrorCode::MalformedRecord, std::to_string(line), std::string("missing field \"") + key + "\"");
    }
    return *it;
}

inline std::string require_string(const ordered_json& obj, const char* key, std::size_t line) {
    const auto& v = require(obj, key, line);
    if (!v.is_string()) {
        throw Error(ErrorCode::MalformedRecord, std::to_string(line), std::string("field \"") + key + "\" must be a string");
    }
    return v.get<std::string>();
}

inline std::string optional_string(const ordered_json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return {};
    if (!it->is_string()) {
        throw Error(ErrorCode::MalformedRecord, std::to_string(line), std::string("field \"") + key + "\" must be a string");
    }
    return it->get<std::string>();
}

// Missing or null integers read as 0 (the platform's neutral score).
inline std::int64_t optional_int(const ordered_json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return 0;
    if (!it->is_number_integer()) {
        throw Error(ErrorCode::MalformedRecord, std::to_string(line), std::string("field \"") + key + "\" must be an integer");
    }
    return it->get<std::int64_t>();
}

inline Comment parse_comment(const ordered_json& obj, std::size_t line) {
    if (!obj.is_object()) throw Error(ErrorCode::MalformedRecord, std::to_string(line), "comment must be an object");
    Comment c;
    c.id = require_string(obj, "id", line);
    c.body = require_string(obj, "body", line);
    c.karma = optional_int(obj, "karma", line);
    c.created_utc = optional_int(obj, "created_utc", line);
    if (c.id.empty()) throw Error(ErrorCode::MalformedRecord, std::to_string(line), "comment id is empty");
    if (text::blank(c.body)) {
        throw Error(ErrorCode::MalformedRecord, std::to_string(line), "comment " + c.id + " has an empty body");
    }
    return c;
}

} // namespace detail

/// Parses one JSONL post record. `line` is 1-based and only used in errors.
inline Post parse_post_record(std::string_view record, std::size_t line) {
    using detail::ordered_json;
    ordered_json obj = ordered_json::parse(record, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw Error(ErrorCode::MalformedRecord, std::to_string(line), "not a JSON object");
    }
    Post p;
    p.id = detail::require_string(obj, "id", line);
    p.subreddit = detail::optional_string(obj, "subreddit", line);
    p.title = detail::require_string(obj, "title", line);
    p.body = detail::optional_string(obj, "body", line);
    p.created_utc = detail::optional_int(obj, "created_utc", line);
    p.karma = detail::optional_int(obj, "karma", line);
    const auto& comments = detail::require(obj, "comments", line);
    if (!comments.is_array()) throw Error(ErrorCode::MalformedRecord, std::to_string(line), "\"comments\" must be an array");
    for (const auto& c : comments) p.comments.push_back(detail::parse_comment(c, line));

    if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
        std::optional<Disclosure> value;
        if (it->is_string()) value = parse_label_token(it->get<std::string>());
        if (!value) throw Error(ErrorCode::MalformedRecord, std::to_string(line), "\"label\" must be \"yes\" or \"no\"");
        LabelSource source = LabelSource::Human;
        if (const std::string src = detail::optional_string(obj, "label_source", line); src == "model") {
            source = LabelSource::Model;
        } else if (!src.empty() && src != "human") {
            throw Error(ErrorCode::MalformedRecord, std::to_string(line), "\"label_source\" must be \"human\" or \"model\"");
        }
        p.label = DisclosureLabel{*value, source};
    }

    if (p.id.empty()) throw Error(ErrorCode::MalformedRecord, std::to_string(line), "post id is empty");
    if (text::blank(p.title) && text::blank(p.body)) {
        throw Error(ErrorCode::MalformedRecord, std::to_string(line), "post " + p.id + " has no title or body text");
    }
    return p;
}

inline std::string to_jsonl_record(const Post& p) {
    detail::ordered_json obj;
    obj["id"] = p.id;
    obj["subreddit"] = p.subreddit;
    obj["title"] = p.title;
    obj["body"] = p.body;
    obj["created_utc"] = p.created_utc;
    obj["karma"] = p.karma;
    obj["comments"] = detail::ordered_json::array();
    for (const auto& c : p.comments) {
        detail::ordered_json co;
        co["id"] = c.id;
        co["body"] = c.body;
        co["karma"] = c.karma;
        co["created_utc"] = c.created_utc;
        obj["comments"].push_back(std::move(co));
    }
    if (p.label) {
        obj["label"] = label_token(p.label->value);
        // Absent label_source means human, which keeps ingestion files minimal.
        if (p.label->source == LabelSource::Model) obj["label_source"] = "model";
    }
    return obj.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
}

/// Parses JSON Lines content. Blank lines are skipped; order is preserved.
inline std::vector<Post> parse_posts(std::string_view content) {
    std::vector<Post> posts;
    std::set<std::string, std::less<>> seen;
    std::size_t line_no = 0;
    for (std::string_view line : text::lines(content)) {
        ++line_no;
        if (text::blank(line)) continue;
        Post p = parse_post_record(line, line_no);
        if (!seen.insert(p.id).second) throw Error(ErrorCode::DuplicateId, p.id, "duplicate post id at line " + std::to_string(line_no));
        posts.push_back(std::move(p));
    }
    return posts;
}

inline std::vector<Post> load_posts(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::IoError, path.string(), "no such file");
    return parse_posts(io::read_file(path));
}

inline std::string serialize_posts(std::span<const Post> posts) {
    std::string out;
    for (const auto& p : posts) {
        out += to_jsonl_record(p);
        out += '\n';
    }
    return out;
}

/// Inverse of load_posts.
inline void write_posts(const std::filesystem::path& path, std::span<const Post> posts) {
    io::write_file_atomic(path, serialize_posts(posts));
}

/// Keeps posts with at least one comment.
inline FilterResult filter_engaged(std::span<const Post> posts) {
    FilterResult result;
    result.kept.reserve(posts.size());
    for (const auto& p : posts) {
        if (p.comments.empty()) {
            ++result.removed;
        } else {
            result.kept.push_back(p);
        }
    }
    return result;
}

/// Human labels carried inside the loaded records.
inline LabelMap human_labels(std::span<const Post> posts) {
    LabelMap labels;
    for (const auto& p : posts) {
        if (p.label && p.label->source == LabelSource::Human) labels.emplace(p.id, *p.label);
    }
    return labels;
}

inline ClassCounts count_classes(std::span<const Post> posts) {
    ClassCounts counts;
    for (const auto& p : posts) {
        if (!p.label) continue;
        if (p.label->value == Disclosure::SelfDisclosure) {
            ++counts.self_disclosure;
        } else {
            ++counts.non_self_disclosure;
        }
    }
    return counts;
}

inline ClassCounts count_classes(const LabelMap& labels) {
    ClassCounts counts;
    for (const auto& [id, label] : labels) {
        if (label.value == Disclosure::SelfDisclosure) {
            ++counts.self_disclosure;
        } else {
            ++counts.non_self_disclosure;
        }
    }
    return counts;
}

/// Splits posts into the human-labeled subset and the remainder. Both sides
/// keep input order. A class imbalance is logged, not thrown.
inline CorpusPartition partition(std::span<const Post> posts, const LabelMap& human) {
    std::map<std::string_view, const Post*> by_id;
    for (const auto& p : posts) by_id.emplace(p.id, &p);
    for (const auto& [id, label] : human) {
        if (!by_id.contains(id)) throw Error(ErrorCode::UnknownId, id, "label references a post that is not in the corpus");
        if (label.source != LabelSource::Human) throw Error(ErrorCode::SourceViolation, id, "partition expects human labels");
    }

    CorpusPartition out;
    for (const auto& p : posts) {
        auto it = human.find(p.id);
        if (it == human.end()) {
            Post copy = p;
            copy.label.reset();
            out.unlabeled.push_back(std::move(copy));
        } else {
            Post copy = p;
            copy.label = it->second;
            out.labeled.push_back(std::move(copy));
        }
    }

    const ClassCounts counts = count_classes(human);
    if (counts.self_disclosure != counts.non_self_disclosure && !human.empty()) {
        log::warn("ImbalanceWarning: labeled subset has " + std::to_string(counts.self_disclosure) +
                  " self-disclosure and " + std::to_string(counts.non_self_disclosure) + " non-self-disclosure posts");
    }
    return out;
}

/// Attaches model predictions to every unlabeled post. The result lists the
/// labeled posts first, then the newly annotated ones, each in partition order.
inline std::vector<Post> merge_annotations(const CorpusPartition& part, const LabelMap& predictions) {
    std::set<std::string_view> human_ids;
    for (const auto& p : part.labeled) human_ids.insert(p.id);
    std::set<std::string_view> unlabeled_ids;
    for (const auto& p : part.unlabeled) unlabeled_ids.insert(p.id);

    for (const auto& [id, label] : predictions) {
        if (human_ids.contains(id)) throw Error(ErrorCode::SourceViolation, id, "prediction targets a human-labeled post");
        if (!unlabeled_ids.contains(id)) throw Error(ErrorCode::UnknownId, id, "prediction for a post outside the partition");
        if (label.source != LabelSource::Model) throw Error(ErrorCode::SourceViolation, id, "prediction is not model-sourced");
    }
    std::string missing;
    std::size_t missing_count = 0;
    for (const auto& p : part.unlabeled) {
        if (!predictions.contains(p.id)) {
            if (missing_count < 10) missing += (missing.empty() ? "" : ",") + p.id;
            ++missing_count;
        }
    }
    if (missing_count > 0) {
        throw Error(ErrorCode::CoverageGap, missing,
                    std::to_string(missing_count) + " unlabeled post(s) have no prediction");
    }

    std::vector<Post> merged;
    merged.reserve(part.labeled.size() + part.unlabeled.size());
    for (const auto& p : part.labeled) merged.push_back(p);
    for (const auto& p : part.unlabeled) {
        Post copy = p;
        copy.label = predictions.at(p.id);
        merged.push_back(std::move(copy));
    }
    return merged;
}

} // namespace dvsupport

#endif // DVSUPPORT_CORPUS_HPP
