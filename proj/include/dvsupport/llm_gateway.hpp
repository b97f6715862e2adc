#ifndef DVSUPPORT_LLM_GATEWAY_HPP
#define DVSUPPORT_LLM_GATEWAY_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "dvsupport/error.hpp"
#include "dvsupport/hash.hpp"

/**
 * @file llm_gateway.hpp
 *
 * @brief Prompt templates and the chat-completion gateway with its token budget.
 *
 * The gateway owns the retry policy and bounded parallelism; backends only
 * perform a single exchange. A backend signals a retryable failure by throwing
 * TransientFailure and a permanent one by throwing Error.
 */

namespace dvsupport {

// ---------------------------------------------------------------------------
// Templates

enum class TemplateName { Detection, TopicSummary, SupportGlobal, SupportCluster };

inline std::string_view to_string(TemplateName name) {
    switch (name) {
    case TemplateName::Detection: return "detection";
    case TemplateName::TopicSummary: return "topic_summary";
    case TemplateName::SupportGlobal: return "support_global";
    case TemplateName::SupportCluster: return "support_cluster";
    }
    return "unknown";
}

/**
 * An instruction/query pair. Placeholders are written as `[Name]` and only the
 * names listed in `placeholders` are substituted; any other bracketed text is
 * literal. Rendering joins the instruction and query with a blank line.
 */
struct PromptTemplate {
    TemplateName name;
    std::string instruction;
    std::string query_pattern;
    std::vector<std::string> placeholders;
};

namespace prompts {

inline constexpr std::string_view kPostContent = "Post Content";
inline constexpr std::string_view kClusterCount = "N";
inline constexpr std::string_view kGlobalComments = "Top-10 Comment Content across All Clusters";
inline constexpr std::string_view kClusterComments = "Top-10 Comment Content within Each Cluster";

inline const PromptTemplate& detection() {
    static const PromptTemplate t{
        TemplateName::Detection,
        "A self-disclosure of domestic violence refers to the personal and voluntary act of sharing "
        "one’s own experiences as a victim with another individual, a group, or the general public.",
        "Given a social media post: [Post Content], classify whether it is a self-disclosure of domestic "
        "violence or not by answering 'Yes' or 'No'. Answer:",
        {std::string(kPostContent)},
    };
    return t;
}

// The final sentence of each summarization instruction fixes a line grammar
// so the response can be parsed back into per-cluster / per-support entries.
inline const PromptTemplate& topic_summary() {
    static const PromptTemplate t{
        TemplateName::TopicSummary,
        "Given a set of posts grouped into [N] (based on the outputs of DBSCAN) distinct clusters, all "
        "related to domestic violence, generate a concise summary for each cluster that captures its main "
        "theme(s) or topic(s). Write the answer as one line per cluster in the form \"Cluster <i>: <topic>\", "
        "covering every cluster exactly once.",
        "Here are [N] clusters of posts: [Post Content]. Generate a concise summary for each cluster that "
        "captures its main topic(s). Answer:",
        {std::string(kClusterCount), std::string(kPostContent)},
    };
    return t;
}

inline const PromptTemplate& support_global() {
    static const PromptTemplate t{
        TemplateName::SupportGlobal,
        "Given a set of user comments on domestic violence self-disclosure (posts) that seek support, extract "
        "and summarize the forms of supports provided to the victims from the comments. Ensure that the forms "
        "of supports are distinct from one another. Write the answer as one line per form of support in the "
        "form \"Support <i>: <name> — <description>\", numbered from 1.",
        "Here are the comments on domestic violence self-disclosure that seek support: [Top-10 Comment Content "
        "across All Clusters]. Extract and summarize the forms of supports provided to the victims from the "
        "comments.",
        {std::string(kGlobalComments)},
    };
    return t;
}

inline const PromptTemplate& support_cluster() {
    static const PromptTemplate t{
        TemplateName::SupportCluster,
        "Given a set of user comments on domestic violence self-disclosure (posts) that seek support, extract "
        "and summarize the forms of supports provided to the victims from the comments. Write the answer as "
        "one line per form of support in the form \"Support <i>: <support>\", numbered from 1.",
        "Here are the comments on domestic violence self-disclosure that seek support: [Top-10 Comment Content "
        "within Each Cluster]. Extract and summarize the forms of supports provided to the victims from the "
        "comments.",
        {std::string(kClusterComments)},
    };
    return t;
}

inline const PromptTemplate& builtin(TemplateName name) {
    switch (name) {
    case TemplateName::Detection: return detection();
    case TemplateName::TopicSummary: return topic_summary();
    case TemplateName::SupportGlobal: return support_global();
    case TemplateName::SupportCluster: return support_cluster();
    }
    throw Error(ErrorCode::InvalidArgument, "unknown template");
}

} // namespace prompts

using Bindings = std::map<std::string, std::string, std::less<>>;

namespace detail {

// Single left-to-right pass; substituted values are never rescanned, so text
// inside a binding that happens to look like a placeholder stays literal.
inline std::string substitute(std::string_view pattern, const PromptTemplate& tmpl, const Bindings& bindings) {
    std::string out;
    std::size_t pos = 0;
    while (pos < pattern.size()) {
        const std::size_t open = pattern.find('[', pos);
        if (open == std::string_view::npos) break;
        const std::size_t close = pattern.find(']', open + 1);
        if (close == std::string_view::npos) break;
        const std::string_view name = pattern.substr(open + 1, close - open - 1);
        const bool declared = std::find(tmpl.placeholders.begin(), tmpl.placeholders.end(), name) != tmpl.placeholders.end();
        if (!declared) {
            out.append(pattern.substr(pos, open + 1 - pos));
            pos = open + 1;
            continue;
        }
        auto it = bindings.find(name);
        if (it == bindings.end()) throw Error(ErrorCode::MissingBinding, std::string(name), "no value bound for placeholder");
        out.append(pattern.substr(pos, open - pos));
        out.append(it->second);
        pos = close + 1;
    }
    out.append(pattern.substr(std::min(pos, pattern.size())));
    return out;
}

} // namespace detail

inline std::string render(const PromptTemplate& tmpl, const Bindings& bindings) {
    for (const auto& name : tmpl.placeholders) {
        if (!bindings.contains(name)) throw Error(ErrorCode::MissingBinding, name, "no value bound for placeholder");
    }
    return detail::substitute(tmpl.instruction, tmpl, bindings) + "\n\n" +
           detail::substitute(tmpl.query_pattern, tmpl, bindings);
}

// ---------------------------------------------------------------------------
// Token budget

enum class CountingRule { ByteQuarter };

inline constexpr std::size_t kDefaultContextLimit = 128'000;

/// ceil(bytes / 4).
constexpr std::size_t count_tokens(std::string_view text) { return (text.size() + 3) / 4; }

struct TokenBudget {
    std::size_t limit = kDefaultContextLimit;
    CountingRule counting_rule = CountingRule::ByteQuarter;

    std::size_t count(std::string_view text) const {
        switch (counting_rule) {
        case CountingRule::ByteQuarter: return count_tokens(text);
        }
        return count_tokens(text);
    }
    bool admits(std::string_view text) const { return count(text) <= limit; }
};

/// Longest prefix of `items` whose summed token cost fits in the budget.
/// Items are never split; throws FirstItemTooLarge when nothing fits.
inline std::span<const std::string> fit_to_budget(std::span<const std::string> items, const TokenBudget& budget) {
    std::size_t used = 0;
    std::size_t kept = 0;
    for (const auto& item : items) {
        const std::size_t cost = budget.count(item);
        if (used + cost > budget.limit) break;
        used += cost;
        ++kept;
    }
    if (kept == 0 && !items.empty()) {
        throw Error(ErrorCode::FirstItemTooLarge, std::to_string(budget.count(items.front())),
                    "first item exceeds a budget of " + std::to_string(budget.limit) + " tokens");
    }
    return items.first(kept);
}

// ---------------------------------------------------------------------------
// Requests and backends

struct ChatRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_output_tokens = 1024;
    std::string model_id;
};

enum class BackendKind { Remote, Mock };

struct ChatResponse {
    std::string text;
    BackendKind backend = BackendKind::Mock;
    std::int64_t latency_ms = 0;
    int retries = 0;
};

/// Thrown by a backend for failures worth retrying (transport errors,
/// rate limiting, server errors).
class TransientFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse send(const ChatRequest& request) = 0;
    virtual BackendKind kind() const = 0;
};

/// Stable 64-bit key for a prompt; the same on every platform.
inline std::uint64_t prompt_key(std::string_view prompt) { return fnv1a64(prompt); }

/**
 * Deterministic backend. A scripted response keyed by prompt_key() wins; when
 * no script entry matches, the answer function (if any) is consulted. Both
 * lookups are read-only, so one instance may serve concurrent requests.
 */
class MockBackend final : public ChatBackend {
public:
    using AnswerFn = std::function<std::optional<std::string>(std::string_view prompt)>;

    MockBackend() = default;
    explicit MockBackend(AnswerFn fn) : answer_(std::move(fn)) {}

    void script(std::string_view prompt, std::string response) {
        scripted_[prompt_key(prompt)] = std::move(response);
    }
    void set_answer(AnswerFn fn) { answer_ = std::move(fn); }

    ChatResponse send(const ChatRequest& request) override {
        ChatResponse r;
        r.backend = BackendKind::Mock;
        if (auto it = scripted_.find(prompt_key(request.prompt)); it != scripted_.end()) {
            r.text = it->second;
            return r;
        }
        if (answer_) {
            if (auto answer = answer_(request.prompt)) {
                r.text = std::move(*answer);
                return r;
            }
        }
        throw Error(ErrorCode::BackendUnavailable, "mock", "no scripted response for prompt");
    }

    BackendKind kind() const override { return BackendKind::Mock; }

private:
    std::unordered_map<std::uint64_t, std::string> scripted_;
    AnswerFn answer_;
};

// ---------------------------------------------------------------------------
// Gateway

struct GatewayOptions {
    TokenBudget budget{};
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::size_t max_in_flight = 4;
};

struct GatewayTelemetry {
    std::size_t requests = 0;
    std::size_t retries = 0;
    std::size_t failures = 0;
};

class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit Gateway(ChatBackend& backend, GatewayOptions options = {})
        : backend_(&backend), options_(options), sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

    /// Replaces the backoff wait.
    void set_sleeper(Sleeper s) { sleep_ = std::move(s); }

    const GatewayOptions& options() const { return options_; }
    const TokenBudget& budget() const { return options_.budget; }

    GatewayTelemetry telemetry() const {
        std::lock_guard lock(mutex_);
        return telemetry_;
    }

    ChatResponse complete(const ChatRequest& request) {
        if (request.temperature < 0.0) throw Error(ErrorCode::InvalidArgument, "temperature must be non-negative");
        if (request.max_output_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "max_output_tokens must be positive");
        const std::size_t cost = options_.budget.count(request.prompt);
        if (cost > options_.budget.limit) {
            throw Error(ErrorCode::BudgetExceeded, std::to_string(cost),
                        "prompt exceeds the " + std::to_string(options_.budget.limit) + "-token input limit");
        }

        auto backoff = options_.initial_backoff;
        for (int attempt = 0;; ++attempt) {
            const auto start = std::chrono::steady_clock::now();
            try {
                ChatResponse response = backend_->send(request);
                response.retries = attempt;
                if (response.latency_ms == 0) {
                    response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                              std::chrono::steady_clock::now() - start)
                                              .count();
                }
                record(attempt, false);
                return response;
            } catch (const TransientFailure& e) {
                if (attempt >= options_.max_retries) {
                    record(attempt, true);
                    throw Error(ErrorCode::BackendUnavailable, std::to_string(attempt + 1) + " attempts",
                                std::string("giving up: ") + e.what());
                }
                sleep_(backoff);
                backoff *= 2;
            } catch (const Error&) {
                record(attempt, true);
                throw;
            }
        }
    }

    using ContextFn = std::function<std::string(std::size_t index)>;

    /// Runs up to max_in_flight requests concurrently. Responses come back in
    /// submission order; the first failure (in submission order) is rethrown
    /// after all in-flight work has finished, prefixed with context(index)
    /// when a context function is given.
    std::vector<ChatResponse> complete_all(std::span<const ChatRequest> requests, const ContextFn& context = {}) {
        std::vector<ChatResponse> out(requests.size());
        std::vector<std::exception_ptr> errors(requests.size());
        const std::size_t workers = std::max<std::size_t>(1, std::min(options_.max_in_flight, requests.size()));
        if (workers <= 1) {
            for (std::size_t i = 0; i < requests.size(); ++i) {
                try {
                    out[i] = complete(requests[i]);
                } catch (const Error& e) {
                    if (!context) throw;
                    throw e.with_context(context(i));
                }
            }
            return out;
        }
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
                try {
                    out[i] = complete(requests[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
        for (std::size_t i = 0; i < errors.size(); ++i) {
            if (!errors[i]) continue;
            try {
                std::rethrow_exception(errors[i]);
            } catch (const Error& e) {
                if (!context) throw;
                throw e.with_context(context(i));
            }
        }
        return out;
    }

private:
    void record(int attempt, bool failed) {
        std::lock_guard lock(mutex_);
        ++telemetry_.requests;
        telemetry_.retries += static_cast<std::size_t>(attempt);
        if (failed) ++telemetry_.failures;
    }

    ChatBackend* backend_;
    GatewayOptions options_;
    Sleeper sleep_;
    mutable std::mutex mutex_;
    GatewayTelemetry telemetry_;
};

} // namespace dvsupport

#endif // DVSUPPORT_LLM_GATEWAY_HPP
