#ifndef DVSUPPORT_HTTP_BACKEND_HPP
#define DVSUPPORT_HTTP_BACKEND_HPP

#include <chrono>
#include <cstdlib>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dvsupport/embed.hpp"
#include "dvsupport/error.hpp"
#include "dvsupport/llm_gateway.hpp"

namespace dvsupport {

/// An OpenAI-compatible endpoint: base URL such as "https://host:port/v1",
/// and the name of the environment variable holding the bearer key.
struct Endpoint {
    std::string base_url;
    std::string api_key_env = "DVSUPPORT_API_KEY";
    std::chrono::seconds timeout{120};
};

namespace detail {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path prefix, no trailing slash
};

inline SplitUrl split_url(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw Error(ErrorCode::ConfigError, std::string(url), "endpoint must include a scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    out.origin = std::string(url.substr(0, path_start));
    if (path_start != std::string_view::npos) out.prefix = std::string(url.substr(path_start));
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

inline httplib::Headers auth_headers(const Endpoint& endpoint) {
    httplib::Headers headers;
    if (!endpoint.api_key_env.empty()) {
        if (const char* key = std::getenv(endpoint.api_key_env.c_str()); key != nullptr && *key != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    return headers;
}

// Posts JSON; classifies failures into retryable and fatal.
inline nlohmann::json post_json(const Endpoint& endpoint, const std::string& path, const nlohmann::json& body) {
    const SplitUrl url = split_url(endpoint.base_url);
    httplib::Client client(url.origin);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(endpoint.timeout);
    client.set_write_timeout(endpoint.timeout);
    auto result = client.Post(url.prefix + path, auth_headers(endpoint), body.dump(), "application/json");
    if (!result) throw TransientFailure("transport error: " + httplib::to_string(result.error()));
    const int status = result->status;
    if (status == 429 || status >= 500) throw TransientFailure("HTTP " + std::to_string(status));
    if (status < 200 || status >= 300) {
        throw Error(ErrorCode::BackendUnavailable, "HTTP " + std::to_string(status), result->body.substr(0, 200));
    }
    auto parsed = nlohmann::json::parse(result->body, nullptr, false);
    if (parsed.is_discarded()) throw Error(ErrorCode::ProviderError, path, "response is not JSON");
    return parsed;
}

} // namespace detail

/// Chat-completions client. One user message per request.
class RemoteChatBackend final : public ChatBackend {
public:
    explicit RemoteChatBackend(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}

    ChatResponse send(const ChatRequest& request) override {
        nlohmann::json body;
        body["model"] = request.model_id;
        body["temperature"] = request.temperature;
        body["max_tokens"] = request.max_output_tokens;
        body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}});
        const auto start = std::chrono::steady_clock::now();
        const auto reply = detail::post_json(endpoint_, "/chat/completions", body);
        ChatResponse r;
        r.backend = BackendKind::Remote;
        r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
        try {
            r.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorCode::ProviderError, "chat", "response lacks choices[0].message.content");
        }
        return r;
    }

    BackendKind kind() const override { return BackendKind::Remote; }

private:
    Endpoint endpoint_;
};

/// Embeddings client. Vectors must have kEmbeddingDim entries and are
/// re-normalized locally.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
    RemoteEmbeddingProvider(Endpoint endpoint, std::string model_id, std::size_t batch_size = 64)
        : endpoint_(std::move(endpoint)), model_(std::move(model_id)), batch_(batch_size == 0 ? 1 : batch_size) {}

    EmbeddingVector embed(std::string_view text) override {
        const std::string owned(text);
        return embed_batch(std::span(&owned, 1)).front();
    }

    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (std::size_t start = 0; start < texts.size(); start += batch_) {
            const auto chunk = texts.subspan(start, std::min(batch_, texts.size() - start));
            nlohmann::json body;
            body["model"] = model_;
            body["input"] = nlohmann::json::array();
            for (const auto& t : chunk) body["input"].push_back(t);
            nlohmann::json reply;
            for (int attempt = 0;; ++attempt) {
                try {
                    reply = detail::post_json(endpoint_, "/embeddings", body);
                    break;
                } catch (const TransientFailure& e) {
                    if (attempt >= 3) throw Error(ErrorCode::ProviderError, "embeddings", e.what());
                }
            }
            const auto& data = reply.at("data");
            if (!data.is_array() || data.size() != chunk.size()) {
                throw Error(ErrorCode::ProviderError, "embeddings", "response size does not match the batch");
            }
            std::vector<EmbeddingVector> part(chunk.size());
            for (const auto& item : data) {
                const std::size_t index = item.value("index", std::size_t{0});
                const auto& values = item.at("embedding");
                if (index >= part.size()) throw Error(ErrorCode::ProviderError, "embeddings", "index out of range");
                if (values.size() != kEmbeddingDim) {
                    throw Error(ErrorCode::ProviderError, std::to_string(values.size()),
                                "embedding dimension differs from " + std::to_string(kEmbeddingDim));
                }
                for (std::size_t d = 0; d < kEmbeddingDim; ++d) part[index].values[d] = values[d].get<double>();
                normalize(part[index]);
            }
            for (auto& v : part) out.push_back(std::move(v));
        }
        return out;
    }

private:
    Endpoint endpoint_;
    std::string model_;
    std::size_t batch_;
};

} // namespace dvsupport

#endif // DVSUPPORT_HTTP_BACKEND_HPP
