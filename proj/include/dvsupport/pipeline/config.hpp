#ifndef DVSUPPORT_PIPELINE_CONFIG_HPP
#define DVSUPPORT_PIPELINE_CONFIG_HPP

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dvsupport/error.hpp"
#include "dvsupport/io.hpp"
#include "dvsupport/text.hpp"

/**
 * @file config.hpp
 *
 * Pipeline configuration file. The syntax is line based:
 *
 *     # comment
 *     input.posts = data/posts.jsonl
 *     cluster.min_cluster_size = 20
 *
 * Keys are dotted names from the table in PipelineConfig; values run to the
 * end of the line and are trimmed. Blank lines and lines starting with '#'
 * are ignored. A key may appear once; an unknown key or an out-of-range value
 * raises ConfigError naming the key.
 */

namespace dvsupport::pipeline {

struct PipelineConfig {
    std::string input_posts;              // input.posts (required)
    std::string output_dir = "out";       // output.dir
    std::uint64_t seed = 42;              // seed

    std::string llm_endpoint;             // llm.endpoint
    std::string llm_model = "llama-3.2-11b-vision-instruct";  // llm.model
    std::string llm_api_key_env = "DVSUPPORT_API_KEY";       // llm.api_key_env
    int llm_max_retries = 3;              // llm.max_retries
    std::size_t llm_max_in_flight = 4;    // llm.max_in_flight
    std::size_t token_budget = 128'000;   // llm.token_budget

    std::string embed_provider = "hashing";  // embed.provider: hashing | remote
    std::string embed_endpoint;              // embed.endpoint
    std::string embed_model = "all-MiniLM-L6-v2";  // embed.model
    std::size_t embed_dim = 384;             // embed.dim (fixed)

    std::size_t reduce_n_components = 5;  // reduce.n_components
    std::size_t reduce_n_neighbors = 15;  // reduce.n_neighbors
    double reduce_min_dist = 0.1;         // reduce.min_dist
    double reduce_spread = 1.0;           // reduce.spread
    std::size_t reduce_epochs = 200;      // reduce.epochs

    std::size_t cluster_min_cluster_size = 20;  // cluster.min_cluster_size
    std::size_t cluster_min_samples = 20;       // cluster.min_samples

    std::size_t support_top_comments = 10;  // support.top_comments
    double support_threshold = 0.6;         // support.threshold

    std::size_t evaluate_folds = 10;  // evaluate.folds

    bool operator==(const PipelineConfig&) const = default;
};

namespace detail {

struct Field {
    std::string_view key;
    std::function<void(PipelineConfig&, std::string_view)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

[[noreturn]] inline void bad_value(std::string_view key, std::string_view why) {
    throw Error(ErrorCode::ConfigError, std::string(key), std::string(why));
}

template <class T>
T parse_integer(std::string_view key, std::string_view value, T lo, T hi) {
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, "expected an integer, got '" + std::string(value) + "'");
    if (out < lo || out > hi) {
        bad_value(key, "value " + std::string(value) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return out;
}

inline double parse_real(std::string_view key, std::string_view value, double lo, double hi, bool open_lo = false) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(std::string(value), &used);
    } catch (const std::exception&) {
        bad_value(key, "expected a number, got '" + std::string(value) + "'");
    }
    if (used != value.size()) bad_value(key, "expected a number, got '" + std::string(value) + "'");
    if (out > hi || out < lo || (open_lo && out == lo)) bad_value(key, "value " + std::string(value) + " out of range");
    return out;
}

inline std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
Field integer_field(std::string_view key, T PipelineConfig::*member, T lo, T hi) {
    return {key, [=](PipelineConfig& c, std::string_view v) { c.*member = parse_integer<T>(key, v, lo, hi); },
            [=](const PipelineConfig& c) { return std::to_string(c.*member); }};
}

inline Field real_field(std::string_view key, double PipelineConfig::*member, double lo, double hi, bool open_lo) {
    return {key, [=](PipelineConfig& c, std::string_view v) { c.*member = parse_real(key, v, lo, hi, open_lo); },
            [=](const PipelineConfig& c) { return format_real(c.*member); }};
}

inline Field string_field(std::string_view key, std::string PipelineConfig::*member) {
    return {key, [=](PipelineConfig& c, std::string_view v) { c.*member = std::string(v); },
            [=](const PipelineConfig& c) { return c.*member; }};
}

inline const std::vector<Field>& fields() {
    using C = PipelineConfig;
    static const std::vector<Field> table = {
        string_field("input.posts", &C::input_posts),
        string_field("output.dir", &C::output_dir),
        integer_field<std::uint64_t>("seed", &C::seed, 0, UINT64_MAX),
        string_field("llm.endpoint", &C::llm_endpoint),
        string_field("llm.model", &C::llm_model),
        string_field("llm.api_key_env", &C::llm_api_key_env),
        integer_field<int>("llm.max_retries", &C::llm_max_retries, 0, 10),
        integer_field<std::size_t>("llm.max_in_flight", &C::llm_max_in_flight, 1, 64),
        integer_field<std::size_t>("llm.token_budget", &C::token_budget, 1024, 10'000'000),
        {"embed.provider",
         [](C& c, std::string_view v) {
             if (v != "hashing" && v != "remote") bad_value("embed.provider", "expected 'hashing' or 'remote'");
             c.embed_provider = std::string(v);
         },
         [](const C& c) { return c.embed_provider; }},
        string_field("embed.endpoint", &C::embed_endpoint),
        string_field("embed.model", &C::embed_model),
        integer_field<std::size_t>("embed.dim", &C::embed_dim, 384, 384),
        integer_field<std::size_t>("reduce.n_components", &C::reduce_n_components, 1, 100),
        integer_field<std::size_t>("reduce.n_neighbors", &C::reduce_n_neighbors, 2, 200),
        real_field("reduce.min_dist", &C::reduce_min_dist, 0.0, 10.0, true),
        real_field("reduce.spread", &C::reduce_spread, 0.0, 100.0, true),
        integer_field<std::size_t>("reduce.epochs", &C::reduce_epochs, 1, 100'000),
        integer_field<std::size_t>("cluster.min_cluster_size", &C::cluster_min_cluster_size, 2, 1'000'000),
        integer_field<std::size_t>("cluster.min_samples", &C::cluster_min_samples, 2, 1'000'000),
        integer_field<std::size_t>("support.top_comments", &C::support_top_comments, 1, 1000),
        real_field("support.threshold", &C::support_threshold, 0.0, 1.0, false),
        integer_field<std::size_t>("evaluate.folds", &C::evaluate_folds, 2, 1000),
    };
    return table;
}

} // namespace detail

inline void validate(const PipelineConfig& c) {
    if (text::blank(c.input_posts)) throw Error(ErrorCode::ConfigError, "input.posts", "required key missing");
    if (c.reduce_min_dist >= c.reduce_spread * 10.0) {
        throw Error(ErrorCode::ConfigError, "reduce.min_dist", "must be smaller than 10 x reduce.spread");
    }
    if (c.embed_provider == "remote" && text::blank(c.embed_endpoint)) {
        throw Error(ErrorCode::ConfigError, "embed.endpoint", "required when embed.provider = remote");
    }
}

inline PipelineConfig parse_config_text(std::string_view content) {
    PipelineConfig c;
    std::map<std::string, std::size_t, std::less<>> seen;
    std::size_t line_no = 0;
    for (std::string_view raw : text::lines(content)) {
        ++line_no;
        const std::string_view line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no), "expected 'key = value'");
        }
        const std::string key(text::trim(line.substr(0, eq)));
        const std::string_view value = text::trim(line.substr(eq + 1));
        const auto& table = detail::fields();
        auto it = std::find_if(table.begin(), table.end(), [&](const detail::Field& f) { return f.key == key; });
        if (it == table.end()) throw Error(ErrorCode::ConfigError, key, "unknown key");
        if (!seen.emplace(key, line_no).second) throw Error(ErrorCode::ConfigError, key, "key given twice");
        it->set(c, value);
    }
    validate(c);
    return c;
}

inline PipelineConfig parse_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::ConfigError, path.string(), "config file not found");
    return parse_config_text(io::read_file(path));
}

/// Every key, in table order; parse_config_text() inverts this exactly.
inline std::string serialize_config(const PipelineConfig& c) {
    std::string out;
    for (const auto& f : detail::fields()) {
        out += f.key;
        out += " = ";
        out += f.get(c);
        out += '\n';
    }
    return out;
}

} // namespace dvsupport::pipeline

#endif // DVSUPPORT_PIPELINE_CONFIG_HPP
