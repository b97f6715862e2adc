#ifndef DVSUPPORT_PIPELINE_STAGES_HPP
#define DVSUPPORT_PIPELINE_STAGES_HPP

#include <array>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dvsupport/cluster.hpp"
#include "dvsupport/corpus.hpp"
#include "dvsupport/detect.hpp"
#include "dvsupport/embed.hpp"
#include "dvsupport/error.hpp"
#include "dvsupport/evaluate.hpp"
#include "dvsupport/http_backend.hpp"
#include "dvsupport/llm_gateway.hpp"
#include "dvsupport/log.hpp"
#include "dvsupport/pipeline/config.hpp"
#include "dvsupport/pipeline/manifest.hpp"
#include "dvsupport/pipeline/mock_responder.hpp"
#include "dvsupport/reduce.hpp"
#include "dvsupport/summarize.hpp"
#include "dvsupport/support.hpp"

namespace dvsupport::pipeline {

enum class Stage { Ingest, Detect, Embed, Reduce, Cluster, Summarize, Support, Evaluate };

inline constexpr std::array kAllStages = {Stage::Ingest, Stage::Detect,    Stage::Embed,   Stage::Reduce,
                                          Stage::Cluster, Stage::Summarize, Stage::Support, Stage::Evaluate};

inline std::string_view stage_name(Stage s) {
    switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Detect: return "detect";
    case Stage::Embed: return "embed";
    case Stage::Reduce: return "reduce";
    case Stage::Cluster: return "cluster";
    case Stage::Summarize: return "summarize";
    case Stage::Support: return "support";
    case Stage::Evaluate: return "evaluate";
    }
    return "?";
}

inline std::optional<Stage> parse_stage(std::string_view name) {
    for (Stage s : kAllStages) {
        if (stage_name(s) == name) return s;
    }
    return std::nullopt;
}

/// Direct prerequisites of each stage.
inline std::vector<Stage> upstream(Stage s) {
    switch (s) {
    case Stage::Ingest: return {};
    case Stage::Detect: return {Stage::Ingest};
    case Stage::Embed: return {Stage::Detect};
    case Stage::Reduce: return {Stage::Embed};
    case Stage::Cluster: return {Stage::Embed, Stage::Reduce};
    case Stage::Summarize: return {Stage::Detect, Stage::Cluster};
    case Stage::Support: return {Stage::Detect, Stage::Cluster, Stage::Summarize};
    case Stage::Evaluate: return {Stage::Ingest};
    }
    return {};
}

struct RunOptions {
    bool force = false;
    bool mock = false;
};

struct StageOutcome {
    StageManifest manifest;
    bool skipped = false;  // inputs and artifacts unchanged, nothing ran
};

namespace artifacts {
inline constexpr const char* kCorpus = "corpus.jsonl";
inline constexpr const char* kIngestStats = "ingest_stats.json";
inline constexpr const char* kLabels = "labels.jsonl";
inline constexpr const char* kFailures = "failures.jsonl";
inline constexpr const char* kMerged = "merged.jsonl";
inline constexpr const char* kDetectStats = "detect_stats.json";
inline constexpr const char* kEmbeddings = "embeddings.bin";
inline constexpr const char* kEmbeddingIds = "embedding_ids.txt";
inline constexpr const char* kLayout = "layout.bin";
inline constexpr const char* kLayout2d = "layout2d.csv";
inline constexpr const char* kClusters = "clusters.jsonl";
inline constexpr const char* kClustersMeta = "clusters_meta.json";
inline constexpr const char* kTopics = "topics.json";
inline constexpr const char* kDocuments = "documents.json";
inline constexpr const char* kSupportPool = "supports.json";
inline constexpr const char* kClusterSupports = "cluster_supports.json";
inline constexpr const char* kMapping = "mapping.json";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportCsv = "report.csv";
inline constexpr const char* kReportMd = "report.md";
} // namespace artifacts

inline std::string dump_json(const nlohmann::ordered_json& j) { return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n"; }

inline nlohmann::json read_json(const fs::path& path) {
    auto j = nlohmann::json::parse(io::read_file(path), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::MalformedRecord, path.filename().string(), "not valid JSON");
    return j;
}

/**
 * Runs pipeline stages against one output directory. Each stage reads its
 * upstream artifacts, writes its own artifacts atomically, then publishes a
 * manifest. A stage whose upstream digests and parameters match the existing
 * manifest (with artifacts intact on disk) is skipped unless forced.
 */
class Pipeline {
public:
    Pipeline(PipelineConfig config, fs::path out_dir, RunOptions options = {})
        : config_(std::move(config)), out_(std::move(out_dir)), options_(options) {}

    /// Overrides the chat backend (tests); otherwise chosen from the config.
    void set_chat_backend(ChatBackend& backend) { chat_override_ = &backend; }
    void set_embedder(EmbeddingProvider& embedder) { embed_override_ = &embedder; }

    const PipelineConfig& config() const { return config_; }
    const fs::path& out_dir() const { return out_; }

    StageOutcome run(Stage stage) {
        std::map<std::string, std::string> inputs;
        for (Stage up : upstream(stage)) {
            auto m = load_manifest(out_, stage_name(up));
            if (!m) throw Error(ErrorCode::MissingUpstream, std::string(stage_name(up)), "run it before " + std::string(stage_name(stage)));
            for (const auto& a : m->artifacts) inputs[std::string(stage_name(up)) + ":" + a.path] = a.sha256;
        }
        if (stage == Stage::Ingest) {
            if (!fs::exists(config_.input_posts)) throw Error(ErrorCode::IoError, config_.input_posts, "input posts file not found");
            inputs["input.posts"] = sha256_file(config_.input_posts);
        }
        StageManifest next;
        next.stage = std::string(stage_name(stage));
        next.inputs = std::move(inputs);
        next.params = params_for(stage);
        if (!options_.force) {
            if (auto existing = load_manifest(out_, next.stage); existing && existing->same_inputs(next)) {
                log::info(next.stage + ": inputs unchanged, nothing to do");
                return {*existing, true};
            }
        }
        log::info(next.stage + ": running");
        std::vector<std::string> written;
        try {
            written = execute(stage);
        } catch (const Error& e) {
            throw e.with_context(std::string(stage_name(stage)));
        }
        return {commit_manifest(out_, std::move(next), written), false};
    }

    std::vector<StageOutcome> run_all() {
        std::vector<StageOutcome> out;
        for (Stage s : kAllStages) out.push_back(run(s));
        return out;
    }

private:
    std::map<std::string, std::string> params_for(Stage s) const {
        std::map<std::string, std::string> p;
        const std::string backend = options_.mock ? "mock" : "remote:" + config_.llm_model;
        switch (s) {
        case Stage::Ingest: break;
        case Stage::Detect: p["llm"] = backend; break;
        case Stage::Embed: p["embed"] = options_.mock || config_.embed_provider == "hashing" ? "hashing" : "remote:" + config_.embed_model; break;
        case Stage::Reduce:
            p["n_components"] = std::to_string(config_.reduce_n_components);
            p["n_neighbors"] = std::to_string(config_.reduce_n_neighbors);
            p["min_dist"] = detail::format_real(config_.reduce_min_dist);
            p["spread"] = detail::format_real(config_.reduce_spread);
            p["epochs"] = std::to_string(config_.reduce_epochs);
            p["seed"] = std::to_string(config_.seed);
            break;
        case Stage::Cluster:
            p["min_cluster_size"] = std::to_string(config_.cluster_min_cluster_size);
            p["min_samples"] = std::to_string(config_.cluster_min_samples);
            break;
        case Stage::Summarize:
            p["llm"] = backend;
            p["token_budget"] = std::to_string(config_.token_budget);
            break;
        case Stage::Support:
            p["llm"] = backend;
            p["token_budget"] = std::to_string(config_.token_budget);
            p["top_comments"] = std::to_string(config_.support_top_comments);
            p["threshold"] = detail::format_real(config_.support_threshold);
            p["embed"] = options_.mock || config_.embed_provider == "hashing" ? "hashing" : "remote:" + config_.embed_model;
            break;
        case Stage::Evaluate:
            p["llm"] = backend;
            p["folds"] = std::to_string(config_.evaluate_folds);
            p["seed"] = std::to_string(config_.seed);
            break;
        }
        return p;
    }

    Gateway& gateway() {
        if (!gateway_) {
            ChatBackend* backend = chat_override_;
            if (backend == nullptr) {
                if (options_.mock) {
                    owned_chat_ = std::make_unique<MockBackend>(mock_answer);
                } else {
                    if (text::blank(config_.llm_endpoint)) throw Error(ErrorCode::ConfigError, "llm.endpoint", "required unless --mock is given");
                    owned_chat_ = std::make_unique<RemoteChatBackend>(Endpoint{config_.llm_endpoint, config_.llm_api_key_env});
                }
                backend = owned_chat_.get();
            }
            GatewayOptions opts;
            opts.budget.limit = config_.token_budget;
            opts.max_retries = config_.llm_max_retries;
            opts.max_in_flight = config_.llm_max_in_flight;
            gateway_ = std::make_unique<Gateway>(*backend, opts);
        }
        return *gateway_;
    }

    EmbeddingProvider& embedder() {
        if (embed_override_ != nullptr) return *embed_override_;
        if (!owned_embedder_) {
            if (options_.mock || config_.embed_provider == "hashing") {
                owned_embedder_ = std::make_unique<HashingEmbedder>();
            } else {
                owned_embedder_ = std::make_unique<RemoteEmbeddingProvider>(Endpoint{config_.embed_endpoint, config_.llm_api_key_env}, config_.embed_model);
            }
        }
        return *owned_embedder_;
    }

    fs::path at(const char* name) const { return out_ / name; }

    std::vector<std::string> execute(Stage s) {
        switch (s) {
        case Stage::Ingest: return ingest();
        case Stage::Detect: return detect();
        case Stage::Embed: return embed();
        case Stage::Reduce: return reduce();
        case Stage::Cluster: return cluster();
        case Stage::Summarize: return summarize();
        case Stage::Support: return support();
        case Stage::Evaluate: return evaluate();
        }
        return {};
    }

    std::vector<std::string> ingest() {
        const auto loaded = load_posts(config_.input_posts);
        const FilterResult filtered = filter_engaged(loaded);
        const LabelMap human = human_labels(filtered.kept);
        const CorpusPartition part = partition(filtered.kept, human);
        const ClassCounts counts = count_classes(human);
        write_posts(at(artifacts::kCorpus), filtered.kept);
        nlohmann::ordered_json stats;
        stats["loaded"] = loaded.size();
        stats["removed_without_comments"] = filtered.removed;
        stats["kept"] = filtered.kept.size();
        stats["labeled_self_disclosure"] = counts.self_disclosure;
        stats["labeled_non_self_disclosure"] = counts.non_self_disclosure;
        stats["unlabeled"] = part.unlabeled.size();
        io::write_file_atomic(at(artifacts::kIngestStats), dump_json(stats));
        return {artifacts::kCorpus, artifacts::kIngestStats};
    }

    std::vector<std::string> detect() {
        const auto posts = load_posts(at(artifacts::kCorpus));
        CorpusPartition part = partition(posts, human_labels(posts));
        DetectorConfig dc;
        dc.model_id = config_.llm_model;
        const ClassificationResult result = classify_corpus(part.unlabeled, dc, gateway());
        if (!result.failures.empty()) {
            log::warn(std::to_string(result.failures.size()) + " post(s) left unlabeled after retry; see " + artifacts::kFailures);
            std::set<std::string_view> failed;
            for (const auto& f : result.failures) failed.insert(f.id);
            std::erase_if(part.unlabeled, [&](const Post& p) { return failed.contains(p.id); });
        }
        const auto merged = merge_annotations(part, result.labels());
        const ClassCounts human = count_classes(part.labeled);
        const ClassCounts total = count_classes(merged);
        io::write_file_atomic(at(artifacts::kLabels), serialize_labels(result.verdicts));
        io::write_file_atomic(at(artifacts::kFailures), serialize_failures(result.failures));
        write_posts(at(artifacts::kMerged), merged);
        nlohmann::ordered_json stats;
        stats["human_self_disclosure"] = human.self_disclosure;
        stats["human_non_self_disclosure"] = human.non_self_disclosure;
        stats["model_self_disclosure"] = result.counts.self_disclosure;
        stats["model_non_self_disclosure"] = result.counts.non_self_disclosure;
        stats["unresolved"] = result.failures.size();
        stats["total_self_disclosure"] = total.self_disclosure;
        stats["total_non_self_disclosure"] = total.non_self_disclosure;
        io::write_file_atomic(at(artifacts::kDetectStats), dump_json(stats));
        return {artifacts::kLabels, artifacts::kFailures, artifacts::kMerged, artifacts::kDetectStats};
    }

    // Self-disclosure posts from the merged corpus, in merged order.
    std::vector<Post> disclosure_posts() const {
        std::vector<Post> out;
        for (auto& p : load_posts(at(artifacts::kMerged))) {
            if (p.label && p.label->value == Disclosure::SelfDisclosure) out.push_back(std::move(p));
        }
        return out;
    }

    // Disclosure posts reordered to match the embedding id list.
    std::vector<Post> clustered_posts() const {
        const auto ids = read_ids(at(artifacts::kEmbeddingIds));
        std::map<std::string, Post> by_id;
        for (auto& p : disclosure_posts()) by_id.emplace(p.id, std::move(p));
        std::vector<Post> out;
        out.reserve(ids.size());
        for (const auto& id : ids) {
            auto it = by_id.find(id);
            if (it == by_id.end()) throw Error(ErrorCode::UnknownId, id, "embedding row without a self-disclosure post");
            out.push_back(it->second);
        }
        return out;
    }

    ClusterModel load_model(std::size_t n) const {
        ClusterModel model;
        const auto meta = read_json(at(artifacts::kClustersMeta));
        model.sizes = meta.at("sizes").get<std::vector<std::size_t>>();
        model.stabilities = meta.at("stabilities").get<std::vector<double>>();
        model.labels.reserve(n);
        const std::string rows = io::read_file(at(artifacts::kClusters));
        for (auto line : text::lines(rows)) {
            if (text::blank(line)) continue;
            const auto obj = nlohmann::json::parse(line);
            model.labels.push_back(obj.at("cluster").get<int>());
            model.lambda_exit.push_back(obj.at("lambda_exit").get<double>());
        }
        if (model.labels.size() != n) throw Error(ErrorCode::MalformedRecord, artifacts::kClusters, "row count differs from the embeddings");
        return model;
    }

    std::vector<std::string> embed() {
        const auto posts = disclosure_posts();
        if (posts.empty()) throw Error(ErrorCode::InvalidArgument, "no self-disclosure posts to embed");
        const EmbeddingMatrix m = embed_corpus(posts, embedder());
        write_matrix(at(artifacts::kEmbeddings), m.to_matrix());
        write_ids(at(artifacts::kEmbeddingIds), m.row_ids);
        return {artifacts::kEmbeddings, artifacts::kEmbeddingIds};
    }

    LayoutParams layout_params(std::size_t components) const {
        LayoutParams p;
        p.n_components = components;
        p.n_neighbors = config_.reduce_n_neighbors;
        p.min_dist = config_.reduce_min_dist;
        p.spread = config_.reduce_spread;
        p.epochs = static_cast<int>(config_.reduce_epochs);
        p.seed = config_.seed;
        return p;
    }

    std::vector<std::string> reduce() {
        const Matrix data = read_matrix(at(artifacts::kEmbeddings));
        auto ids = read_ids(at(artifacts::kEmbeddingIds));
        const Layout layout = reduce_embeddings(data, ids, layout_params(config_.reduce_n_components));
        write_matrix(at(artifacts::kLayout), layout.coords);
        const Layout flat = reduce_embeddings(data, ids, layout_params(2));
        std::string csv = "id,x,y\n";
        char buf[96];
        for (std::size_t i = 0; i < ids.size(); ++i) {
            std::snprintf(buf, sizeof buf, ",%.9g,%.9g\n", static_cast<double>(static_cast<float>(flat.coords(i, 0))),
                          static_cast<double>(static_cast<float>(flat.coords(i, 1))));
            csv += ids[i];
            csv += buf;
        }
        io::write_file_atomic(at(artifacts::kLayout2d), csv);
        return {artifacts::kLayout, artifacts::kLayout2d};
    }

    std::vector<std::string> cluster() {
        const Matrix points = read_matrix(at(artifacts::kLayout));
        const auto ids = read_ids(at(artifacts::kEmbeddingIds));
        if (ids.size() != points.rows()) throw Error(ErrorCode::MalformedRecord, artifacts::kLayout, "row count differs from ids");
        const ClusterModel model = hdbscan(points, {config_.cluster_min_cluster_size, config_.cluster_min_samples});
        std::string rows;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            nlohmann::ordered_json obj;
            obj["id"] = ids[i];
            obj["cluster"] = model.labels[i];
            obj["lambda_exit"] = model.lambda_exit[i];
            rows += obj.dump() + "\n";
        }
        io::write_file_atomic(at(artifacts::kClusters), rows);
        nlohmann::ordered_json meta;
        meta["count"] = model.cluster_count();
        meta["sizes"] = model.sizes;
        meta["stabilities"] = model.stabilities;
        meta["noise"] = std::count(model.labels.begin(), model.labels.end(), -1);
        io::write_file_atomic(at(artifacts::kClustersMeta), dump_json(meta));
        log::info("cluster: " + std::to_string(model.cluster_count()) + " clusters");
        return {artifacts::kClusters, artifacts::kClustersMeta};
    }

    TokenBudget budget() const {
        TokenBudget b;
        b.limit = config_.token_budget;
        return b;
    }

    std::vector<std::string> summarize() {
        const auto posts = clustered_posts();
        const ClusterModel model = load_model(posts.size());
        const auto docs = assemble_documents(posts, model, budget());
        const auto topics = summarize_topics(docs, gateway(), config_.llm_model);
        io::write_file_atomic(at(artifacts::kTopics), serialize_topics(topics));
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& d : docs) {
            nlohmann::ordered_json o;
            o["cluster"] = d.cluster;
            o["posts_included"] = d.member_count;
            o["token_cost"] = d.token_cost;
            o["member_ids"] = d.member_ids;
            arr.push_back(std::move(o));
        }
        io::write_file_atomic(at(artifacts::kDocuments), dump_json(arr));
        return {artifacts::kTopics, artifacts::kDocuments};
    }

    std::vector<std::string> support() {
        const auto posts = clustered_posts();
        const ClusterModel model = load_model(posts.size());
        const auto topics = parse_topics_json(io::read_file(at(artifacts::kTopics)));
        const auto comments = top_comments_by_cluster(posts, model, config_.support_top_comments);
        const auto pool = extract_global_pool(comments, gateway(), config_.llm_model);
        const auto raw = extract_cluster_supports(comments, gateway(), config_.llm_model);
        const auto mapping = map_supports(pool, raw, topics, embedder(), config_.support_threshold);
        io::write_file_atomic(at(artifacts::kSupportPool), serialize_pool(pool));
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : raw) arr.push_back({{"cluster", r.cluster}, {"supports", r.phrases}});
        io::write_file_atomic(at(artifacts::kClusterSupports), dump_json(arr));
        io::write_file_atomic(at(artifacts::kMapping), serialize_mapping(mapping));
        return {artifacts::kSupportPool, artifacts::kClusterSupports, artifacts::kMapping};
    }

    std::vector<std::string> evaluate() {
        const auto posts = load_posts(at(artifacts::kCorpus));
        const CorpusPartition part = partition(posts, human_labels(posts));
        const FoldPlan plan = stratified_kfold(human_labels(part.labeled), config_.evaluate_folds, config_.seed);
        DetectorConfig dc;
        dc.model_id = config_.llm_model;
        PromptDetector detector(dc, gateway());
        const MetricReport report = run_cv(part.labeled, plan, detector);
        io::write_file_atomic(at(artifacts::kReportJson), serialize_report_json(report, plan));
        io::write_file_atomic(at(artifacts::kReportCsv), serialize_report_csv(report));
        log::info("evaluate: accuracy " + format_percent(report.accuracy) + ", F1 " + format_percent(report.f1));
        return {artifacts::kReportJson, artifacts::kReportCsv};
    }

    PipelineConfig config_;
    fs::path out_;
    RunOptions options_;
    ChatBackend* chat_override_ = nullptr;
    EmbeddingProvider* embed_override_ = nullptr;
    std::unique_ptr<ChatBackend> owned_chat_;
    std::unique_ptr<EmbeddingProvider> owned_embedder_;
    std::unique_ptr<Gateway> gateway_;
};

} // namespace dvsupport::pipeline

#endif // DVSUPPORT_PIPELINE_STAGES_HPP
