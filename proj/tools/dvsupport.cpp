#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dvsupport/evaluate.hpp"
#include "dvsupport/pipeline/config.hpp"
#include "dvsupport/pipeline/manifest.hpp"
#include "dvsupport/pipeline/report.hpp"
#include "dvsupport/pipeline/stages.hpp"

namespace {

using namespace dvsupport;
using namespace dvsupport::pipeline;

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kUpstream = 3, kBackend = 4 };

int exit_code(ErrorCode code) {
    switch (code) {
    case ErrorCode::ConfigError: return kConfig;
    case ErrorCode::MissingUpstream: return kUpstream;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::ProviderError:
        return kBackend;
    default: return kFailure;
    }
}

struct GlobalFlags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool force = false;
    bool mock = false;
};

PipelineConfig load_config(const GlobalFlags& flags) {
    if (flags.config.empty()) throw Error(ErrorCode::ConfigError, "--config", "a config file is required");
    PipelineConfig c = parse_config(flags.config);
    if (!flags.out.empty()) c.output_dir = flags.out;
    if (flags.seed) c.seed = *flags.seed;
    // Relative input paths resolve against the config file's directory.
    const fs::path base = fs::path(flags.config).parent_path();
    if (fs::path(c.input_posts).is_relative() && !base.empty()) c.input_posts = (base / c.input_posts).string();
    return c;
}

int run_stages(const GlobalFlags& flags, std::optional<Stage> only, bool report) {
    const PipelineConfig config = load_config(flags);
    const fs::path out = config.output_dir;
    DirectoryLock lock(out);
    Pipeline pipeline(config, out, {flags.force, flags.mock});
    if (only) {
        const auto outcome = pipeline.run(*only);
        std::cout << stage_name(*only) << (outcome.skipped ? ": up to date\n" : ": done\n");
    } else {
        for (const auto& outcome : pipeline.run_all()) {
            std::cout << outcome.manifest.stage << (outcome.skipped ? ": up to date\n" : ": done\n");
        }
    }
    if (report) {
        write_report(out);
        std::cout << "report: " << (out / artifacts::kReportMd).string() << "\n";
    }
    return kOk;
}

int run_synth(const std::string& path, const SynthSpec& spec) {
    const SynthCorpus corpus = synth_corpus(spec);
    write_posts(path, corpus.posts);
    std::cout << "wrote " << corpus.posts.size() << " posts to " << path << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Domestic-violence self-disclosure and support-provision pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalFlags flags;
    std::uint64_t seed = 0;
    app.add_option("--config", flags.config, "Pipeline config file (key = value lines)");
    app.add_option("--out", flags.out, "Output directory (overrides output.dir)");
    auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides seed)");
    app.add_flag("--force", flags.force, "Re-run stages even when their inputs are unchanged");
    app.add_flag("--mock", flags.mock, "Use the deterministic mock chat backend and the hashing embedder");

    std::optional<Stage> chosen;
    for (Stage s : kAllStages) {
        app.add_subcommand(std::string(stage_name(s)), "Run the " + std::string(stage_name(s)) + " stage")
            ->callback([&chosen, s] { chosen = s; });
    }
    auto* run_all = app.add_subcommand("run-all", "Run every stage, then render the report");
    auto* report_cmd = app.add_subcommand("report", "Render report.md from existing artifacts");

    SynthSpec spec;
    std::string synth_path = "synthetic_posts.jsonl";
    auto* synth = app.add_subcommand("synth", "Write a synthetic planted-topic corpus");
    synth->add_option("--path", synth_path, "Output JSONL file");
    synth->add_option("--blobs", spec.blobs);
    synth->add_option("--posts-per-blob", spec.posts_per_blob);
    synth->add_option("--comments-per-post", spec.comments_per_post);
    synth->add_option("--disclosure-rate", spec.disclosure_rate);
    synth->add_option("--labeled-per-class", spec.labeled_per_class);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfig;
    }
    if (seed_opt->count() > 0) flags.seed = seed;

    try {
        if (synth->parsed()) {
            if (flags.seed) spec.seed = *flags.seed;
            return run_synth(synth_path, spec);
        }
        if (report_cmd->parsed()) {
            const PipelineConfig config = load_config(flags);
            write_report(config.output_dir);
            std::cout << "report: " << (fs::path(config.output_dir) / artifacts::kReportMd).string() << "\n";
            return kOk;
        }
        if (run_all->parsed()) return run_stages(flags, std::nullopt, true);
        return run_stages(flags, chosen, false);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}
