#ifndef DVSUPPORT_PIPELINE_REPORT_HPP
#define DVSUPPORT_PIPELINE_REPORT_HPP

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dvsupport/error.hpp"
#include "dvsupport/io.hpp"
#include "dvsupport/pipeline/manifest.hpp"
#include "dvsupport/pipeline/stages.hpp"
#include "dvsupport/summarize.hpp"
#include "dvsupport/support.hpp"

namespace dvsupport::pipeline {

/// 3062 -> "3,062".
inline std::string group_thousands(std::uint64_t v) {
    std::string digits = std::to_string(v);
    std::string out;
    const std::size_t lead = digits.size() % 3;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i > 0 && i >= lead && (i - lead) % 3 == 0) out += ',';
        out += digits[i];
    }
    return out;
}

namespace report_detail {

inline std::string cell(std::string s) {
    for (std::size_t pos = 0; (pos = s.find('|', pos)) != std::string::npos; pos += 2) s.replace(pos, 1, "\\|");
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

inline std::uint64_t count(const nlohmann::json& j, const char* key) { return j.value(key, std::uint64_t{0}); }

} // namespace report_detail

/**
 * Renders report.md from the artifacts named in the stage manifests. The
 * evaluation section appears only when that stage ran.
 */
inline std::string render_report(const fs::path& out_dir) {
    for (Stage needed : {Stage::Detect, Stage::Cluster, Stage::Summarize, Stage::Support}) {
        if (!load_manifest(out_dir, stage_name(needed))) {
            throw Error(ErrorCode::MissingUpstream, std::string(stage_name(needed)), "report needs this stage's artifacts");
        }
    }
    using report_detail::cell;
    using report_detail::count;
    const auto detect = read_json(out_dir / artifacts::kDetectStats);
    const auto meta = read_json(out_dir / artifacts::kClustersMeta);
    const auto topics = parse_topics_json(io::read_file(out_dir / artifacts::kTopics));
    const auto pool = parse_pool_json(io::read_file(out_dir / artifacts::kSupportPool));
    const auto mapping = parse_mapping_json(io::read_file(out_dir / artifacts::kMapping));

    std::map<int, const SupportCategory*> pool_by_id;
    for (const auto& s : pool) pool_by_id[s.id] = &s;

    std::string md = "# Self-disclosure topics and support provisions\n\n";

    md += "## Detection counts\n\n";
    md += "| source | self-disclosure | non-self-disclosure |\n|---|---:|---:|\n";
    md += "| human-labeled | " + group_thousands(count(detect, "human_self_disclosure")) + " | " +
          group_thousands(count(detect, "human_non_self_disclosure")) + " |\n";
    md += "| model-labeled | " + group_thousands(count(detect, "model_self_disclosure")) + " | " +
          group_thousands(count(detect, "model_non_self_disclosure")) + " |\n";
    md += "| **total** | " + group_thousands(count(detect, "total_self_disclosure")) + " | " +
          group_thousands(count(detect, "total_non_self_disclosure")) + " |\n\n";
    if (const auto unresolved = count(detect, "unresolved"); unresolved > 0) {
        md += "Unresolved verdicts (excluded, see `" + std::string(artifacts::kFailures) + "`): " + group_thousands(unresolved) + "\n\n";
    }

    md += "## Clusters\n\n";
    const auto sizes = meta.at("sizes").get<std::vector<std::uint64_t>>();
    const auto stab = meta.at("stabilities").get<std::vector<double>>();
    md += "| cluster | posts | stability |\n|---:|---:|---:|\n";
    char buf[64];
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%.4f", c < stab.size() ? stab[c] : 0.0);
        md += "| " + std::to_string(c) + " | " + group_thousands(sizes[c]) + " | " + buf + " |\n";
    }
    md += "\nNoise posts: " + group_thousands(count(meta, "noise")) + "\n\n";

    md += "## Topics and support provisions\n\n";
    md += "| cluster | topic | supports | unmapped phrases |\n|---:|---|---|---|\n";
    std::map<int, const TopicSupportEntry*> entry_by_cluster;
    for (const auto& e : mapping.clusters) entry_by_cluster[e.cluster] = &e;
    for (const auto& t : topics) {
        std::string supports;
        std::string unmapped;
        if (auto it = entry_by_cluster.find(t.cluster); it != entry_by_cluster.end()) {
            for (int id : it->second->supports) {
                if (!supports.empty()) supports += "; ";
                auto p = pool_by_id.find(id);
                supports += std::to_string(id) + ". " + (p != pool_by_id.end() ? p->second->name : std::string("?"));
            }
            for (const auto& u : it->second->unmapped) {
                if (!unmapped.empty()) unmapped += "; ";
                unmapped += u;
            }
        }
        md += "| " + std::to_string(t.cluster) + " | " + cell(t.topic) + " | " + cell(supports.empty() ? "-" : supports) + " | " +
              cell(unmapped.empty() ? "-" : unmapped) + " |\n";
    }

    md += "\n## Support pool\n\n";
    for (const auto& s : pool) {
        md += std::to_string(s.id) + ". **" + s.name + "**";
        if (!s.description.empty()) md += ": " + s.description;
        md += "\n";
    }

    if (load_manifest(out_dir, stage_name(Stage::Evaluate))) {
        const auto rep = read_json(out_dir / artifacts::kReportJson);
        md += "\n## Detector evaluation\n\n";
        md += "Protocol: " + rep.value("protocol", std::string()) + ", k = " + std::to_string(rep.value("k", 0)) + ".\n\n";
        md += "| metric | mean (± std) |\n|---|---|\n";
        for (const char* metric : {"accuracy", "precision", "recall", "f1"}) {
            md += std::string("| ") + metric + " | " + rep.at("aggregate").at(metric).at("formatted").get<std::string>() + " |\n";
        }
        md += "\nPer-fold rows for plotting: `" + std::string(artifacts::kReportCsv) + "`.\n";
    }

    md += "\n## Plot data\n\n";
    md += "2-d layout for a scatter plot: `" + std::string(artifacts::kLayout2d) + "` (columns id,x,y); join on id with `" +
          std::string(artifacts::kClusters) + "` for cluster colours.\n";
    return md;
}

inline void write_report(const fs::path& out_dir) { io::write_file_atomic(out_dir / artifacts::kReportMd, render_report(out_dir)); }

} // namespace dvsupport::pipeline

#endif // DVSUPPORT_PIPELINE_REPORT_HPP
