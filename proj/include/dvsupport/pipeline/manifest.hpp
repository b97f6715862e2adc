#ifndef DVSUPPORT_PIPELINE_MANIFEST_HPP
#define DVSUPPORT_PIPELINE_MANIFEST_HPP

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "dvsupport/error.hpp"
#include "dvsupport/io.hpp"

namespace dvsupport::pipeline {

namespace fs = std::filesystem;

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::IoError, "sha256", "digest computation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xF];
    }
    return out;
}

inline std::string sha256_file(const fs::path& path) { return sha256_hex(io::read_file(path)); }

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct ArtifactRecord {
    std::string path;  // relative to the output directory
    std::string sha256;
    std::uintmax_t bytes = 0;

    bool operator==(const ArtifactRecord&) const = default;
};

struct StageManifest {
    std::string stage;
    std::vector<ArtifactRecord> artifacts;
    std::map<std::string, std::string> inputs;  // upstream artifact path -> digest
    std::map<std::string, std::string> params;
    std::string created_utc;

    /// Everything that decides whether a stage must run again.
    bool same_inputs(const StageManifest& other) const {
        return stage == other.stage && inputs == other.inputs && params == other.params;
    }

    const ArtifactRecord* artifact(std::string_view path) const {
        for (const auto& a : artifacts) {
            if (a.path == path) return &a;
        }
        return nullptr;
    }
};

inline fs::path manifest_path(const fs::path& out_dir, std::string_view stage) {
    return out_dir / "manifests" / (std::string(stage) + ".json");
}

inline std::string serialize_manifest(const StageManifest& m) {
    nlohmann::ordered_json j;
    j["stage"] = m.stage;
    j["artifacts"] = nlohmann::ordered_json::array();
    for (const auto& a : m.artifacts) {
        j["artifacts"].push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
    }
    j["inputs"] = m.inputs;
    j["params"] = m.params;
    j["created_utc"] = m.created_utc;
    return j.dump(2) + "\n";
}

inline StageManifest parse_manifest(std::string_view content) {
    const auto j = nlohmann::json::parse(content, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::MalformedRecord, "manifest", "not a JSON object");
    StageManifest m;
    try {
        m.stage = j.at("stage").get<std::string>();
        for (const auto& a : j.at("artifacts")) {
            m.artifacts.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>(), a.at("bytes").get<std::uintmax_t>()});
        }
        m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
        m.params = j.at("params").get<std::map<std::string, std::string>>();
        m.created_utc = j.value("created_utc", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, "manifest", e.what());
    }
    return m;
}

/// Reads a stage manifest; nullopt when absent. Throws when the manifest
/// exists but an artifact on disk no longer matches its digest.
inline std::optional<StageManifest> load_manifest(const fs::path& out_dir, std::string_view stage, bool verify = true) {
    const fs::path path = manifest_path(out_dir, stage);
    if (!fs::exists(path)) return std::nullopt;
    StageManifest m = parse_manifest(io::read_file(path));
    if (verify) {
        for (const auto& a : m.artifacts) {
            const fs::path file = out_dir / a.path;
            if (!fs::exists(file) || sha256_file(file) != a.sha256) return std::nullopt;
        }
    }
    return m;
}

/// Digests the listed artifacts (already written) and publishes the
/// manifest last, so a manifest never points at a partial artifact.
inline StageManifest commit_manifest(const fs::path& out_dir, StageManifest m, const std::vector<std::string>& artifact_paths) {
    m.artifacts.clear();
    for (const auto& rel : artifact_paths) {
        const fs::path file = out_dir / rel;
        m.artifacts.push_back({rel, sha256_file(file), fs::file_size(file)});
    }
    if (m.created_utc.empty()) m.created_utc = utc_timestamp();
    io::write_file_atomic(manifest_path(out_dir, m.stage), serialize_manifest(m));
    return m;
}

/// Exclusive advisory lock on <out>/.lock for the lifetime of the object.
class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& out_dir) {
        fs::create_directories(out_dir);
        path_ = out_dir / ".lock";
        fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd_ < 0) throw Error(ErrorCode::IoError, path_.string(), "cannot open lock file");
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            throw Error(ErrorCode::IoError, out_dir.string(), "output directory is locked by another process");
        }
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;
    ~DirectoryLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }

private:
    fs::path path_;
    int fd_ = -1;
};

} // namespace dvsupport::pipeline

#endif // DVSUPPORT_PIPELINE_MANIFEST_HPP
