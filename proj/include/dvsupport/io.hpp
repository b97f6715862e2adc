#ifndef DVSUPPORT_IO_HPP
#define DVSUPPORT_IO_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unistd.h>

#include "dvsupport/error.hpp"

namespace dvsupport::io {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, path.string(), "cannot open for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

/// Writes to a sibling temporary file, flushes it to disk, then renames it
/// over `path`. Readers observe either the old content or the new content.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
    {
        std::FILE* f = std::fopen(tmp.c_str(), "wb");
        if (f == nullptr) throw Error(ErrorCode::IoError, tmp.string(), "cannot open for writing");
        const bool ok = std::fwrite(content.data(), 1, content.size(), f) == content.size() &&
                        std::fflush(f) == 0 && ::fsync(::fileno(f)) == 0;
        std::fclose(f);
        if (!ok) {
            std::filesystem::remove(tmp);
            throw Error(ErrorCode::IoError, tmp.string(), "short write");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error(ErrorCode::IoError, path.string(), "rename failed: " + ec.message());
    }
}

} // namespace dvsupport::io

#endif // DVSUPPORT_IO_HPP
