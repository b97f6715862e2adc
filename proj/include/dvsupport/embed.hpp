#ifndef DVSUPPORT_EMBED_HPP
#define DVSUPPORT_EMBED_HPP

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvsupport/corpus.hpp"
#include "dvsupport/error.hpp"
#include "dvsupport/hash.hpp"
#include "dvsupport/io.hpp"
#include "dvsupport/matrix.hpp"
#include "dvsupport/text.hpp"

namespace dvsupport {

inline constexpr std::size_t kEmbeddingDim = 384;

enum class NormFlag { UnitNorm, Zero };

struct EmbeddingVector {
    std::array<double, kEmbeddingDim> values{};
    NormFlag norm_flag = NormFlag::Zero;

    bool operator==(const EmbeddingVector&) const = default;
};

struct EmbeddingMatrix {
    std::vector<EmbeddingVector> rows;
    std::vector<std::string> row_ids;

    std::size_t size() const { return rows.size(); }

    /// Dense copy for the numeric stages.
    Matrix to_matrix() const {
        Matrix m(rows.size(), kEmbeddingDim);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::copy(rows[i].values.begin(), rows[i].values.end(), m.row(i).begin());
        }
        return m;
    }
};

/// Rescales to unit L2 norm in place, or flags the vector Zero.
inline void normalize(EmbeddingVector& v) {
    double sq = 0.0;
    for (double x : v.values) sq += x * x;
    if (sq == 0.0 || !std::isfinite(sq)) {
        v.values.fill(0.0);
        v.norm_flag = NormFlag::Zero;
        return;
    }
    const double norm = std::sqrt(sq);
    for (double& x : v.values) x /= norm;
    v.norm_flag = NormFlag::UnitNorm;
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.norm_flag == NormFlag::Zero || b.norm_flag == NormFlag::Zero) return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) dot += a.values[i] * b.values[i];
    return dot;
}

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual EmbeddingVector embed(std::string_view text) = 0;

    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed(t));
        return out;
    }
};

/// Lowercased tokens: maximal runs of ASCII letters/digits and non-ASCII
/// bytes (so UTF-8 words stay whole).
inline std::vector<std::string> hashing_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        const bool word = (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || u >= 0x80;
        if (word) {
            current.push_back((u >= 'A' && u <= 'Z') ? static_cast<char>(u - 'A' + 'a') : c);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

/**
 * Signed feature hashing into 384 buckets: each token adds +1 (or -1 when bit
 * 63 of its FNV-1a hash is set) at index hash mod 384; the sum is then
 * L2-normalized. Pure and reentrant.
 */
class HashingEmbedder final : public EmbeddingProvider {
public:
    EmbeddingVector embed(std::string_view text) override { return embed_hashing(text); }

    static EmbeddingVector embed_hashing(std::string_view text) {
        EmbeddingVector v;
        for (const auto& token : hashing_tokens(text)) {
            const std::uint64_t h = fnv1a64(token);
            const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
            v.values[h % kEmbeddingDim] += sign;
        }
        normalize(v);
        return v;
    }
};

/// Row i embeds post_text(posts[i]).
inline EmbeddingMatrix embed_corpus(std::span<const Post> posts, EmbeddingProvider& provider) {
    if (posts.empty()) throw Error(ErrorCode::InvalidArgument, "embed_corpus needs at least one post");
    EmbeddingMatrix m;
    std::set<std::string_view> seen;
    std::vector<std::string> texts;
    texts.reserve(posts.size());
    for (const auto& p : posts) {
        if (!seen.insert(p.id).second) throw Error(ErrorCode::DuplicateId, p.id, "duplicate post id in embedding input");
        texts.push_back(post_text(p));
        m.row_ids.push_back(p.id);
    }
    try {
        m.rows = provider.embed_batch(texts);
    } catch (const Error& e) {
        throw e.with_context("embedding corpus");
    }
    if (m.rows.size() != m.row_ids.size()) {
        throw Error(ErrorCode::ProviderError, "provider returned " + std::to_string(m.rows.size()) + " vectors for " +
                                                   std::to_string(m.row_ids.size()) + " texts");
    }
    return m;
}

// ---------------------------------------------------------------------------
// Binary matrix artifact: "EMB1", u32 rows, u32 dim, rows*dim little-endian f32.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

} // namespace detail

inline std::string encode_matrix(const Matrix& m) {
    std::string out = "EMB1";
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    out.reserve(out.size() + m.values().size() * 4);
    for (double x : m.values()) {
        // Conversion rounds to nearest.
        const auto f = static_cast<float>(x);
        detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

inline Matrix decode_matrix(std::string_view bytes) {
    if (bytes.size() < 12 || bytes.substr(0, 4) != "EMB1") {
        throw Error(ErrorCode::MalformedRecord, "header", "not an EMB1 matrix");
    }
    const std::uint32_t rows = detail::get_u32(bytes, 4);
    const std::uint32_t cols = detail::get_u32(bytes, 8);
    const std::size_t expected = 12 + static_cast<std::size_t>(rows) * cols * 4;
    if (bytes.size() != expected) {
        throw Error(ErrorCode::MalformedRecord, "payload", "size " + std::to_string(bytes.size()) + ", expected " + std::to_string(expected));
    }
    Matrix m(rows, cols);
    std::size_t at = 12;
    for (double& x : m.values()) {
        x = static_cast<double>(std::bit_cast<float>(detail::get_u32(bytes, at)));
        at += 4;
    }
    return m;
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) { io::write_file_atomic(path, encode_matrix(m)); }

inline Matrix read_matrix(const std::filesystem::path& path) { return decode_matrix(io::read_file(path)); }

inline void write_ids(const std::filesystem::path& path, std::span<const std::string> ids) {
    std::string out;
    for (const auto& id : ids) {
        out += id;
        out += '\n';
    }
    io::write_file_atomic(path, out);
}

inline std::vector<std::string> read_ids(const std::filesystem::path& path) {
    std::vector<std::string> ids;
    const std::string content = io::read_file(path);
    for (auto line : text::lines(content)) ids.emplace_back(line);
    return ids;
}

/// Rebuilds embedding vectors from a stored matrix (re-normalizing each row).
inline EmbeddingMatrix embeddings_from_matrix(const Matrix& m, std::vector<std::string> ids) {
    if (m.cols() != kEmbeddingDim) {
        throw Error(ErrorCode::MalformedRecord, "dimension", "expected " + std::to_string(kEmbeddingDim) + " columns");
    }
    if (ids.size() != m.rows()) throw Error(ErrorCode::MalformedRecord, "ids", "id count does not match row count");
    EmbeddingMatrix out;
    out.row_ids = std::move(ids);
    out.rows.resize(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        std::copy(row.begin(), row.end(), out.rows[i].values.begin());
        normalize(out.rows[i]);
    }
    return out;
}

} // namespace dvsupport

#endif // DVSUPPORT_EMBED_HPP
