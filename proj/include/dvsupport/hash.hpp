#ifndef DVSUPPORT_HASH_HPP
#define DVSUPPORT_HASH_HPP

#include <cstdint>
#include <string_view>

namespace dvsupport {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// 64-bit FNV-1a over the raw bytes of `bytes`.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = kFnvOffsetBasis) {
    std::uint64_t h = seed;
    for (char c : bytes) {
        h ^= static_cast<std::uint8_t>(c);
        h *= kFnvPrime;
    }
    return h;
}

} // namespace dvsupport

#endif // DVSUPPORT_HASH_HPP
