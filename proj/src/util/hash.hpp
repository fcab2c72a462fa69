#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tcdiv {

// FNV-1a, used for config and parameter fingerprints (not cryptographic).
inline uint64_t fnv1a(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a_bytes(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(std::string_view(static_cast<const char*>(data), n), h);
}

std::string hex64(uint64_t v);

}  // namespace tcdiv
