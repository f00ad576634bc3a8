#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tact {

// All contract violations surface as tact::Error. Callers that want to keep
// going (CLI, pipeline) catch at the stage boundary.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void check(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

// FNV-1a, used for stage markers and frozen-parameter integrity checks.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace tact
