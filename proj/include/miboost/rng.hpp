#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace miboost {

using Rng = std::mt19937_64;

inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Independent random stream keyed by a purpose label, a seed and optional
/// sub-keys (round, fold, imputation...). Streams with different keys never
/// share state, so adding a consumer does not shift any other stream.
inline Rng make_stream(std::string_view purpose, std::uint64_t seed,
                       std::initializer_list<std::uint64_t> keys = {}) {
    std::vector<std::uint32_t> words;
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffULL));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(fnv1a(purpose));
    push(seed);
    for (auto k : keys) push(k);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

/// Derive a child seed, for handing a sub-seed to an API that takes one.
inline std::uint64_t derive_seed(std::string_view purpose, std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> keys = {}) {
    auto rng = make_stream(purpose, seed, keys);
    return rng();
}

}  // namespace miboost
