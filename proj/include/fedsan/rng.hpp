#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fedsan {

// Deterministic PRNG with a fixed algorithm. The standard library engines are
// portable but <random> distributions are not, so all sampling is spelled out
// here. Every randomized component in the system draws from this type.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // Warm up so that small seeds do not produce correlated first draws.
        next_u64();
        next_u64();
    }

    // splitmix64 step
    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). n must be positive.
    int uniform_int(int n) {
        return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
    }

    /// Standard normal via Box-Muller (no spare caching, keeps the stream
    /// position a pure function of the number of calls).
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = next_double();
        double u2 = next_double();
        // Guard against log(0).
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

private:
    std::uint64_t state_;
};

/// Deterministic seed derivation: folds the arguments through splitmix64 so
/// that e.g. per-client-per-round seeds are independent of execution order.
inline std::uint64_t mix_seed(std::uint64_t a) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
    std::uint64_t folded = mix_seed(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
    if constexpr (sizeof...(rest) == 0) {
        return folded;
    } else {
        return mix_seed(folded, rest...);
    }
}

/// FNV-1a over bytes; used for config digests and suite hashes.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// FNV-1a over a token sequence, with an extra seed fold. Used by the
/// teacher oracle's injectable failure channel.
inline std::uint64_t fnv1a_tokens(const std::vector<int>& tokens, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ mix_seed(seed);
    for (int t : tokens) {
        for (int shift = 0; shift < 32; shift += 8) {
            h ^= static_cast<std::uint64_t>((t >> shift) & 0xff);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace fedsan
