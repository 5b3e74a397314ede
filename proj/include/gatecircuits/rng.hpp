// Deterministic random utilities.
//
// All stochastic steps in the library (sampling, shuffles, noise, mask init)
// go through SplitMix64 / Pcg64 below instead of <random> distributions, so
// results are bit-identical across standard library implementations.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace gatecircuits {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    return splitmix64(s);
}

inline std::uint64_t hash_str(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Seed fan-out: (root seed, cell index, purpose tag) -> independent stream.
// Adding cells never perturbs the streams of existing cells.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t cell, std::string_view purpose) {
    return hash_combine(hash_combine(root, cell), hash_str(purpose));
}

// Small counter-based generator (xorshift-multiply over a SplitMix64 stream).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ^ 0x5851f42d4c957f2dULL) {
        // avoid the all-zero fixed point
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, n) without modulo bias.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in (0, 1), safe for log().
    double uniform_open() {
        double u = uniform();
        return u <= 0.0 ? 0x1.0p-53 : u;
    }

    double normal(double mean = 0.0, double std = 1.0) {
        // Box-Muller; one value per call keeps the stream position predictable.
        double u1 = uniform_open();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + std * r * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace gatecircuits
