#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace scl {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    // FNV-1a, folded through splitmix64 to spread short tags.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h);
}

// Deterministic random stream. All floating-point draws are derived from
// raw 64-bit engine output rather than std:: distributions, whose results
// are implementation-defined; outputs are therefore identical across
// standard libraries and platforms.
//
// Substreams are derived from the original seed, not from engine state, so
// rng.derive(tag) yields the same stream no matter how many draws the
// parent has already made.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform index in [0, n); n must be positive.
    std::size_t uniform_index(std::size_t n) {
        // uniform() < 1, so the product is < n and the cast floors safely.
        auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal, Box-Muller. The spare draw is kept so consecutive
    // calls consume engine output in a fixed pattern.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

    Rng derive(std::uint64_t stream_id) const {
        return Rng(splitmix64(seed_ ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL)));
    }

    Rng derive(std::string_view tag) const { return derive(hash_tag(tag)); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace scl
