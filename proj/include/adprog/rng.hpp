#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace adprog {

// Splitmix64 step. Fully specified, platform independent.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a over a string, used to derive per-stage seeds from a global seed.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stage seed derivation: stage_seed = splitmix64(global_seed ^ fnv1a(stage)).
inline std::uint64_t stage_seed(std::uint64_t global_seed, std::string_view stage) {
    std::uint64_t s = global_seed ^ fnv1a(stage);
    return splitmix64(s);
}

// Deterministic RNG built on splitmix64. We avoid <random> distributions
// because their output is not pinned by the standard across library
// implementations; every draw here is bit-reproducible everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller, spare value cached.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_unit();
        double u2 = next_unit();
        // avoid log(0)
        while (u1 <= 0.0) u1 = next_unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Counter-based uniform in [0,1) keyed by (seed, stream, step, index).
// Stateless; used by dropout so training runs are bit-reproducible.
inline double counter_unit(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                           std::uint64_t index) {
    std::uint64_t s = seed;
    s ^= 0x9e3779b97f4a7c15ULL * (stream + 1);
    (void)splitmix64(s);
    s ^= 0xc2b2ae3d27d4eb4fULL * (step + 1);
    (void)splitmix64(s);
    s ^= index;
    std::uint64_t z = splitmix64(s);
    return static_cast<double>(z >> 11) * 0x1.0p-53;
}

}  // namespace adprog
