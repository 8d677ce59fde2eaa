#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace sgrisk {

// SplitMix64: used both as a stream mixer and to derive independent
// substreams from (seed, index) pairs so parallel generation stays
// deterministic regardless of thread count.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

// xoshiro256** with hand-rolled double/gaussian transforms.  The std
// distributions are implementation-defined, which would break the
// byte-reproducibility contract across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t s = seed;
        for (auto& w : state_) {
            s = splitmix64(s);
            w = s;
        }
        has_cached_gauss_ = false;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller.
    double gaussian() {
        if (has_cached_gauss_) {
            has_cached_gauss_ = false;
            return cached_gauss_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        cached_gauss_ = r * std::sin(theta);
        has_cached_gauss_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double std) { return mean + std * gaussian(); }

    // Fisher-Yates, deterministic for a given state.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    double cached_gauss_ = 0.0;
    bool has_cached_gauss_;
};

}  // namespace sgrisk
