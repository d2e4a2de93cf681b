#pragma once

#include <cstdint>
#include <cmath>

namespace paretoda {

// All randomness in the project flows from one root seed through
// seed_path(): substreams are derived by hashing (root, label, index)
// rather than by drawing from a shared sequential stream, so adding a
// consumer never perturbs the draws seen by another.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t seed_path(std::uint64_t root, std::uint64_t label, std::uint64_t index = 0) {
    std::uint64_t s = root;
    (void)splitmix64(s);
    s ^= 0x632be59bd9b4e019ULL * (label + 1);
    (void)splitmix64(s);
    s ^= 0x9e3779b97f4a7c15ULL * (index + 1);
    return splitmix64(s);
}

// xoshiro256++ seeded via splitmix64; distributions are hand-rolled so
// streams are bit-stable across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; the cached second value keeps call counts deterministic
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(6.283185307179586476925286766559 * u2);
        have_spare_ = true;
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling to avoid modulo bias
        const std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace paretoda
