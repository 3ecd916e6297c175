#pragma once
// Deterministic RNG. All randomness in the project flows through this file:
// xoshiro256** streams keyed by (seed, epoch, sequence id, purpose) via
// splitmix64 mixing. No std:: distributions anywhere — their outputs are not
// portable across standard library implementations, and bitwise
// reproducibility of runs is part of the contract.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace xda {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Stream labels. Numeric values are part of the persisted-determinism
// contract: changing them changes every derived stream.
enum class Stream : uint64_t {
    init = 1,        // parameter initialization
    mask_select = 2, // which positions get masked
    mask_group = 3,  // <MASK> vs random-byte assignment
    mask_byte = 4,   // replacement byte draws
    shuffle = 5,     // per-epoch sequence order
    dropout = 6,     // dropout masks
    synth = 7,       // synthetic corpus generation
    split = 8,       // corpus split assignment
    misc = 9,
};

class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
        if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1; // all-zero state is invalid
    }

    // Derive an independent stream from structured coordinates. Each
    // coordinate is mixed through splitmix64 so nearby ids don't produce
    // correlated streams.
    static Rng derive(uint64_t seed, Stream purpose, uint64_t epoch = 0, uint64_t sequence = 0) {
        uint64_t sm = seed;
        uint64_t a = splitmix64(sm);
        sm ^= 0x6a09e667f3bcc909ull + static_cast<uint64_t>(purpose);
        uint64_t b = splitmix64(sm);
        sm ^= 0xbb67ae8584caa73bull + epoch;
        uint64_t c = splitmix64(sm);
        sm ^= 0x3c6ef372fe94f82bull + sequence;
        uint64_t d = splitmix64(sm);
        return Rng(a ^ rotl(b, 17) ^ rotl(c, 31) ^ rotl(d, 47));
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Unbiased integer in [0, n) by rejection on the top of the range.
    uint64_t below(uint64_t n) {
        const uint64_t threshold = -n % n; // 2^64 mod n
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform double in [0, 1) with 53 random bits.
    double real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (pair cached). Deterministic given the
    // stream; log(0) is impossible because real() < 1 implies 1-real() > 0.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u = 1.0 - real();
        double v = real();
        double r = std::sqrt(-2.0 * std::log(u));
        double theta = 2.0 * 3.141592653589793238462643 * v;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return real() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace xda
