#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace slidekit {

// splitmix64, used to expand user seeds into generator state.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Independent seed for (seed, lane); one user seed fans out into the init /
// noise / shuffle / split seed bundle through distinct lanes.
inline uint64_t derive_seed(uint64_t seed, uint64_t lane) {
    uint64_t s = seed;
    const uint64_t a = splitmix64(s);
    uint64_t b = a ^ (lane * 0x9E3779B97F4A7C15ull + 0x6A09E667F3BCC909ull);
    return splitmix64(b);
}

// xoshiro256++ (Blackman & Vigna). Bit-portable: no standard-library
// distribution machinery is involved anywhere in the toolkit.
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& s : state_) {
            s = splitmix64(sm);
        }
    }

    uint64_t next() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t state_[4];
};

// Seeded stream of uniforms, gaussians and shuffles. Distinct lanes of the
// same seed are independent streams; (seed, lane) fully determines output.
class RandomStream {
public:
    explicit RandomStream(uint64_t seed) : rng_(seed) {}

    static RandomStream substream(uint64_t seed, uint64_t lane) {
        return RandomStream(derive_seed(seed, lane));
    }

    uint64_t next_u64() { return rng_.next(); }

    // [0, 1)
    double uniform() { return static_cast<double>(rng_.next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // N(0, 1) via Box-Muller, second value cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double sigma) { return sigma * gaussian(); }

    // Uniform integer in [0, n), n >= 1. Fixed-point multiply keeps the
    // mapping identical on every platform.
    uint32_t below(uint32_t n) {
        const uint64_t x = rng_.next() >> 32;
        return static_cast<uint32_t>((x * n) >> 32);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = below(static_cast<uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    Xoshiro256pp rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace slidekit
