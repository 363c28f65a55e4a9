#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace pucox {

// splitmix64; used both as a generator and to derive child stream seeds.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d9b94eab0bf1edULL;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t seed, uint64_t v) {
    uint64_t s = seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
    return splitmix64(s);
}

inline uint64_t hash_str(uint64_t seed, const std::string& s) {
    // FNV-1a folded into the stream seed
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return hash_combine(seed, h);
}

// Deterministic RNG. Streams derived from (seed, key...) are independent and
// stable across platforms; no std::random distributions are used so results
// are pinned by this file alone.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // decorrelate trivially close seeds
        for (int i = 0; i < 2; ++i) splitmix64(state_);
    }

    static Rng stream(uint64_t seed, uint64_t key) { return Rng(hash_combine(seed, key)); }
    static Rng stream(uint64_t seed, uint64_t key1, uint64_t key2) {
        return Rng(hash_combine(hash_combine(seed, key1), key2));
    }
    static Rng stream(uint64_t seed, const std::string& key) { return Rng(hash_str(seed, key)); }

    uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n)
    uint64_t uniform_index(uint64_t n) {
        if (n == 0) return 0;
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    double exponential(double rate) {
        // inverse CDF; 1-uniform() is in (0, 1]
        return -std::log(1.0 - uniform()) / rate;
    }

    double normal() {
        // Box-Muller, one value per call (cached pair dropped for simplicity)
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // n indices drawn with replacement from [0, n)
    std::vector<size_t> resample_indices(size_t n) {
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = size_t(uniform_index(n));
        return idx;
    }

private:
    uint64_t state_;
};

}  // namespace pucox
