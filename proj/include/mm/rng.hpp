#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mm {

// Deterministic RNG with explicit distributions so that results do not depend
// on the standard library implementation. All randomness in the project flows
// from one root seed, split per purpose and index.
class RngStream {
public:
    explicit RngStream(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive range.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(
                        static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * span) >> 64));
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        // Box-Muller; one value per draw keeps the stream position simple.
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

// Child stream derived from a root seed, a purpose label, and an index.
inline RngStream derive_rng(uint64_t root, std::string_view purpose, uint64_t index = 0) {
    uint64_t s = root ^ fnv1a64(purpose) ^ (0x632be59bd9b4e019ull * (index + 1));
    return RngStream(s);
}

}  // namespace mm
