#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace evonet {

// All randomness in the project flows through this header. std::* distributions
// are implementation-defined, so every draw is spelled out here; two builds with
// the same seeds produce the same streams.

inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Named substream derivation: derive_seed(master, "train", {gen, idx, repeat}).
// Results do not depend on evaluation order, which is what makes worker-count
// independence possible in the evolution engine.
inline uint64_t derive_seed(uint64_t base, std::string_view tag,
                            std::initializer_list<uint64_t> indices = {}) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    uint64_t s = mix64(base ^ h);
    for (uint64_t idx : indices) {
        s = mix64(s ^ mix64(idx + 0x51ed2701a9e3cc71ULL));
    }
    return s;
}

class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Inclusive bounds. Multiply-shift mapping; bias is < 2^-57 for our ranges.
    int uniform_int(int lo, int hi) {
        const uint64_t n = static_cast<uint64_t>(hi - lo + 1);
        const uint64_t r = static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
        return lo + static_cast<int>(r);
    }

    size_t uniform_index(size_t n) {
        return static_cast<size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    double uniform01() {  // [0, 1)
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; the sine branch is discarded to keep the stream position
    // a pure function of the number of calls.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {  // Fisher-Yates
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[uniform_index(v.size())];
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace evonet
