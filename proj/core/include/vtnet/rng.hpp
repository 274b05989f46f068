#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace vtnet {

// Seeded RNG with hand-rolled distributions. mt19937_64 output is pinned by the
// standard, and the distributions below use only arithmetic with fully defined
// results, so identical seeds give identical streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform index in [0, n). n must be > 0.
    std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(eng_() % n); }

    // Standard normal via Irwin-Hall (sum of 12 uniforms), exact arithmetic only.
    double normal() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += uniform01();
        return s - 6.0;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    bool bernoulli(double p) { return uniform01() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            using std::swap;
            swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

// Deterministic seed derivation (splitmix64 over base and tags).
inline std::uint64_t mix_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    auto split = [](std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t state = base;
    std::uint64_t out = split(state);
    for (std::uint64_t t : tags) {
        state ^= t + 0x9e3779b97f4a7c15ULL + (state << 6) + (state >> 2);
        out ^= split(state);
    }
    return out;
}

}  // namespace vtnet
