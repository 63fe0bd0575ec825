#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ncdist {

// Deterministic random source. All sampling goes through this wrapper so
// that runs are reproducible across platforms: std::mt19937_64 has a
// standard-specified sequence, while std::*_distribution does not.
class rng {
public:
    explicit rng(uint64_t seed) : m_seed(seed), m_eng(seed) {}

    uint64_t seed() const { return m_seed; }

    uint64_t next() { return m_eng(); }

    // uniform integer in [0, n); n must be > 0
    uint64_t below(uint64_t n) { return m_eng() % n; }

    size_t index(size_t n) { return static_cast<size_t>(below(n)); }

    // uniform double in [0, 1)
    double unit() { return static_cast<double>(m_eng() >> 11) * 0x1.0p-53; }

    // exponential with given mean
    double expo(double mean) { return -mean * std::log1p(-unit()); }

    bool chance(double p) { return unit() < p; }

    // derive an independent stream keyed on the original seed, not on the
    // current engine position
    rng fork(uint64_t salt) const {
        uint64_t x = m_seed ^ (salt + 0x9e3779b97f4a7c15ull);
        x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27; x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return rng(x);
    }

private:
    uint64_t m_seed;
    std::mt19937_64 m_eng;
};

} // namespace ncdist
