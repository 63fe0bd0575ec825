#pragma once

// Reference implementations used as independent oracles by the test
// suites. Everything here is deliberately written the slow, obvious way
// and must stay independent of the library code paths it checks.

#include <cmath>
#include <cstdint>
#include <vector>

#include "ncdist/gf.hpp"

namespace oracle {

// carry-less polynomial multiply followed by long-division reduction
inline uint16_t gf_mul_ref(uint16_t a, uint16_t b, unsigned bits, uint32_t poly) {
    uint64_t prod = 0;
    for (unsigned i = 0; i < 16; ++i)
        if (b & (1u << i)) prod ^= static_cast<uint64_t>(a) << i;
    for (int bit = 31; bit >= static_cast<int>(bits); --bit)
        if (prod & (1ull << bit)) prod ^= static_cast<uint64_t>(poly) << (bit - bits);
    return static_cast<uint16_t>(prod);
}

// brute-force inverse by scanning all nonzero elements
inline uint16_t gf_inv_ref(uint16_t a, unsigned bits, uint32_t poly) {
    const uint32_t order = 1u << bits;
    for (uint32_t x = 1; x < order; ++x)
        if (gf_mul_ref(a, static_cast<uint16_t>(x), bits, poly) == 1)
            return static_cast<uint16_t>(x);
    return 0;
}

// determinant over the field via fraction-free-ish Gaussian elimination
inline uint16_t det_ref(std::vector<std::vector<uint16_t>> m, const ncdist::gf::field& f) {
    const size_t n = m.size();
    uint16_t det = 1;
    for (size_t col = 0; col < n; ++col) {
        size_t piv = col;
        while (piv < n && m[piv][col] == 0) ++piv;
        if (piv == n) return 0;
        if (piv != col) std::swap(m[piv], m[col]); // char 2: swap leaves det sign alone
        det = f.mul(det, m[col][col]);
        uint16_t inv = f.inv(m[col][col]);
        for (size_t r = col + 1; r < n; ++r) {
            if (m[r][col] == 0) continue;
            uint16_t factor = f.mul(m[r][col], inv);
            for (size_t c = col; c < n; ++c)
                m[r][c] = f.add(m[r][c], f.mul(factor, m[col][c]));
        }
    }
    return det;
}

// columns are n-dim vectors; true iff they are linearly independent
inline bool independent_ref(const std::vector<std::vector<uint16_t>>& vecs,
                            const ncdist::gf::field& f) {
    const size_t n = vecs.size();
    std::vector<std::vector<uint16_t>> m(n, std::vector<uint16_t>(n, 0));
    for (size_t j = 0; j < n; ++j)
        for (size_t i = 0; i < n; ++i) m[i][j] = vecs[j][i];
    return det_ref(m, f) != 0;
}

struct running_stats {
    double sum = 0, sumsq = 0;
    size_t n = 0;
    void add(double x) { sum += x; sumsq += x * x; ++n; }
    double mean() const { return sum / static_cast<double>(n); }
    double std_error() const {
        double m = mean();
        double var = (sumsq / static_cast<double>(n)) - m * m;
        if (var < 0) var = 0;
        return std::sqrt(var / static_cast<double>(n));
    }
};

} // namespace oracle
