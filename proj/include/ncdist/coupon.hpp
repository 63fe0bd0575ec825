#pragma once

#include <cstdint>
#include <cstddef>

#include "ncdist/rng.hpp"

namespace ncdist::coupon {

// Coupon-collection parameters: universe size s, and for the coded variant
// the field order q (a power of two, >= 2). Draws in the coded variant are
// uniform random vectors in GF(q)^s; a draw succeeds when it raises the
// collected rank.
struct coupon_model {
    size_t s = 1;
    uint64_t q = 2;
};

struct coupon_stats {
    double mean = 0;
    size_t trials = 0;
    double std_error = 0;
};

// probability that draw of the i-th distinct coupon succeeds: 1 - (i-1)/s
double p_draw(size_t i, size_t s);

// expected draws to obtain the i-th distinct coupon: s / (s - i + 1)
double expected_wait(size_t i, size_t s);

// expected sample size to collect i distinct coupons: s * (1/s + ... + 1/(s-i+1))
double expected_sample(size_t i, size_t s);

// expected number of distinct coupons in a sample of size n: s(1 - (1 - 1/s)^n)
double expected_distinct(uint64_t n, size_t s);

// coded analogues over GF(q)^s
double coded_p_draw(size_t i, const coupon_model& m);         // 1 - q^(i-1)/q^s
double coded_expected_wait(size_t i, const coupon_model& m);  // q^s/(q^s - q^(i-1))
double coded_expected_sample(size_t i, const coupon_model& m);

coupon_stats monte_carlo_classic(size_t s, size_t target_i, size_t trials, rng& r);
coupon_stats monte_carlo_coded(const coupon_model& m, size_t target_i, size_t trials, rng& r);

} // namespace ncdist::coupon
