#include "ncdist/coupon.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncdist/coding.hpp"
#include "ncdist/gf.hpp"

namespace ncdist::coupon {

namespace {

void check_index(size_t i, size_t s) {
    if (s < 1) throw std::domain_error("coupon universe must be non-empty");
    if (i < 1 || i > s)
        throw std::domain_error("coupon index " + std::to_string(i) +
                                " outside [1, " + std::to_string(s) + "]");
}

void check_model(const coupon_model& m) {
    if (m.s < 1) throw std::domain_error("coupon universe must be non-empty");
    if (m.q < 2) throw std::domain_error("field order must be at least 2");
    if ((m.q & (m.q - 1)) != 0)
        throw std::domain_error("field order must be a power of two");
}

unsigned order_bits(uint64_t q) {
    unsigned b = 0;
    while ((1ull << b) < q) ++b;
    return b;
}

coupon_stats finish_stats(double sum, double sumsq, size_t trials) {
    coupon_stats st;
    st.trials = trials;
    st.mean = sum / static_cast<double>(trials);
    double var = sumsq / static_cast<double>(trials) - st.mean * st.mean;
    if (var < 0) var = 0;
    st.std_error = std::sqrt(var / static_cast<double>(trials));
    return st;
}

} // namespace

double p_draw(size_t i, size_t s) {
    check_index(i, s);
    // 1 - (i-1)/s, written as one division so the 1/s floor is exact
    return static_cast<double>(s - i + 1) / static_cast<double>(s);
}

double expected_wait(size_t i, size_t s) {
    check_index(i, s);
    return static_cast<double>(s) / static_cast<double>(s - i + 1);
}

double expected_sample(size_t i, size_t s) {
    check_index(i, s);
    double sum = 0;
    for (size_t k = s - i + 1; k <= s; ++k) sum += 1.0 / static_cast<double>(k);
    return static_cast<double>(s) * sum;
}

double expected_distinct(uint64_t n, size_t s) {
    if (s < 1) throw std::domain_error("coupon universe must be non-empty");
    double sd = static_cast<double>(s);
    // s * (1 - (1 - 1/s)^n), evaluated in log space for large n
    if (s == 1) return n == 0 ? 0.0 : 1.0;
    double log_term = static_cast<double>(n) * std::log1p(-1.0 / sd);
    return sd * -std::expm1(log_term);
}

double coded_p_draw(size_t i, const coupon_model& m) {
    check_model(m);
    check_index(i, m.s);
    // q^(i-1)/q^s = q^(i-1-s); i <= s keeps the exponent negative
    double log_ratio = (static_cast<double>(i) - 1.0 - static_cast<double>(m.s)) *
                       std::log(static_cast<double>(m.q));
    return -std::expm1(log_ratio);
}

double coded_expected_wait(size_t i, const coupon_model& m) {
    return 1.0 / coded_p_draw(i, m);
}

double coded_expected_sample(size_t i, const coupon_model& m) {
    check_model(m);
    check_index(i, m.s);
    double sum = 0;
    for (size_t j = 1; j <= i; ++j) sum += coded_expected_wait(j, m);
    return sum;
}

coupon_stats monte_carlo_classic(size_t s, size_t target_i, size_t trials, rng& r) {
    check_index(target_i, s);
    if (trials < 1) throw std::domain_error("need at least one trial");
    double sum = 0, sumsq = 0;
    std::vector<uint8_t> seen(s);
    for (size_t t = 0; t < trials; ++t) {
        std::fill(seen.begin(), seen.end(), 0);
        size_t distinct = 0;
        uint64_t draws = 0;
        while (distinct < target_i) {
            ++draws;
            size_t c = r.index(s);
            if (!seen[c]) {
                seen[c] = 1;
                ++distinct;
            }
        }
        double d = static_cast<double>(draws);
        sum += d;
        sumsq += d * d;
    }
    return finish_stats(sum, sumsq, trials);
}

coupon_stats monte_carlo_coded(const coupon_model& m, size_t target_i, size_t trials, rng& r) {
    check_model(m);
    check_index(target_i, m.s);
    if (trials < 1) throw std::domain_error("need at least one trial");

    const unsigned bits = order_bits(m.q);
    gf::field f({bits, gf::find_irreducible(bits)});

    double sum = 0, sumsq = 0;
    for (size_t t = 0; t < trials; ++t) {
        // rank tracking over GF(q)^s; the zero vector counts as a failed draw
        coding::decoder_state span(0, m.s, 0, f);
        uint64_t draws = 0;
        coding::coding_vector v(m.s);
        while (span.rank() < target_i) {
            ++draws;
            for (auto& x : v) x = static_cast<uint16_t>(r.below(m.q));
            span.insert_vector(v);
        }
        double d = static_cast<double>(draws);
        sum += d;
        sumsq += d * d;
    }
    return finish_stats(sum, sumsq, trials);
}

} // namespace ncdist::coupon
