#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ncdist/coupon.hpp"
#include "ncdist/rng.hpp"

using namespace ncdist;
using namespace ncdist::coupon;

// enumeration oracle for E[D_s]: average distinct count over all s^n
// equiprobable draw sequences (tiny n, s only)
static double expected_distinct_enum(size_t n, size_t s) {
    size_t total = 1;
    for (size_t i = 0; i < n; ++i) total *= s;
    double acc = 0;
    for (size_t code = 0; code < total; ++code) {
        size_t rest = code;
        std::vector<bool> seen(s, false);
        size_t distinct = 0;
        for (size_t i = 0; i < n; ++i) {
            size_t c = rest % s;
            rest /= s;
            if (!seen[c]) {
                seen[c] = true;
                ++distinct;
            }
        }
        acc += static_cast<double>(distinct);
    }
    return acc / static_cast<double>(total);
}

TEST_CASE("p_draw") {
    CHECK(p_draw(1, 7) == doctest::Approx(1.0));
    CHECK(p_draw(7, 7) == doctest::Approx(1.0 / 7));
    CHECK(p_draw(3, 4) == doctest::Approx(0.5));
    CHECK_THROWS_AS(p_draw(0, 4), std::domain_error);
    CHECK_THROWS_AS(p_draw(5, 4), std::domain_error);
    for (size_t s : {3, 10, 50})
        for (size_t i = 2; i <= s; ++i) {
            CHECK(p_draw(i, s) < p_draw(i - 1, s)); // decreasing in i
            CHECK(p_draw(i, s) >= 1.0 / static_cast<double>(s));
        }
}

TEST_CASE("expected_wait") {
    CHECK(expected_wait(1, 9) == doctest::Approx(1.0));
    CHECK(expected_wait(2, 2) == doctest::Approx(2.0));
    for (size_t s : {2, 5, 17, 40})
        for (size_t i = 1; i <= s; ++i) {
            CHECK(std::abs(expected_wait(i, s) * p_draw(i, s) - 1.0) < 1e-12);
            if (i > 1) CHECK(expected_wait(i, s) > expected_wait(i - 1, s));
        }
}

TEST_CASE("expected_sample") {
    CHECK(expected_sample(1, 11) == doctest::Approx(1.0));
    CHECK(expected_sample(2, 2) == doctest::Approx(3.0));
    // log lower bound at i = s
    for (size_t s : {2, 10, 100, 1000})
        CHECK(expected_sample(s, s) >=
              static_cast<double>(s) * std::log(static_cast<double>(s) + 1));
    // s log s + O(s): the ratio trend approaches 1 from above
    double r100 = expected_sample(100, 100) / (100 * std::log(100.0));
    double r10k = expected_sample(10000, 10000) / (10000 * std::log(10000.0));
    double r1m = expected_sample(1000000, 1000000) / (1000000 * std::log(1000000.0));
    CHECK(r100 > r10k);
    CHECK(r10k > r1m);
    CHECK(r1m > 1.0);
    CHECK(r1m < 1.05);
}

TEST_CASE("expected_distinct") {
    CHECK(expected_distinct(0, 5) == doctest::Approx(0.0));
    CHECK(expected_distinct(1, 1) == doctest::Approx(1.0));
    CHECK(expected_distinct(2, 2) == doctest::Approx(1.5));
    CHECK(expected_distinct(2, 2) == doctest::Approx(expected_distinct_enum(2, 2)));
    CHECK(expected_distinct(3, 4) == doctest::Approx(expected_distinct_enum(3, 4)));
    CHECK(expected_distinct(5, 3) == doctest::Approx(expected_distinct_enum(5, 3)));
    // the exponential bound s(1 - e^{-n/s}) lies below the exact form
    for (size_t s : {2, 7, 30})
        for (uint64_t n : {1, 3, 10, 100}) {
            double sd = static_cast<double>(s);
            CHECK(expected_distinct(n, s) >=
                  sd * (1 - std::exp(-static_cast<double>(n) / sd)) - 1e-12);
        }
}

TEST_CASE("coded_p_draw") {
    coupon_model m{3, 2};
    CHECK(coded_p_draw(1, m) == doctest::Approx(0.875));
    for (uint64_t q : {2, 4, 256}) {
        coupon_model mm{6, q};
        CHECK(coded_p_draw(6, mm) == doctest::Approx(1.0 - 1.0 / static_cast<double>(q)));
        for (size_t i = 2; i <= 6; ++i) {
            CHECK(coded_p_draw(i, mm) < coded_p_draw(i - 1, mm));
            CHECK(coded_p_draw(i, mm) >= 1.0 - 1.0 / static_cast<double>(q));
        }
    }
    // large field order drives the probability to 1
    coupon_model big{8, 1ull << 32};
    for (size_t i = 1; i <= 8; ++i) CHECK(coded_p_draw(i, big) > 0.9999);
    CHECK_THROWS_AS(coded_p_draw(1, coupon_model{3, 3}), std::domain_error);
    CHECK_THROWS_AS(coded_p_draw(1, coupon_model{3, 1}), std::domain_error);
}

TEST_CASE("coded_expected_wait") {
    coupon_model m{3, 2};
    CHECK(coded_expected_wait(3, m) == doctest::Approx(2.0)); // 8/(8-4)
    CHECK(coded_expected_wait(1, m) == doctest::Approx(8.0 / 7));
    // the q/(q-1) cap is strict below i = s and met exactly at i = s
    for (uint64_t q : {2, 16}) {
        double cap = static_cast<double>(q) / (static_cast<double>(q) - 1);
        for (size_t i = 1; i < 5; ++i)
            CHECK(coded_expected_wait(i, coupon_model{5, q}) < cap);
        CHECK(coded_expected_wait(5, coupon_model{5, q}) == doctest::Approx(cap));
    }
}

TEST_CASE("coded_expected_sample") {
    coupon_model m{3, 2};
    CHECK(coded_expected_sample(3, m) == doctest::Approx(8.0 / 7 + 8.0 / 6 + 8.0 / 4));
    CHECK(coded_expected_sample(1, m) == doctest::Approx(coded_expected_wait(1, m)));
    // i < E[N_i^c] strictly at moderate q; at q = 2^16 the excess is below
    // double precision, so >= is the observable statement
    for (size_t i = 1; i <= 8; ++i) {
        CHECK(coded_expected_sample(i, coupon_model{8, 16}) > static_cast<double>(i));
        coupon_model huge{8, 1ull << 16};
        CHECK(coded_expected_sample(i, huge) >= static_cast<double>(i));
        CHECK(coded_expected_sample(i, huge) - static_cast<double>(i) < 1e-3);
    }
}

TEST_CASE("coded collection dominates classic collection") {
    for (uint64_t q : {2, 4, 16, 256})
        for (size_t s = 3; s <= 24; s += 3)
            CHECK(coded_expected_sample(s, coupon_model{s, q}) < expected_sample(s, s));
}

TEST_CASE("monte carlo classic agrees with closed forms") {
    rng r(101);
    auto st = monte_carlo_classic(2, 2, 100000, r);
    CHECK(std::abs(st.mean - 3.0) < 2 * st.std_error + 1e-9);
    CHECK(st.trials == 100000);
    CHECK(st.std_error > 0);

    auto first = monte_carlo_classic(9, 1, 500, r);
    CHECK(first.mean == doctest::Approx(1.0));
    CHECK(first.std_error == doctest::Approx(0.0));

    auto fifty = monte_carlo_classic(50, 50, 10000, r);
    double expect = expected_sample(50, 50);
    CHECK(expect == doctest::Approx(224.9603).epsilon(1e-4));
    CHECK(std::abs(fifty.mean - expect) / expect < 0.02);
}

TEST_CASE("monte carlo coded agrees with closed forms") {
    rng r(202);
    coupon_model m{3, 2};
    auto st = monte_carlo_coded(m, 3, 100000, r);
    CHECK(std::abs(st.mean - coded_expected_sample(3, m)) < 2 * st.std_error + 1e-9);

    // first innovative draw waits q^s/(q^s - 1)
    auto one = monte_carlo_coded(m, 1, 100000, r);
    CHECK(std::abs(one.mean - 8.0 / 7) < 2 * one.std_error + 1e-9);

    // network coding helps: coded mean < classic mean at the same s
    rng rc(7), rk(7);
    auto coded = monte_carlo_coded(coupon_model{16, 2}, 16, 4000, rc);
    auto classic = monte_carlo_classic(16, 16, 4000, rk);
    CHECK(coded.mean < classic.mean);
}

TEST_CASE("domain errors") {
    rng r(1);
    CHECK_THROWS_AS(expected_sample(9, 4), std::domain_error);
    CHECK_THROWS_AS(coded_expected_sample(0, coupon_model{4, 2}), std::domain_error);
    CHECK_THROWS_AS(monte_carlo_classic(4, 2, 0, r), std::domain_error);
    CHECK_THROWS_AS(expected_distinct(1, 0), std::domain_error);
}
