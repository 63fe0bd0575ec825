#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>

#include "ncdist/gf.hpp"
#include "ncdist/rng.hpp"
#include "oracles.hpp"

using ncdist::gf::field;
using ncdist::gf::field_spec;

TEST_CASE("addition is xor") {
    field f(field_spec::gf256());
    CHECK(f.add(0x57, 0x83) == 0xD4);
    CHECK(f.add(0x57, 0x83) == (0x57 ^ 0x83));
    for (uint32_t a = 0; a < 256; ++a) {
        CHECK(f.add(static_cast<uint16_t>(a), static_cast<uint16_t>(a)) == 0);
        CHECK(f.add(static_cast<uint16_t>(a), 0) == a);
    }
}

TEST_CASE("add is its own inverse") {
    field f(field_spec::gf256());
    ncdist::rng r(7);
    for (int i = 0; i < 2000; ++i) {
        uint16_t a = static_cast<uint16_t>(r.below(256));
        uint16_t b = static_cast<uint16_t>(r.below(256));
        CHECK(f.add(f.add(a, b), b) == a);
    }
}

TEST_CASE("multiplication matches shift-and-reduce oracle") {
    field f(field_spec::gf256());
    CHECK(f.mul(0x02, 0x80) == 0x1B);
    CHECK(f.mul(0x02, 0x80) == oracle::gf_mul_ref(0x02, 0x80, 8, 0x11B));
    // exhaustive table-vs-reference at q = 8
    for (uint32_t a = 0; a < 256; ++a)
        for (uint32_t b = 0; b < 256; ++b)
            REQUIRE(f.mul(static_cast<uint16_t>(a), static_cast<uint16_t>(b)) ==
                    oracle::gf_mul_ref(static_cast<uint16_t>(a), static_cast<uint16_t>(b), 8, 0x11B));
    for (uint32_t a = 0; a < 256; ++a) {
        CHECK(f.mul(static_cast<uint16_t>(a), 1) == a);
        CHECK(f.mul(0, static_cast<uint16_t>(a)) == 0);
    }
}

TEST_CASE("inverse") {
    field f(field_spec::gf256());
    CHECK(f.inv(1) == 1);
    CHECK(f.inv(0x02) == 0x8D);
    CHECK(f.inv(0x02) == oracle::gf_inv_ref(0x02, 8, 0x11B));
    for (uint32_t a = 1; a < 256; ++a)
        CHECK(f.mul(static_cast<uint16_t>(a), f.inv(static_cast<uint16_t>(a))) == 1);
    CHECK_THROWS_AS((void)f.inv(0), std::domain_error);
    CHECK_THROWS_AS((void)f.div(3, 0), std::domain_error);
}

static void check_axioms_exhaustive(const field& f) {
    const uint32_t n = f.order();
    for (uint32_t a = 0; a < n; ++a)
        for (uint32_t b = 0; b < n; ++b) {
            REQUIRE(f.mul(a, b) == f.mul(b, a));
            REQUIRE(f.add(a, b) == f.add(b, a));
            for (uint32_t c = 0; c < n; ++c) {
                REQUIRE(f.mul(f.mul(a, b), c) == f.mul(a, f.mul(b, c)));
                REQUIRE(f.mul(a, f.add(b, c)) == f.add(f.mul(a, b), f.mul(a, c)));
            }
        }
}

TEST_CASE("field axioms hold exhaustively for q <= 4") {
    for (unsigned q = 1; q <= 4; ++q) {
        field f({q, ncdist::gf::find_irreducible(q)});
        check_axioms_exhaustive(f);
    }
}

TEST_CASE("field axioms hold on random triples for q = 8") {
    field f(field_spec::gf256());
    ncdist::rng r(11);
    for (int i = 0; i < 100000; ++i) {
        uint16_t a = static_cast<uint16_t>(r.below(256));
        uint16_t b = static_cast<uint16_t>(r.below(256));
        uint16_t c = static_cast<uint16_t>(r.below(256));
        REQUIRE(f.mul(f.mul(a, b), c) == f.mul(a, f.mul(b, c)));
        REQUIRE(f.mul(a, f.add(b, c)) == f.add(f.mul(a, b), f.mul(a, c)));
        REQUIRE(f.mul(a, b) == f.mul(b, a));
    }
}

TEST_CASE("exp table cycles through all nonzero elements") {
    field f(field_spec::gf16()); // q=4, poly 0x13
    const auto& exp = f.exp_table();
    REQUIRE(exp.size() == 15);
    std::vector<bool> seen(16, false);
    for (uint16_t v : exp) {
        CHECK(v != 0);
        CHECK(!seen[v]);
        seen[v] = true;
    }
}

TEST_CASE("reducible polynomial is rejected") {
    CHECK_THROWS_AS(field({8, 0x110}), std::invalid_argument); // x^8+x^4 divisible by x
    CHECK_THROWS_AS(field({8, 0x11B ^ 0x100}), std::invalid_argument); // wrong degree
    CHECK_THROWS_AS(field({0, 0x3}), std::invalid_argument);
    CHECK_THROWS_AS(field({17, 0x3}), std::invalid_argument);
    CHECK(ncdist::gf::poly_is_irreducible(0x11B, 8));
    CHECK(!ncdist::gf::poly_is_irreducible(0x110, 8));
}

TEST_CASE("q = 16 arithmetic round-trips") {
    field f(field_spec::gf65536());
    ncdist::rng r(3);
    for (int i = 0; i < 500; ++i) {
        uint16_t a = static_cast<uint16_t>(1 + r.below(65535));
        uint16_t b = static_cast<uint16_t>(1 + r.below(65535));
        CHECK(f.mul(a, b) ==
              oracle::gf_mul_ref(a, b, 16, f.spec().reduction_poly));
        CHECK(f.mul(a, f.inv(a)) == 1);
        CHECK(f.div(f.mul(a, b), b) == a);
    }
}

TEST_CASE("gf(2) arithmetic") {
    field f(field_spec::gf2());
    CHECK(f.mul(1, 1) == 1);
    CHECK(f.mul(1, 0) == 0);
    CHECK(f.inv(1) == 1);
    CHECK(f.order() == 2);
}

TEST_CASE("buffer ops match scalar arithmetic") {
    ncdist::rng r(19);

    SUBCASE("q = 8") {
        field f(field_spec::gf256());
        std::vector<uint8_t> src(257), dst(257), expect(257);
        for (auto& b : src) b = static_cast<uint8_t>(r.below(256));
        for (auto& b : dst) b = static_cast<uint8_t>(r.below(256));
        uint16_t c = 0xA7;
        for (size_t i = 0; i < src.size(); ++i)
            expect[i] = static_cast<uint8_t>(dst[i] ^ f.mul(c, src[i]));
        f.buf_axpy(c, src, dst);
        CHECK(dst == expect);
        f.buf_scale(0, dst);
        CHECK(std::all_of(dst.begin(), dst.end(), [](uint8_t b) { return b == 0; }));
    }

    SUBCASE("q = 1 reduces to xor") {
        field f(field_spec::gf2());
        std::vector<uint8_t> src = {0xFF, 0x10, 0x03}, dst = {0x0F, 0x10, 0x00};
        f.buf_axpy(1, src, dst);
        CHECK(dst == std::vector<uint8_t>{0xF0, 0x00, 0x03});
        f.buf_axpy(0, src, dst);
        CHECK(dst == std::vector<uint8_t>{0xF0, 0x00, 0x03});
    }

    SUBCASE("q = 16 little-endian symbols") {
        field f(field_spec::gf65536());
        std::vector<uint8_t> src(8), dst(8, 0);
        uint16_t s0 = 0x1234, s1 = 0xBEEF;
        src[0] = 0x34; src[1] = 0x12;
        src[2] = 0xEF; src[3] = 0xBE;
        uint16_t c = 0x0101;
        f.buf_axpy(c, src, dst);
        CHECK((dst[0] | (dst[1] << 8)) == f.mul(c, s0));
        CHECK((dst[2] | (dst[3] << 8)) == f.mul(c, s1));
        std::vector<uint8_t> odd(3);
        CHECK_THROWS_AS(f.buf_scale(2, odd), std::invalid_argument);
    }

    SUBCASE("unsupported widths refuse payload work") {
        field f(field_spec::gf16());
        CHECK(!f.payload_capable());
        std::vector<uint8_t> a(4), b(4);
        CHECK_THROWS_AS(f.buf_axpy(2, a, b), std::logic_error);
    }
}
