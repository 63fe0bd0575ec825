#include "ncdist/gf.hpp"

#include <stdexcept>
#include <string>

namespace ncdist::gf {

namespace {

unsigned poly_degree(uint32_t poly) {
    unsigned d = 0;
    while (poly >> (d + 1)) ++d;
    return d;
}

// remainder of a mod b over GF(2)
uint32_t poly_mod(uint32_t a, uint32_t b) {
    const unsigned db = poly_degree(b);
    while (a >> db) {
        unsigned da = poly_degree(a);
        a ^= b << (da - db);
    }
    return a;
}

} // namespace

bool poly_is_irreducible(uint32_t poly, unsigned degree) {
    if (degree == 0 || poly == 0) return false;
    if (poly_degree(poly) != degree) return false;
    if (degree == 1) return true;
    // trial division by every polynomial of degree 1 .. degree/2
    for (uint32_t d = 2; poly_degree(d) <= degree / 2; ++d) {
        if (poly_mod(poly, d) == 0) return false;
    }
    return true;
}

uint32_t find_irreducible(unsigned degree) {
    for (uint32_t p = (1u << degree); p < (2u << degree); ++p) {
        if (poly_is_irreducible(p, degree)) return p;
    }
    throw std::logic_error("no irreducible polynomial of degree " + std::to_string(degree));
}

field_spec field_spec::gf65536() { return {16, find_irreducible(16)}; }

field::field(field_spec spec) : m_spec(spec) {
    if (spec.bits < 1 || spec.bits > 16)
        throw std::invalid_argument("field bits must be in [1, 16]");
    if (!poly_is_irreducible(spec.reduction_poly, spec.bits))
        throw std::invalid_argument("reduction polynomial is reducible or has wrong degree");
    m_order = 1u << spec.bits;
    m_tabled = spec.bits <= 8;

    // log/exp tables over a multiplicative generator. The reduction
    // polynomial need not be primitive (0x11B is not), so search for a
    // generator instead of assuming x works.
    const uint32_t nz = m_order - 1;
    m_exp.assign(nz, 0);
    m_log.assign(m_order, 0);
    if (m_order == 2) {
        m_generator = 1;
        m_exp[0] = 1;
        m_log[1] = 0;
    } else {
        for (uint16_t g = 2; g < m_order; ++g) {
            uint16_t v = 1;
            uint32_t steps = 0;
            do {
                v = mul_shift_reduce(v, g);
                ++steps;
            } while (v != 1);
            if (steps == nz) {
                m_generator = g;
                break;
            }
        }
        uint16_t v = 1;
        for (uint32_t i = 0; i < nz; ++i) {
            m_exp[i] = v;
            m_log[v] = static_cast<uint16_t>(i);
            v = mul_shift_reduce(v, m_generator);
        }
    }

    if (spec.bits == 8) {
        m_mul8.assign(256 * 256, 0);
        for (uint32_t a = 1; a < 256; ++a)
            for (uint32_t b = 1; b < 256; ++b)
                m_mul8[(a << 8) | b] = static_cast<uint8_t>(
                    m_exp[(m_log[a] + m_log[b]) % nz]);
    }
}

uint16_t field::mul_shift_reduce(uint16_t a, uint16_t b) const {
    uint32_t acc = 0;
    uint32_t aa = a;
    while (b) {
        if (b & 1) acc ^= aa;
        aa <<= 1;
        b >>= 1;
    }
    // reduce the (at most 2q-1 degree) product
    for (int bit = 30; bit >= static_cast<int>(m_spec.bits); --bit) {
        if (acc & (1u << bit))
            acc ^= m_spec.reduction_poly << (bit - m_spec.bits);
    }
    return static_cast<uint16_t>(acc);
}

uint16_t field::mul(uint16_t a, uint16_t b) const {
    if (a == 0 || b == 0) return 0;
    if (!m_mul8.empty()) return m_mul8[(static_cast<uint32_t>(a) << 8) | b];
    if (m_tabled)
        return m_exp[(static_cast<uint32_t>(m_log[a]) + m_log[b]) % (m_order - 1)];
    return mul_shift_reduce(a, b);
}

uint16_t field::inv(uint16_t a) const {
    if (a == 0) throw std::domain_error("zero has no multiplicative inverse");
    const uint32_t nz = m_order - 1;
    if (m_tabled) return m_exp[(nz - m_log[a]) % nz];
    return pow(a, nz - 1); // a^(2^q - 2)
}

uint16_t field::pow(uint16_t a, uint64_t e) const {
    uint16_t r = 1;
    uint16_t base = a;
    while (e) {
        if (e & 1) r = mul(r, base);
        base = mul(base, base);
        e >>= 1;
    }
    return r;
}

void field::buf_axpy(uint16_t c, std::span<const uint8_t> src, std::span<uint8_t> dst) const {
    if (src.size() != dst.size())
        throw std::invalid_argument("buffer length mismatch");
    if (c == 0) return;
    switch (bits()) {
    case 1:
        for (size_t i = 0; i < src.size(); ++i) dst[i] ^= src[i];
        return;
    case 8: {
        const uint8_t* row = &m_mul8[static_cast<size_t>(c) << 8];
        for (size_t i = 0; i < src.size(); ++i) dst[i] ^= row[src[i]];
        return;
    }
    case 16: {
        if (src.size() % 2 != 0)
            throw std::invalid_argument("q=16 buffers need an even byte count");
        for (size_t i = 0; i < src.size(); i += 2) {
            uint16_t s = static_cast<uint16_t>(src[i] | (src[i + 1] << 8));
            uint16_t p = mul(c, s);
            dst[i] ^= static_cast<uint8_t>(p);
            dst[i + 1] ^= static_cast<uint8_t>(p >> 8);
        }
        return;
    }
    default:
        throw std::logic_error("payload arithmetic supports q in {1, 8, 16}");
    }
}

void field::buf_scale(uint16_t c, std::span<uint8_t> buf) const {
    if (c == 1) return;
    switch (bits()) {
    case 1:
        if (c == 0)
            for (auto& b : buf) b = 0;
        return;
    case 8: {
        if (c == 0) {
            for (auto& b : buf) b = 0;
            return;
        }
        const uint8_t* row = &m_mul8[static_cast<size_t>(c) << 8];
        for (auto& b : buf) b = row[b];
        return;
    }
    case 16: {
        if (buf.size() % 2 != 0)
            throw std::invalid_argument("q=16 buffers need an even byte count");
        for (size_t i = 0; i < buf.size(); i += 2) {
            uint16_t s = static_cast<uint16_t>(buf[i] | (buf[i + 1] << 8));
            uint16_t p = mul(c, s);
            buf[i] = static_cast<uint8_t>(p);
            buf[i + 1] = static_cast<uint8_t>(p >> 8);
        }
        return;
    }
    default:
        throw std::logic_error("payload arithmetic supports q in {1, 8, 16}");
    }
}

} // namespace ncdist::gf
