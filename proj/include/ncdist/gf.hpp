#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ncdist::gf {

// Parameters of GF(2^q): symbol width q and the degree-q irreducible
// reduction polynomial (bit q set, lower bits = tail coefficients).
struct field_spec {
    unsigned bits = 8;
    uint32_t reduction_poly = 0x11B;

    uint32_t order() const { return 1u << bits; }

    static field_spec gf2() { return {1, 0x3}; }
    static field_spec gf16() { return {4, 0x13}; }
    static field_spec gf256() { return {8, 0x11B}; }
    // degree-16 field for coupon-collector experiments at large q
    static field_spec gf65536();
};

// true iff poly is irreducible over GF(2); poly must carry its degree bit
bool poly_is_irreducible(uint32_t poly, unsigned degree);

// smallest irreducible polynomial of the given degree (1..16)
uint32_t find_irreducible(unsigned degree);

// Arithmetic context. Multiplication is table-driven (log/exp plus a full
// product table) for q <= 8 and shift-and-reduce above. Immutable after
// construction; all operations are pure and safe for concurrent readers.
class field {
public:
    explicit field(field_spec spec); // throws std::invalid_argument on bad spec

    const field_spec& spec() const { return m_spec; }
    unsigned bits() const { return m_spec.bits; }
    uint32_t order() const { return m_order; }

    uint16_t add(uint16_t a, uint16_t b) const { return a ^ b; }
    uint16_t sub(uint16_t a, uint16_t b) const { return a ^ b; }
    uint16_t mul(uint16_t a, uint16_t b) const;
    uint16_t inv(uint16_t a) const; // throws std::domain_error on zero
    uint16_t div(uint16_t a, uint16_t b) const { return mul(a, inv(b)); }
    uint16_t pow(uint16_t a, uint64_t e) const;

    // exp table cycles through all order-1 nonzero elements; log inverts it
    const std::vector<uint16_t>& exp_table() const { return m_exp; }
    const std::vector<uint16_t>& log_table() const { return m_log; }
    uint16_t generator() const { return m_generator; }

    // ---- symbol buffers ----------------------------------------------
    // Payload bytes are interpreted as a sequence of symbols: one byte per
    // symbol for q = 8, two little-endian bytes for q = 16, and plain
    // GF(2) (coefficient 0/1, addition = XOR) for q = 1.
    bool payload_capable() const { return bits() == 1 || bits() == 8 || bits() == 16; }
    size_t symbol_bytes() const { return bits() == 16 ? 2 : 1; }

    // dst ^= c * src, symbol-wise
    void buf_axpy(uint16_t c, std::span<const uint8_t> src, std::span<uint8_t> dst) const;
    // buf *= c, symbol-wise
    void buf_scale(uint16_t c, std::span<uint8_t> buf) const;

private:
    uint16_t mul_shift_reduce(uint16_t a, uint16_t b) const;

    field_spec m_spec;
    uint32_t m_order = 0;
    bool m_tabled = false;
    uint16_t m_generator = 0;
    std::vector<uint16_t> m_exp; // length order-1
    std::vector<uint16_t> m_log; // length order; log[0] unused
    std::vector<uint8_t> m_mul8; // full 256x256 product table when bits == 8
};

} // namespace ncdist::gf
