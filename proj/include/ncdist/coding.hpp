#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncdist/gf.hpp"
#include "ncdist/rng.hpp"

namespace ncdist::coding {

using payload = std::vector<uint8_t>;
using coding_vector = std::vector<uint16_t>;

// ---- errors ------------------------------------------------------------

// decoder asked to solve before reaching full rank
struct decode_not_ready : std::runtime_error {
    size_t rank_gap;
    explicit decode_not_ready(size_t gap)
        : std::runtime_error("decoder is " + std::to_string(gap) + " innovative packet(s) short"),
          rank_gap(gap) {}
};

// select_vector called on an empty pool
struct pool_exhausted : std::runtime_error {
    pool_exhausted() : std::runtime_error("coding-vector pool exhausted") {}
};

// coded transmission could not complete; carries the loop diagnostics
struct protocol_stall : std::runtime_error {
    std::string diagnostic;
    explicit protocol_stall(std::string diag)
        : std::runtime_error("coded transmission stalled: " + diag), diagnostic(std::move(diag)) {}
};

// a constraint-update report contradicts protocol state
struct consistency_error : std::runtime_error {
    explicit consistency_error(const std::string& what) : std::runtime_error(what) {}
};

// ---- content segmentation ----------------------------------------------

struct segment_plan {
    uint64_t content_size = 0;
    uint64_t chunk_size = 0;
    size_t chunks_per_segment = 0;
    size_t segment_count = 0;
    size_t total_chunks = 0; // real chunks, last one zero-padded to chunk_size

    size_t chunks_in_segment(size_t seg) const {
        size_t start = seg * chunks_per_segment;
        size_t left = total_chunks - start;
        return left < chunks_per_segment ? left : chunks_per_segment;
    }
};

inline constexpr size_t default_segment_chunk_cap = 256;

segment_plan segment_content(uint64_t content_size, uint64_t chunk_size,
                             size_t chunks_per_segment,
                             size_t cap = default_segment_chunk_cap);

// cut one segment's worth of chunks out of a content buffer, zero-padding
// the tail chunk
std::vector<payload> segment_chunks(std::span<const uint8_t> content,
                                    const segment_plan& plan, size_t seg);

// ---- packet groups -------------------------------------------------------

// A group of native packets coded together. Slots beyond real_count are
// zero padding: their payloads are all-zero and their reception indicators
// are forced to 0 for every peer.
struct packet_group {
    uint32_t group_id = 0;
    size_t group_size = 0;
    size_t real_count = 0;
    std::vector<payload> native_packets; // size == group_size

    bool is_padding(size_t slot) const { return slot >= real_count; }
    size_t payload_bytes() const {
        return native_packets.empty() ? 0 : native_packets.front().size();
    }
};

std::vector<packet_group> form_packet_groups(std::vector<payload> native,
                                             size_t group_size,
                                             uint32_t first_group_id = 0);

// L[i][j] = 1 iff peer i still lacks native packet j of the group
struct reception_indicator {
    std::vector<std::vector<uint8_t>> l;

    size_t peers() const { return l.size(); }
    size_t slots() const { return l.empty() ? 0 : l.front().size(); }
    size_t missing_count(size_t peer) const;

    // every real packet missing everywhere; padding columns zero
    static reception_indicator all_missing(size_t peers, const packet_group& g);
};

// per-peer count of innovative packets still needed for the group
struct backlog_counter {
    std::vector<size_t> need;
    bool any() const {
        for (size_t n : need)
            if (n > 0) return true;
        return false;
    }
};

// ---- coding-vector pool ---------------------------------------------------

// The universe is a systematic generator of a doubly-extended Reed-Solomon
// code: the n unit vectors followed by transformed evaluation columns, for
// 2^q + 1 vectors in total (all 2^q - 1 nonzero scalars when n == 1). Any n
// distinct universe vectors are linearly independent.
class coding_vector_pool {
public:
    static coding_vector_pool build(size_t n, const gf::field& f);

    size_t dim() const { return m_dim; }
    const std::vector<coding_vector>& universe() const { return m_universe; }
    size_t universe_size() const { return m_universe.size(); }

    size_t available_count() const { return m_available.size(); }
    bool empty() const { return m_available.empty(); }
    const std::vector<size_t>& available_indices() const { return m_available; }
    const std::vector<size_t>& used_indices() const { return m_used; }

    // uniform draw without replacement; throws pool_exhausted when empty
    const coding_vector& select(rng& r);

    // drop a specific universe index from the available set (no-op when absent)
    void remove_available(size_t universe_index);
    // move a used vector back to the available set
    void restore(size_t universe_index);

    size_t index_of(const coding_vector& v) const; // npos when not in universe

    static constexpr size_t npos = static_cast<size_t>(-1);

private:
    size_t m_dim = 0;
    std::vector<coding_vector> m_universe;
    std::vector<size_t> m_available; // sorted universe indices
    std::vector<size_t> m_used;      // selected or explicitly removed
};

// ---- coded packets ---------------------------------------------------------

struct coded_packet {
    uint32_t group_id = 0;
    coding_vector vector;
    payload data;
};

coded_packet encode(const packet_group& g, const coding_vector& v, const gf::field& f);

// wire form: group_id (4B LE), group_size (2B LE), packed vector
// (ceil(group_size * q / 8) bytes, coefficients LSB-first), payload bytes
size_t coding_vector_wire_bytes(size_t group_size, unsigned bits);
std::vector<uint8_t> serialize(const coded_packet& p, const gf::field& f);
coded_packet deserialize(std::span<const uint8_t> bytes, const gf::field& f);

// ---- progressive decoder ----------------------------------------------------

// Incremental Gauss-Jordan elimination: the stored matrix is always in
// reduced row-echelon form, with payload rows carried through the same row
// operations.
class decoder_state {
public:
    decoder_state(uint32_t group_id, size_t dim, size_t payload_bytes, const gf::field& f);

    uint32_t group_id() const { return m_group_id; }
    size_t dim() const { return m_dim; }
    size_t rank() const { return m_pivots.size(); }
    bool complete() const { return rank() == m_dim; }

    // true iff the packet was innovative (rank grew by one)
    bool insert(const coded_packet& p);
    bool insert_vector(coding_vector v, payload data = {});
    bool would_be_innovative(const coding_vector& v) const;

    // native payloads in slot order; throws decode_not_ready below full rank
    std::vector<payload> solve() const;
    // uniform random linear recoding of the collected span (RLNC relay);
    // never emits the zero packet while the span is non-empty
    coded_packet recombine(rng& r) const;
    // true iff row `slot` has been reduced to the unit vector e_slot
    bool has_native(size_t slot) const;

    // drop payload storage, keeping rank bookkeeping (used after solve)
    void release_payloads();

private:
    uint32_t m_group_id;
    size_t m_dim;
    size_t m_payload_bytes;
    const gf::field* m_field;
    std::vector<coding_vector> m_rows; // RREF rows, sorted by pivot column
    std::vector<payload> m_data;
    std::vector<size_t> m_pivots;
};

// ---- DSNC constraint procedures ---------------------------------------------

struct constraint_state {
    backlog_counter backlog;
    coding_vector_pool pool;
};

// Backlogs from the indicator rows; the available set drops every unit
// vector whose native packet is already held by at least one peer (padding
// slots count as held).
constraint_state constraint_init(const packet_group& g,
                                 const reception_indicator& ind,
                                 coding_vector_pool universe_pool);

struct delivery_event {
    size_t peer = 0;
    size_t packet_index = 0; // into the transmitted list
};

// constraint update: decrement receiving backlogged peers, then
// return used vectors whose covered natives no remaining backlogged peer
// lacks.
void constraint_update(backlog_counter& backlog, coding_vector_pool& pool,
                       std::span<const coded_packet> transmitted,
                       std::span<const delivery_event> received,
                       const reception_indicator& ind);

struct transmission_record {
    coding_vector vector;
    size_t attempts = 0;               // sends of this packet (>= 1)
    std::vector<size_t> receivers;     // peers that got it
    bool fallback = false;             // vector came from outside the pool
};

// delivery model: given the packet and the attempt number, returns the
// peers that received this transmission
using send_hook = std::function<std::vector<size_t>(const coded_packet&, size_t attempt)>;

// Coded transmission loop for one group: select vector -> encode ->
// retransmit until some backlogged peer receives it -> constraint update,
// until no peer is backlogged. Guarantees every packet sent is innovative
// to every backlogged peer at send time. Decoder states are updated for
// receivers; indicator rows track decoded natives.
std::vector<transmission_record>
dsnc_transmit_group(const packet_group& g,
                    std::vector<decoder_state>& peers,
                    reception_indicator& ind,
                    const gf::field& f, rng& r,
                    const send_hook& hook,
                    size_t retry_cap = 10);

// refresh indicator row from what the decoder can already produce
void sync_indicator_row(reception_indicator& ind, size_t peer,
                        const packet_group& g, const decoder_state& st);

} // namespace ncdist::coding
