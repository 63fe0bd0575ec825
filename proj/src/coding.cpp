#include "ncdist/coding.hpp"

#include <algorithm>
#include <cstring>

namespace ncdist::coding {

namespace {

// dst ^= c * src over the field, element-wise
void vec_axpy(const gf::field& f, uint16_t c, const coding_vector& src, coding_vector& dst) {
    if (c == 0) return;
    for (size_t k = 0; k < src.size(); ++k)
        dst[k] ^= f.mul(c, src[k]);
}

void vec_scale(const gf::field& f, uint16_t c, coding_vector& v) {
    for (auto& x : v) x = f.mul(c, x);
}

uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

} // namespace

// ---- content segmentation ----------------------------------------------

segment_plan segment_content(uint64_t content_size, uint64_t chunk_size,
                             size_t chunks_per_segment, size_t cap) {
    if (content_size == 0) throw std::invalid_argument("content_size must be positive");
    if (chunk_size == 0) throw std::invalid_argument("chunk_size must be positive");
    if (chunks_per_segment == 0 || chunks_per_segment > cap)
        throw std::invalid_argument("chunks_per_segment must be in [1, " +
                                    std::to_string(cap) + "]");
    segment_plan plan;
    plan.content_size = content_size;
    plan.chunk_size = chunk_size;
    plan.chunks_per_segment = chunks_per_segment;
    plan.total_chunks = static_cast<size_t>(ceil_div(content_size, chunk_size));
    plan.segment_count = static_cast<size_t>(
        ceil_div(plan.total_chunks, chunks_per_segment));
    return plan;
}

std::vector<payload> segment_chunks(std::span<const uint8_t> content,
                                    const segment_plan& plan, size_t seg) {
    if (seg >= plan.segment_count) throw std::invalid_argument("segment index out of range");
    std::vector<payload> chunks;
    const size_t count = plan.chunks_in_segment(seg);
    chunks.reserve(count);
    for (size_t k = 0; k < count; ++k) {
        uint64_t off = (static_cast<uint64_t>(seg) * plan.chunks_per_segment + k) *
                       plan.chunk_size;
        payload chunk(plan.chunk_size, 0);
        if (off < content.size()) {
            size_t take = static_cast<size_t>(
                std::min<uint64_t>(plan.chunk_size, content.size() - off));
            std::memcpy(chunk.data(), content.data() + off, take);
        }
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

// ---- packet groups -------------------------------------------------------

std::vector<packet_group> form_packet_groups(std::vector<payload> native,
                                             size_t group_size,
                                             uint32_t first_group_id) {
    if (native.empty()) throw std::invalid_argument("need at least one native packet");
    if (group_size == 0) throw std::invalid_argument("group_size must be positive");
    const size_t bytes = native.front().size();
    for (const auto& p : native)
        if (p.size() != bytes)
            throw std::invalid_argument("native packets must share one length");

    const size_t n = native.size();
    const size_t count = static_cast<size_t>(ceil_div(n, group_size));
    std::vector<packet_group> groups;
    groups.reserve(count);
    for (size_t gi = 0; gi < count; ++gi) {
        packet_group g;
        g.group_id = first_group_id + static_cast<uint32_t>(gi);
        g.group_size = group_size;
        size_t start = gi * group_size;
        g.real_count = std::min(group_size, n - start);
        g.native_packets.reserve(group_size);
        for (size_t j = 0; j < g.real_count; ++j)
            g.native_packets.push_back(std::move(native[start + j]));
        for (size_t j = g.real_count; j < group_size; ++j)
            g.native_packets.emplace_back(bytes, 0); // zero padding packet
        groups.push_back(std::move(g));
    }
    return groups;
}

size_t reception_indicator::missing_count(size_t peer) const {
    size_t n = 0;
    for (uint8_t bit : l[peer]) n += bit;
    return n;
}

reception_indicator reception_indicator::all_missing(size_t peers, const packet_group& g) {
    reception_indicator ind;
    ind.l.assign(peers, std::vector<uint8_t>(g.group_size, 0));
    for (auto& row : ind.l)
        for (size_t j = 0; j < g.real_count; ++j) row[j] = 1;
    return ind;
}

// ---- coding-vector pool ---------------------------------------------------

coding_vector_pool coding_vector_pool::build(size_t n, const gf::field& f) {
    if (n == 0) throw std::invalid_argument("vector dimension must be positive");
    if (f.order() < n)
        throw std::invalid_argument("field of order " + std::to_string(f.order()) +
                                    " is too small for dimension " + std::to_string(n));
    coding_vector_pool pool;
    pool.m_dim = n;

    if (n == 1) {
        for (uint32_t a = 1; a < f.order(); ++a)
            pool.m_universe.push_back({static_cast<uint16_t>(a)});
    } else {
        // Doubly-extended Reed-Solomon generator brought to systematic form:
        // columns (1, a, ..., a^{n-1}) for every field element a, plus e_n,
        // left-multiplied by the inverse of the first n columns. Any n
        // columns of an MDS generator stay independent under row operations.
        const uint32_t order = f.order();
        std::vector<coding_vector> m(n, coding_vector(n)), minv(n, coding_vector(n, 0));
        for (size_t j = 0; j < n; ++j)
            for (size_t i = 0; i < n; ++i)
                m[i][j] = f.pow(static_cast<uint16_t>(j), i);
        for (size_t i = 0; i < n; ++i) minv[i][i] = 1;
        for (size_t col = 0; col < n; ++col) { // Gauss-Jordan inversion
            size_t piv = col;
            while (m[piv][col] == 0) ++piv; // Vandermonde block is invertible
            std::swap(m[piv], m[col]);
            std::swap(minv[piv], minv[col]);
            uint16_t inv = f.inv(m[col][col]);
            vec_scale(f, inv, m[col]);
            vec_scale(f, inv, minv[col]);
            for (size_t r = 0; r < n; ++r) {
                if (r == col || m[r][col] == 0) continue;
                uint16_t c = m[r][col];
                vec_axpy(f, c, m[col], m[r]);
                vec_axpy(f, c, minv[col], minv[r]);
            }
        }
        auto transformed = [&](const coding_vector& raw) {
            coding_vector out(n, 0);
            for (size_t i = 0; i < n; ++i) {
                uint16_t acc = 0;
                for (size_t k = 0; k < n; ++k) acc ^= f.mul(minv[i][k], raw[k]);
                out[i] = acc;
            }
            return out;
        };
        pool.m_universe.reserve(order + 1);
        for (size_t j = 0; j < n; ++j) { // first n columns reduce to units
            coding_vector e(n, 0);
            e[j] = 1;
            pool.m_universe.push_back(std::move(e));
        }
        coding_vector raw(n);
        for (uint32_t a = static_cast<uint32_t>(n); a < order; ++a) {
            for (size_t i = 0; i < n; ++i) raw[i] = f.pow(static_cast<uint16_t>(a), i);
            pool.m_universe.push_back(transformed(raw));
        }
        coding_vector en(n, 0);
        en[n - 1] = 1;
        pool.m_universe.push_back(transformed(en));
    }

    pool.m_available.resize(pool.m_universe.size());
    for (size_t i = 0; i < pool.m_available.size(); ++i) pool.m_available[i] = i;
    return pool;
}

const coding_vector& coding_vector_pool::select(rng& r) {
    if (m_available.empty()) throw pool_exhausted();
    size_t pos = r.index(m_available.size());
    size_t idx = m_available[pos];
    m_available.erase(m_available.begin() + static_cast<ptrdiff_t>(pos));
    m_used.push_back(idx);
    return m_universe[idx];
}

void coding_vector_pool::remove_available(size_t universe_index) {
    auto it = std::lower_bound(m_available.begin(), m_available.end(), universe_index);
    if (it != m_available.end() && *it == universe_index) {
        m_available.erase(it);
        m_used.push_back(universe_index);
    }
}

void coding_vector_pool::restore(size_t universe_index) {
    auto it = std::find(m_used.begin(), m_used.end(), universe_index);
    if (it == m_used.end()) return;
    m_used.erase(it);
    auto pos = std::lower_bound(m_available.begin(), m_available.end(), universe_index);
    m_available.insert(pos, universe_index);
}

size_t coding_vector_pool::index_of(const coding_vector& v) const {
    for (size_t i = 0; i < m_universe.size(); ++i)
        if (m_universe[i] == v) return i;
    return npos;
}

// ---- coded packets ---------------------------------------------------------

coded_packet encode(const packet_group& g, const coding_vector& v, const gf::field& f) {
    if (v.size() != g.group_size)
        throw std::invalid_argument("coding vector length does not match group size");
    coded_packet p;
    p.group_id = g.group_id;
    p.vector = v;
    p.data.assign(g.payload_bytes(), 0);
    for (size_t i = 0; i < v.size(); ++i)
        f.buf_axpy(v[i], g.native_packets[i], p.data);
    return p;
}

size_t coding_vector_wire_bytes(size_t group_size, unsigned bits) {
    return (group_size * bits + 7) / 8;
}

std::vector<uint8_t> serialize(const coded_packet& p, const gf::field& f) {
    const unsigned bits = f.bits();
    std::vector<uint8_t> out;
    out.reserve(6 + coding_vector_wire_bytes(p.vector.size(), bits) + p.data.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(p.group_id >> (8 * i)));
    uint16_t gs = static_cast<uint16_t>(p.vector.size());
    out.push_back(static_cast<uint8_t>(gs));
    out.push_back(static_cast<uint8_t>(gs >> 8));
    size_t vec_off = out.size();
    out.resize(vec_off + coding_vector_wire_bytes(p.vector.size(), bits), 0);
    size_t bit = 0;
    for (uint16_t c : p.vector) { // LSB-first packing, q bits per coefficient
        for (unsigned b = 0; b < bits; ++b, ++bit)
            if (c & (1u << b)) out[vec_off + bit / 8] |= static_cast<uint8_t>(1u << (bit % 8));
    }
    out.insert(out.end(), p.data.begin(), p.data.end());
    return out;
}

coded_packet deserialize(std::span<const uint8_t> bytes, const gf::field& f) {
    if (bytes.size() < 6) throw std::invalid_argument("truncated coded packet");
    coded_packet p;
    p.group_id = static_cast<uint32_t>(bytes[0]) | (static_cast<uint32_t>(bytes[1]) << 8) |
                 (static_cast<uint32_t>(bytes[2]) << 16) |
                 (static_cast<uint32_t>(bytes[3]) << 24);
    uint16_t gs = static_cast<uint16_t>(bytes[4] | (bytes[5] << 8));
    const unsigned bits = f.bits();
    size_t vec_bytes = coding_vector_wire_bytes(gs, bits);
    if (bytes.size() < 6 + vec_bytes) throw std::invalid_argument("truncated coding vector");
    p.vector.assign(gs, 0);
    size_t bit = 0;
    for (uint16_t& c : p.vector) {
        for (unsigned b = 0; b < bits; ++b, ++bit)
            if (bytes[6 + bit / 8] & (1u << (bit % 8))) c |= static_cast<uint16_t>(1u << b);
    }
    p.data.assign(bytes.begin() + static_cast<ptrdiff_t>(6 + vec_bytes), bytes.end());
    return p;
}

// ---- progressive decoder ----------------------------------------------------

decoder_state::decoder_state(uint32_t group_id, size_t dim, size_t payload_bytes,
                             const gf::field& f)
    : m_group_id(group_id), m_dim(dim), m_payload_bytes(payload_bytes), m_field(&f) {
    if (dim == 0) throw std::invalid_argument("decoder dimension must be positive");
}

bool decoder_state::insert(const coded_packet& p) {
    if (p.group_id != m_group_id)
        throw std::invalid_argument("coded packet belongs to a different group");
    return insert_vector(p.vector, p.data);
}

bool decoder_state::insert_vector(coding_vector v, payload data) {
    if (v.size() != m_dim)
        throw std::invalid_argument("coding vector length does not match decoder dimension");
    if (m_payload_bytes > 0 && data.size() != m_payload_bytes)
        throw std::invalid_argument("payload length does not match decoder");
    if (m_payload_bytes == 0) data.clear();

    const gf::field& f = *m_field;
    for (size_t r = 0; r < m_rows.size(); ++r) {
        uint16_t c = v[m_pivots[r]];
        if (c == 0) continue;
        vec_axpy(f, c, m_rows[r], v);
        if (!data.empty()) f.buf_axpy(c, m_data[r], data);
    }
    size_t piv = 0;
    while (piv < m_dim && v[piv] == 0) ++piv;
    if (piv == m_dim) return false; // dependent: not innovative

    uint16_t inv = f.inv(v[piv]);
    if (inv != 1) {
        vec_scale(f, inv, v);
        if (!data.empty()) f.buf_scale(inv, data);
    }
    for (size_t r = 0; r < m_rows.size(); ++r) {
        uint16_t c = m_rows[r][piv];
        if (c == 0) continue;
        vec_axpy(f, c, v, m_rows[r]);
        if (!data.empty()) f.buf_axpy(c, data, m_data[r]);
    }
    auto at = std::lower_bound(m_pivots.begin(), m_pivots.end(), piv);
    size_t slot = static_cast<size_t>(at - m_pivots.begin());
    m_pivots.insert(at, piv);
    m_rows.insert(m_rows.begin() + static_cast<ptrdiff_t>(slot), std::move(v));
    m_data.insert(m_data.begin() + static_cast<ptrdiff_t>(slot), std::move(data));
    return true;
}

bool decoder_state::would_be_innovative(const coding_vector& v) const {
    if (v.size() != m_dim)
        throw std::invalid_argument("coding vector length does not match decoder dimension");
    coding_vector w = v;
    const gf::field& f = *m_field;
    for (size_t r = 0; r < m_rows.size(); ++r) {
        uint16_t c = w[m_pivots[r]];
        if (c == 0) continue;
        vec_axpy(f, c, m_rows[r], w);
    }
    for (uint16_t x : w)
        if (x != 0) return true;
    return false;
}

std::vector<payload> decoder_state::solve() const {
    if (rank() < m_dim) throw decode_not_ready(m_dim - rank());
    // full-rank RREF is the identity; rows are sorted by pivot
    return m_data;
}

coded_packet decoder_state::recombine(rng& r) const {
    coded_packet p;
    p.group_id = m_group_id;
    const gf::field& f = *m_field;
    for (int attempt = 0; attempt < 16; ++attempt) {
        p.vector.assign(m_dim, 0);
        p.data.assign(m_payload_bytes, 0);
        bool nonzero = false;
        for (size_t k = 0; k < m_rows.size(); ++k) {
            uint16_t c = static_cast<uint16_t>(r.below(f.order()));
            if (c == 0) continue;
            nonzero = true;
            vec_axpy(f, c, m_rows[k], p.vector);
            if (m_payload_bytes > 0) f.buf_axpy(c, m_data[k], p.data);
        }
        if (nonzero || m_rows.empty()) return p;
    }
    // all-zero coefficient draws 16 times in a row: fall back to the first row
    p.vector = m_rows.front();
    p.data = m_data.front();
    return p;
}

bool decoder_state::has_native(size_t slot) const {
    auto it = std::lower_bound(m_pivots.begin(), m_pivots.end(), slot);
    if (it == m_pivots.end() || *it != slot) return false;
    const coding_vector& row = m_rows[static_cast<size_t>(it - m_pivots.begin())];
    for (size_t k = 0; k < m_dim; ++k)
        if (row[k] != 0 && k != slot) return false;
    return true;
}

void decoder_state::release_payloads() {
    for (auto& d : m_data) {
        d.clear();
        d.shrink_to_fit();
    }
    m_payload_bytes = 0;
}

// ---- DSNC constraint procedures ---------------------------------------------

constraint_state constraint_init(const packet_group& g,
                                 const reception_indicator& ind,
                                 coding_vector_pool universe_pool) {
    if (ind.slots() != g.group_size && ind.peers() > 0)
        throw std::invalid_argument("indicator width does not match group size");
    if (universe_pool.dim() != g.group_size)
        throw std::invalid_argument("pool dimension does not match group size");
    for (size_t i = 0; i < ind.peers(); ++i)
        for (size_t j = g.real_count; j < g.group_size; ++j)
            if (ind.l[i][j])
                throw std::invalid_argument("padding slot marked missing");

    constraint_state cs{backlog_counter{}, std::move(universe_pool)};
    cs.backlog.need.resize(ind.peers());
    for (size_t i = 0; i < ind.peers(); ++i)
        cs.backlog.need[i] = ind.missing_count(i);
    for (size_t j = 0; j < g.group_size; ++j) {
        bool held_somewhere = g.is_padding(j);
        for (size_t i = 0; i < ind.peers() && !held_somewhere; ++i)
            if (ind.l[i][j] == 0) held_somewhere = true;
        if (held_somewhere) cs.pool.remove_available(j); // universe[j] == e_j
    }
    return cs;
}

void constraint_update(backlog_counter& backlog, coding_vector_pool& pool,
                       std::span<const coded_packet> transmitted,
                       std::span<const delivery_event> received,
                       const reception_indicator& ind) {
    std::vector<std::pair<size_t, size_t>> seen;
    for (const auto& ev : received) {
        if (ev.peer >= backlog.need.size())
            throw consistency_error("delivery references unknown peer");
        if (ev.packet_index >= transmitted.size())
            throw consistency_error("delivery references unknown packet");
        auto key = std::make_pair(ev.peer, ev.packet_index);
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            throw consistency_error("duplicate delivery would drive backlog negative");
        seen.push_back(key);
        if (backlog.need[ev.peer] > 0) --backlog.need[ev.peer];
    }

    // Reuse rule: a used vector returns once no remaining backlogged peer
    // still lacks any native packet the vector covers.
    std::vector<size_t> used = pool.used_indices();
    for (size_t idx : used) {
        const coding_vector& v = pool.universe()[idx];
        bool reusable = true;
        for (size_t i = 0; i < backlog.need.size() && reusable; ++i) {
            if (backlog.need[i] == 0) continue;
            for (size_t j = 0; j < v.size() && reusable; ++j)
                if (v[j] != 0 && ind.l[i][j]) reusable = false;
        }
        if (reusable) pool.restore(idx);
    }
}

void sync_indicator_row(reception_indicator& ind, size_t peer,
                        const packet_group& g, const decoder_state& st) {
    for (size_t j = 0; j < g.group_size; ++j)
        if (ind.l[peer][j] && st.has_native(j)) ind.l[peer][j] = 0;
}

std::vector<transmission_record>
dsnc_transmit_group(const packet_group& g,
                    std::vector<decoder_state>& peers,
                    reception_indicator& ind,
                    const gf::field& f, rng& r,
                    const send_hook& hook,
                    size_t retry_cap) {
    if (ind.peers() != peers.size())
        throw std::invalid_argument("indicator row count does not match peer count");

    // padding rows are known-zero and enter every decoder up front
    for (size_t i = 0; i < peers.size(); ++i) {
        for (size_t j = g.real_count; j < g.group_size; ++j) {
            if (peers[i].has_native(j)) continue;
            coding_vector e(g.group_size, 0);
            e[j] = 1;
            peers[i].insert_vector(std::move(e), payload(g.payload_bytes(), 0));
        }
        sync_indicator_row(ind, i, g, peers[i]);
    }

    constraint_state cs =
        constraint_init(g, ind, coding_vector_pool::build(g.group_size, f));
    for (size_t i = 0; i < peers.size(); ++i)
        if (cs.backlog.need[i] != g.group_size - peers[i].rank())
            throw consistency_error("indicator rows disagree with decoder ranks");

    std::vector<transmission_record> log;
    std::vector<coded_packet> transmitted;
    size_t stalled_rounds = 0;

    auto backlogged = [&](size_t i) { return cs.backlog.need[i] > 0; };

    while (cs.backlog.any()) {
        // pick a vector innovative to every backlogged peer
        coding_vector chosen;
        bool fallback = false;
        bool found = false;
        size_t tries = 0;
        const size_t try_budget = cs.pool.universe_size() + 64;
        while (!found) {
            if (++tries > try_budget)
                break;
            coding_vector cand;
            bool cand_fallback = false;
            if (!cs.pool.empty()) {
                cand = cs.pool.select(r);
            } else {
                constraint_update(cs.backlog, cs.pool, transmitted, {}, ind);
                if (!cs.pool.empty()) {
                    cand = cs.pool.select(r);
                } else {
                    cand.assign(g.group_size, 0);
                    bool nonzero = false;
                    for (auto& c : cand) {
                        c = static_cast<uint16_t>(r.below(f.order()));
                        nonzero = nonzero || c != 0;
                    }
                    if (!nonzero) continue;
                    cand_fallback = true;
                }
            }
            bool ok = true;
            for (size_t i = 0; i < peers.size() && ok; ++i)
                if (backlogged(i) && !peers[i].would_be_innovative(cand)) ok = false;
            if (ok) {
                chosen = std::move(cand);
                fallback = cand_fallback;
                found = true;
            }
        }
        if (!found) {
            std::string diag = "no universally innovative vector after " +
                               std::to_string(tries) + " candidates; backlogs:";
            for (size_t n : cs.backlog.need) diag += " " + std::to_string(n);
            throw protocol_stall(diag);
        }

        coded_packet pkt = encode(g, chosen, f);
        transmission_record rec;
        rec.vector = chosen;
        rec.fallback = fallback;

        std::vector<size_t> backlogged_receivers;
        bool progressed = false;
        while (rec.attempts < retry_cap) {
            ++rec.attempts;
            std::vector<size_t> got = hook(pkt, rec.attempts);
            std::sort(got.begin(), got.end());
            got.erase(std::unique(got.begin(), got.end()), got.end());
            for (size_t i : got) {
                if (i >= peers.size())
                    throw consistency_error("send hook returned unknown peer");
                if (std::find(rec.receivers.begin(), rec.receivers.end(), i) ==
                    rec.receivers.end())
                    rec.receivers.push_back(i);
                if (backlogged(i) &&
                    std::find(backlogged_receivers.begin(), backlogged_receivers.end(), i) ==
                        backlogged_receivers.end())
                    backlogged_receivers.push_back(i);
            }
            if (!backlogged_receivers.empty()) {
                progressed = true;
                break;
            }
        }

        transmitted.push_back(pkt);
        std::vector<delivery_event> deliveries;
        for (size_t i : backlogged_receivers) {
            bool innovative = peers[i].insert(pkt);
            if (!innovative)
                throw consistency_error("packet was not innovative to a backlogged peer");
            sync_indicator_row(ind, i, g, peers[i]);
            deliveries.push_back({i, transmitted.size() - 1});
        }
        for (size_t i : rec.receivers) {
            if (std::find(backlogged_receivers.begin(), backlogged_receivers.end(), i) !=
                backlogged_receivers.end())
                continue;
            peers[i].insert(pkt); // complete peers may hear duplicates
            sync_indicator_row(ind, i, g, peers[i]);
        }
        constraint_update(cs.backlog, cs.pool, transmitted, deliveries, ind);
        log.push_back(std::move(rec));

        if (progressed) {
            stalled_rounds = 0;
        } else if (++stalled_rounds >= 8) {
            std::string diag = "no backlogged peer received anything for " +
                               std::to_string(stalled_rounds) + " packets; backlogs:";
            for (size_t n : cs.backlog.need) diag += " " + std::to_string(n);
            throw protocol_stall(diag);
        }
    }
    return log;
}

} // namespace ncdist::coding
