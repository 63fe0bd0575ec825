#include "ncdist/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <tuple>
#include <unordered_set>

namespace ncdist::sim {

namespace {
constexpr double inf = std::numeric_limits<double>::infinity();
constexpr double time_eps = 1e-9;

uint64_t fnv1a(const uint8_t* data, size_t len, uint64_t h = 14695981039346656037ull) {
    for (size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}
} // namespace

std::string to_string(protocol_kind p) {
    switch (p) {
    case protocol_kind::tnnc: return "tnnc";
    case protocol_kind::fncm: return "fncm";
    case protocol_kind::dsnc: return "dsnc";
    }
    return "?";
}

protocol_kind protocol_from_string(const std::string& s) {
    if (s == "tnnc") return protocol_kind::tnnc;
    if (s == "fncm") return protocol_kind::fncm;
    if (s == "dsnc") return protocol_kind::dsnc;
    throw std::invalid_argument("unknown protocol '" + s + "'");
}

std::string to_string(arrangement_kind a) {
    switch (a) {
    case arrangement_kind::homogeneous: return "homogeneous";
    case arrangement_kind::homogeneous_linkfail: return "homogeneous-linkfail";
    case arrangement_kind::dynamic_stay: return "dynamic-stay";
    case arrangement_kind::dynamic_leave: return "dynamic-leave";
    }
    return "?";
}

arrangement_kind arrangement_from_string(const std::string& s) {
    if (s == "homogeneous") return arrangement_kind::homogeneous;
    if (s == "homogeneous-linkfail") return arrangement_kind::homogeneous_linkfail;
    if (s == "dynamic-stay") return arrangement_kind::dynamic_stay;
    if (s == "dynamic-leave") return arrangement_kind::dynamic_leave;
    throw std::invalid_argument("unknown arrangement '" + s + "'");
}

// ---- max-min fair allocation -------------------------------------------------

std::vector<double> allocate_bandwidth(const std::vector<transfer_endpoints>& flows,
                                       const std::vector<double>& upload_caps,
                                       const std::vector<double>& download_caps,
                                       double access_capacity) {
    const size_t nf = flows.size();
    std::vector<double> rate(nf, 0);
    if (nf == 0) return rate;

    // resources: uploads [0, n), downloads [n, 2n), access link [2n]
    const size_t n = upload_caps.size();
    auto cap_of = [&](size_t res) {
        if (res < n) return upload_caps[res];
        if (res < 2 * n) return download_caps[res - n];
        return access_capacity;
    };
    std::vector<std::vector<size_t>> users(2 * n + 1);
    for (size_t i = 0; i < nf; ++i) {
        users[flows[i].src].push_back(i);
        users[n + flows[i].dst].push_back(i);
        if (flows[i].crosses_access) users[2 * n].push_back(i);
    }

    std::vector<uint8_t> frozen(nf, 0);
    std::vector<double> used(2 * n + 1, 0);
    size_t left = nf;
    while (left > 0) {
        // all unfrozen flows rise together; find the first saturating level
        double next = inf;
        for (size_t res = 0; res < users.size(); ++res) {
            size_t unfrozen = 0;
            for (size_t i : users[res])
                if (!frozen[i]) ++unfrozen;
            if (unfrozen == 0) continue;
            double lvl = std::max(0.0, cap_of(res) - used[res]) /
                         static_cast<double>(unfrozen);
            next = std::min(next, lvl);
        }
        if (next == inf) break;
        for (size_t res = 0; res < users.size(); ++res) {
            size_t unfrozen = 0;
            for (size_t i : users[res])
                if (!frozen[i]) ++unfrozen;
            if (unfrozen == 0) continue;
            double lvl = std::max(0.0, cap_of(res) - used[res]) /
                         static_cast<double>(unfrozen);
            if (lvl > next + 1e-12 * (1 + next)) continue;
            for (size_t i : users[res])
                if (!frozen[i]) frozen[i] = 2;
        }
        for (size_t i = 0; i < nf; ++i) {
            if (frozen[i] != 2) continue;
            rate[i] = next;
            frozen[i] = 1;
            --left;
        }
        std::fill(used.begin(), used.end(), 0.0);
        for (size_t i = 0; i < nf; ++i) {
            if (!frozen[i]) continue;
            used[flows[i].src] += rate[i];
            used[n + flows[i].dst] += rate[i];
            if (flows[i].crosses_access) used[2 * n] += rate[i];
        }
    }
    return rate;
}

size_t tnnc_pick_rarest(const std::vector<uint8_t>& missing,
                        const std::vector<size_t>& holder_counts, rng& r) {
    size_t best_count = 0;
    size_t ties = 0;
    size_t pick = no_chunk;
    for (size_t c = 0; c < missing.size(); ++c) {
        if (!missing[c] || holder_counts[c] == 0) continue;
        if (pick == no_chunk || holder_counts[c] < best_count) {
            best_count = holder_counts[c];
            ties = 1;
            pick = c;
        } else if (holder_counts[c] == best_count) {
            ++ties;
            if (r.below(ties) == 0) pick = c; // reservoir tie-break
        }
    }
    return pick;
}

// ---- engine -------------------------------------------------------------------

namespace {

using overlay::peer_id;
using overlay::server_id;

enum class flow_kind : uint8_t { chunk, coded };

struct flow {
    uint64_t id = 0;
    peer_id src = 0, dst = 0;
    double total = 0, done = 0, rate = 0;
    bool crosses = false;
    flow_kind kind = flow_kind::chunk;
    size_t chunk = 0;           // global chunk id (chunk flows)
    coding::coded_packet pkt;   // coded flows
    uint32_t gen = 0;           // generation: packet group (dsnc) or segment (fncm)
    size_t pool_idx = coding::coding_vector_pool::npos;
    uint64_t wire_id = 0;
    uint64_t overhead = 0;      // coding-vector wire bytes
    size_t attempt = 1;
    bool is_retry = false;
};

struct link_tally {
    uint64_t total = 0;
    std::unordered_set<uint64_t> distinct;
};

struct pg_state {
    coding::packet_group group;
    size_t segment = 0;
    std::vector<size_t> chunk_ids; // global chunk ids of the real slots
    int coordinator = -1;          // similarity-group index, -1 = server queue
    bool open = false;
    bool completed = false;        // the coordinator's own peers all recovered
    std::vector<uint8_t> gate;     // node id -> frozen gate membership
    size_t gate_pending = 0;
    size_t campus_holders = 0;     // alive campus peers that can encode this group
    bool ever_acquired = false;
    coding::coding_vector_pool pool;
    std::vector<std::vector<uint8_t>> missing; // node id -> slot -> still lacks
};

struct retry_slot {
    bool pending = false;
    coding::coded_packet pkt;
    peer_id src = 0;
    uint32_t gen = 0;
    size_t attempts = 0;
    size_t pool_idx = coding::coding_vector_pool::npos;
};

struct node_state {
    bool alive = false;
    bool finished = false;
    double join_time = 0;
    double depart_deadline = inf;
    double finish_time = 0;
    size_t up_active = 0;
    uint8_t down_active = 0; // concurrent downloads (1 normally; NPTP push may add one)
    size_t rr = 0; // round-robin cursor over candidate uploaders
    size_t chunks_held = 0;
    std::vector<uint8_t> content; // assembled bytes (padded to whole chunks)
    std::vector<std::unique_ptr<coding::decoder_state>> decoders;
    std::vector<uint8_t> gen_done;
    std::vector<size_t> seg_remaining;
    std::vector<double> seg_done_time;
    retry_slot retry;
    int group_index = -1;
    bool is_super = false;
    int tree_parent = -1;      // tnnc tree mode
    double tree_ready_at = 0;  // rejoin completes at this time

    // fncm: uploaders that recently delivered nothing new, keyed on the
    // rank they had at the time; cleared once the uploader learns more
    struct stale_source {
        peer_id uploader = 0;
        uint32_t segment = 0;
        size_t rank = 0;
    };
    std::vector<stale_source> stale;
};

struct event {
    double t = 0;
    int rank = 0; // 1 join, 2 leave, 3 phase-transition
    peer_id subject = 0;
    uint64_t seq = 0;
    bool operator<(const event& o) const {
        return std::tie(t, rank, subject, seq) < std::tie(o.t, o.rank, o.subject, o.seq);
    }
};

class engine {
public:
    explicit engine(const sim_config& cfg)
        : m_cfg(cfg),
          m_field(gf::field_spec{cfg.field_bits, gf::find_irreducible(cfg.field_bits)}),
          m_dyn(rng(cfg.seed).fork(0xD0 + static_cast<uint64_t>(cfg.protocol))) {}

    metrics_report run();

private:
    void build_world();
    void build_generations();
    void schedule_churn();
    void build_tnnc_tree();

    void loop();
    void advance_to(double t);
    void process_completion(flow fl);
    void process_event(const event& ev);
    void schedule_work();
    void reallocate();

    void try_start(peer_id p);
    void try_start_tnnc(peer_id p);
    void try_start_tnnc_tree(peer_id p);
    void try_start_fncm(peer_id p);
    void try_start_dsnc(peer_id p);
    void serve_nptp();

    void phase_transition();
    void check_nptp_done();
    void open_pg(uint32_t pg);
    void advance_queue(int coordinator);
    void pg_gate_check(uint32_t pg);
    void set_gen_done(peer_id p, uint32_t pg);
    coding::decoder_state& decoder_for(peer_id p, uint32_t gen);
    bool pick_dsnc_vector(peer_id dst, uint32_t pg, coding::coding_vector& out,
                          size_t& pool_idx);
    bool dsnc_can_serve(peer_id u, uint32_t pg) const;
    bool dsnc_reachable(peer_id dst, peer_id u) const;

    void start_flow(flow fl);
    void start_chunk_flow(peer_id src, peer_id dst, size_t chunk);
    void deliver_chunk(peer_id p, size_t chunk);
    void on_chunk_gained(peer_id p, size_t chunk);
    int deliver_coded(flow& fl); // 1 innovative, 0 not
    void finish_peer(peer_id p);
    void depart_peer(peer_id p);
    void join_peer(peer_id p);
    void cancel_flows_of(peer_id p);
    void mark_dirty(peer_id p) {
        if (p != server_id) m_dirty.insert(p);
    }
    void mark_neighborhood(peer_id p);
    bool incomplete(peer_id p) const { return m_nodes[p].alive && !m_nodes[p].finished; }
    size_t gen_dim() const {
        return m_cfg.protocol == protocol_kind::dsnc ? m_cfg.group_size
                                                     : m_cfg.chunks_per_segment;
    }
    void tally(peer_id a, peer_id b, bool crosses, uint64_t wire_id, uint64_t bytes);
    void trace(const char* kind, peer_id src, peer_id dst, uint32_t gen, uint64_t bytes,
               int innovative);

    sim_config m_cfg;
    gf::field m_field;
    rng m_dyn;

    coding::segment_plan m_plan;
    std::vector<uint8_t> m_content;
    uint64_t m_content_hash = 0;
    overlay::topology m_topo;
    std::vector<node_state> m_nodes;
    overlay::churn_model m_churn;
    overlay::link_failure_model m_loss;

    enum class phase_kind { nptp, cptp, steady } m_phase = phase_kind::steady;
    size_t m_nptp_next = 0;
    size_t m_nptp_total = 0;
    bool m_nptp_outstanding = false;
    bool m_nptp_fired = false;
    size_t m_nptp_relays = 0;
    size_t m_nptp_rr = 0;
    std::vector<pg_state> m_pgs;
    std::vector<overlay::peer_group> m_groups;
    std::vector<std::vector<uint32_t>> m_queues; // per group, server queue last
    std::vector<size_t> m_queue_pos;

    std::vector<coding::packet_group> m_seg_groups; // fncm generations

    std::vector<uint32_t> m_chunk_to_pg; // dsnc: global chunk -> packet group

    double m_now = 0;
    std::vector<flow> m_flows;
    uint64_t m_next_flow_id = 0;
    uint64_t m_next_seq = 0;
    std::set<event> m_events;
    std::set<peer_id> m_dirty;
    bool m_flows_changed = false;

    uint64_t m_uploaded = 0;
    uint64_t m_overhead = 0;
    uint64_t m_access_bytes = 0;
    uint64_t m_coded_sent = 0;
    uint64_t m_non_innovative = 0;
    std::map<std::pair<peer_id, peer_id>, link_tally> m_links;
    link_tally m_access_tally;
    size_t m_total_interested = 0;
    size_t m_failed = 0;
    double m_last_finish = 0;
    bool m_horizon_exceeded = false;
    std::ofstream m_trace;
};

void engine::trace(const char* kind, peer_id src, peer_id dst, uint32_t gen, uint64_t bytes,
                   int innovative) {
    if (!m_trace.is_open()) return;
    char line[160];
    std::snprintf(line, sizeof line, "%.6f %s %u %u %u %llu %d\n", m_now, kind, src, dst, gen,
                  static_cast<unsigned long long>(bytes), innovative);
    m_trace << line;
}

void engine::tally(peer_id a, peer_id b, bool crosses, uint64_t wire_id, uint64_t bytes) {
    auto key = std::minmax(a, b);
    auto& lt = m_links[{key.first, key.second}];
    lt.total += 1;
    lt.distinct.insert(wire_id);
    if (crosses) {
        m_access_tally.total += 1;
        m_access_tally.distinct.insert(wire_id);
        m_access_bytes += bytes;
    }
}

void engine::build_world() {
    m_plan = coding::segment_content(m_cfg.content_size, m_cfg.chunk_size,
                                     m_cfg.chunks_per_segment);
    rng content_rng = rng(m_cfg.seed).fork(0xC0);
    m_content.resize(m_cfg.content_size);
    for (auto& b : m_content) b = static_cast<uint8_t>(content_rng.below(256));
    m_content_hash = fnv1a(m_content.data(), m_content.size());

    overlay::topology_config tcfg;
    tcfg.peer_count = m_cfg.peer_count;
    tcfg.degree = m_cfg.degree;
    tcfg.campus_fraction = m_cfg.campus_fraction;
    tcfg.upload_capacity = m_cfg.upload_capacity;
    tcfg.download_capacity = m_cfg.download_capacity;
    tcfg.server_upload = m_cfg.server_upload;
    tcfg.access_capacity = m_cfg.access_capacity;
    bool dynamic = m_cfg.arrangement == arrangement_kind::dynamic_stay ||
                   m_cfg.arrangement == arrangement_kind::dynamic_leave;
    if (dynamic && !m_cfg.tiers.empty()) {
        tcfg.homogeneous = false;
        tcfg.tiers = m_cfg.tiers;
    }
    rng topo_rng = rng(m_cfg.seed).fork(0xA0);
    m_topo = overlay::generate_topology(tcfg, topo_rng);

    m_loss.p_fail =
        m_cfg.arrangement == arrangement_kind::homogeneous_linkfail ? m_cfg.p_fail : 0.0;
    m_churn.arrival_rate = m_cfg.arrival_rate;
    m_churn.lifetime_mean = dynamic ? m_cfg.lifetime_mean : 0.0;
    m_churn.policy = m_cfg.arrangement == arrangement_kind::dynamic_leave
                         ? overlay::departure_policy::leave_after_download
                         : overlay::departure_policy::stay_after_download;

    const size_t n = m_cfg.peer_count;
    m_nodes.resize(n + 1);
    for (auto& node : m_topo.nodes) node.content_bitmap.assign(m_plan.total_chunks, 0);
    std::fill(m_topo.nodes[server_id].content_bitmap.begin(),
              m_topo.nodes[server_id].content_bitmap.end(), 1);

    for (size_t i = 0; i <= n; ++i) {
        auto& st = m_nodes[i];
        st.content.assign(m_plan.total_chunks * m_plan.chunk_size, 0);
        st.seg_remaining.resize(m_plan.segment_count);
        st.seg_done_time.assign(m_plan.segment_count, -1);
        for (size_t s = 0; s < m_plan.segment_count; ++s)
            st.seg_remaining[s] = m_plan.chunks_in_segment(s);
    }
    m_nodes[server_id].alive = true;
    m_nodes[server_id].finished = true;

    if (!m_cfg.trace_path.empty()) m_trace.open(m_cfg.trace_path);
}

void engine::build_generations() {
    const size_t dim = gen_dim();
    uint32_t next_id = 0;
    for (size_t s = 0; s < m_plan.segment_count; ++s) {
        auto chunks = coding::segment_chunks(m_content, m_plan, s);
        if (m_cfg.protocol == protocol_kind::fncm) {
            // one generation per segment, padded to the segment width
            auto groups = coding::form_packet_groups(std::move(chunks), dim,
                                                     static_cast<uint32_t>(s));
            m_seg_groups.push_back(std::move(groups.front()));
        } else if (m_cfg.protocol == protocol_kind::dsnc) {
            auto groups = coding::form_packet_groups(std::move(chunks), dim, next_id);
            m_chunk_to_pg.resize(m_plan.total_chunks);
            for (auto& g : groups) {
                pg_state pg;
                pg.segment = s;
                size_t base = s * m_plan.chunks_per_segment +
                              static_cast<size_t>(g.group_id - next_id) * dim;
                for (size_t j = 0; j < g.real_count; ++j) {
                    pg.chunk_ids.push_back(base + j);
                    m_chunk_to_pg[base + j] = g.group_id;
                }
                pg.group = std::move(g);
                m_pgs.push_back(std::move(pg));
            }
            next_id += static_cast<uint32_t>(groups.size());
        }
    }
    size_t gens = m_cfg.protocol == protocol_kind::fncm
                      ? m_plan.segment_count
                      : (m_cfg.protocol == protocol_kind::dsnc ? m_pgs.size() : 0);
    for (auto& st : m_nodes) {
        st.decoders.resize(gens);
        st.gen_done.assign(gens, 0);
    }
}

void engine::schedule_churn() {
    bool dynamic = m_cfg.arrangement == arrangement_kind::dynamic_stay ||
                   m_cfg.arrangement == arrangement_kind::dynamic_leave;
    rng churn_rng = rng(m_cfg.seed).fork(0xCE);
    const size_t n = m_cfg.peer_count;
    size_t initial = n;
    if (dynamic && m_cfg.initial_fraction < 1.0)
        initial = std::max<size_t>(
            1, static_cast<size_t>(m_cfg.initial_fraction * static_cast<double>(n) + 0.5));

    double t = 0;
    for (size_t i = 1; i <= n; ++i) {
        auto& st = m_nodes[i];
        if (i <= initial) {
            st.join_time = 0;
            st.alive = true;
            ++m_total_interested;
        } else {
            double rate = m_cfg.arrival_rate > 0 ? m_cfg.arrival_rate : 1.0;
            t += churn_rng.expo(1.0 / rate);
            st.join_time = t;
            m_events.insert({t, 1, static_cast<peer_id>(i), m_next_seq++});
        }
        st.depart_deadline = st.join_time + overlay::sample_lifetime(m_churn, churn_rng);
        if (std::isfinite(st.depart_deadline))
            m_events.insert({st.depart_deadline, 2, static_cast<peer_id>(i), m_next_seq++});
    }
}

void engine::build_tnnc_tree() {
    std::vector<peer_id> frontier{server_id};
    std::vector<size_t> fanout(m_nodes.size(), 0);
    std::vector<uint8_t> seen(m_nodes.size(), 0);
    seen[server_id] = 1;
    size_t cap = std::max<size_t>(2, m_cfg.degree);
    while (!frontier.empty()) {
        std::vector<peer_id> next;
        for (peer_id u : frontier) {
            for (peer_id v : m_topo.edges[u]) {
                if (seen[v] || fanout[u] >= cap) continue;
                seen[v] = 1;
                ++fanout[u];
                m_nodes[v].tree_parent = static_cast<int>(u);
                next.push_back(v);
            }
        }
        frontier = std::move(next);
    }
    for (size_t i = 1; i < m_nodes.size(); ++i)
        if (!seen[i]) m_nodes[i].tree_parent = server_id;
}

metrics_report engine::run() {
    metrics_report rep;
    try {
        build_world();
        build_generations();
        schedule_churn();

        if (m_cfg.protocol == protocol_kind::dsnc) {
            m_phase = phase_kind::nptp;
            m_nptp_total = m_plan.chunks_in_segment(0);
        }
        if (m_cfg.protocol == protocol_kind::tnnc && m_cfg.tnnc_topology == tnnc_mode::tree)
            build_tnnc_tree();

        for (size_t i = 1; i < m_nodes.size(); ++i)
            if (m_nodes[i].alive) mark_dirty(static_cast<peer_id>(i));
        loop();
    } catch (const coding::protocol_stall& e) {
        rep.stalled = true;
        rep.stall_diagnostic = e.diagnostic;
    }

    rep.horizon_exceeded = m_horizon_exceeded;
    rep.total_interested = m_total_interested;
    rep.coded_packets_sent = m_coded_sent;
    rep.non_innovative_receptions = m_non_innovative;
    rep.message_overhead = m_overhead;
    rep.access_link_bytes = m_access_bytes;
    rep.total_uploaded_bytes = m_uploaded;
    rep.group_count = m_groups.size();

    double finish_sum = 0;
    size_t finished = 0;
    double max_finish = 0;
    std::vector<double> seg_share(m_plan.segment_count, 0);
    size_t seg_sample = 0;
    for (size_t i = 1; i < m_nodes.size(); ++i) {
        const auto& st = m_nodes[i];
        bool participated = st.alive || st.finished || st.join_time <= m_now;
        if (!participated || st.join_time > m_now) continue;
        if (st.finished) {
            ++finished;
            double d = st.finish_time - st.join_time;
            finish_sum += d;
            max_finish = std::max(max_finish, d);
            if (d > 0 && m_plan.segment_count > 0) {
                std::vector<double> times = st.seg_done_time;
                bool ok = true;
                for (double tt : times)
                    if (tt < 0) ok = false;
                if (ok) {
                    std::sort(times.begin(), times.end());
                    ++seg_sample;
                    double prev = st.join_time;
                    for (size_t s = 0; s < times.size(); ++s) {
                        seg_share[s] += (times[s] - prev) / d;
                        prev = times[s];
                    }
                }
            }
        } else {
            ++m_failed; // departed early or stranded at the horizon
        }
    }
    rep.finished_peers = finished;
    rep.failed_peers = m_failed;
    rep.avg_finish_time = finished ? finish_sum / static_cast<double>(finished) : 0;
    rep.max_finish_time = max_finish;
    rep.failure_rate = m_total_interested ? static_cast<double>(m_failed) /
                                                static_cast<double>(m_total_interested)
                                          : 0;
    rep.makespan = std::max(m_last_finish, m_now);
    if (rep.makespan > 0)
        rep.throughput = static_cast<double>(m_uploaded) / rep.makespan;
    if (seg_sample > 0)
        for (auto& s : seg_share) s /= static_cast<double>(seg_sample);
    rep.per_segment_progress = std::move(seg_share);

    double stress_sum = 0;
    size_t stressed = 0;
    auto add_stress = [&](const link_tally& lt) {
        if (lt.total == 0) return;
        stress_sum += link_stress(lt.total, lt.distinct.size());
        ++stressed;
    };
    for (const auto& [key, lt] : m_links) add_stress(lt);
    add_stress(m_access_tally);
    rep.mean_link_stress = stressed ? stress_sum / static_cast<double>(stressed) : 1.0;
    return rep;
}

void engine::loop() {
    schedule_work();
    reallocate();
    for (;;) {
        double tc = inf;
        for (const auto& fl : m_flows)
            if (fl.rate > 0) tc = std::min(tc, m_now + (fl.total - fl.done) / fl.rate);
        double te = m_events.empty() ? inf : m_events.begin()->t;
        double tnext = std::min(tc, te);

        if (tnext == inf) break; // finished, or starved with nothing schedulable
        if (tnext > m_cfg.horizon) {
            m_now = m_cfg.horizon;
            for (size_t i = 1; i < m_nodes.size(); ++i)
                if (incomplete(static_cast<peer_id>(i))) m_horizon_exceeded = true;
            break;
        }

        advance_to(tnext);

        std::vector<size_t> done_idx;
        for (size_t i = 0; i < m_flows.size(); ++i)
            if (m_flows[i].rate > 0 && m_flows[i].done >= m_flows[i].total - 1e-6)
                done_idx.push_back(i);
        std::sort(done_idx.begin(), done_idx.end(),
                  [&](size_t a, size_t b) { return m_flows[a].id < m_flows[b].id; });
        std::vector<flow> finished_flows;
        finished_flows.reserve(done_idx.size());
        for (size_t i : done_idx) finished_flows.push_back(std::move(m_flows[i]));
        std::sort(done_idx.begin(), done_idx.end(), std::greater<size_t>());
        for (size_t i : done_idx) m_flows.erase(m_flows.begin() + static_cast<ptrdiff_t>(i));
        if (!finished_flows.empty()) m_flows_changed = true;
        for (auto& fl : finished_flows) process_completion(std::move(fl));

        while (!m_events.empty() && m_events.begin()->t <= m_now + time_eps) {
            event ev = *m_events.begin();
            m_events.erase(m_events.begin());
            process_event(ev);
        }

        schedule_work();
        reallocate();
    }
}

void engine::advance_to(double t) {
    double dt = t - m_now;
    if (dt > 0)
        for (auto& fl : m_flows) fl.done = std::min(fl.total, fl.done + fl.rate * dt);
    m_now = t;
}

void engine::reallocate() {
    if (!m_flows_changed) return;
    m_flows_changed = false;
    if (m_flows.empty()) return;
    std::vector<transfer_endpoints> eps;
    eps.reserve(m_flows.size());
    for (const auto& fl : m_flows) eps.push_back({fl.src, fl.dst, fl.crosses});
    std::vector<double> up(m_nodes.size()), down(m_nodes.size());
    for (size_t i = 0; i < m_nodes.size(); ++i) {
        up[i] = m_topo.nodes[i].upload_capacity;
        down[i] = m_topo.nodes[i].download_capacity;
    }
    auto rates = allocate_bandwidth(eps, up, down, m_topo.access_capacity);
    std::vector<double> up_used(m_nodes.size(), 0), down_used(m_nodes.size(), 0);
    double access_used = 0;
    for (size_t i = 0; i < m_flows.size(); ++i) {
        m_flows[i].rate = rates[i];
        up_used[m_flows[i].src] += rates[i];
        down_used[m_flows[i].dst] += rates[i];
        if (m_flows[i].crosses) access_used += rates[i];
    }
    // capacity invariants hold at every allocation change
    for (size_t i = 0; i < m_nodes.size(); ++i) {
        if (up_used[i] > up[i] * (1 + 1e-6) + 1e-6 ||
            down_used[i] > down[i] * (1 + 1e-6) + 1e-6)
            throw std::logic_error("node capacity exceeded by the allocation");
    }
    if (access_used > m_topo.access_capacity * (1 + 1e-6) + 1e-6)
        throw std::logic_error("access-link capacity exceeded by the allocation");
}

void engine::start_flow(flow fl) {
    fl.id = m_next_flow_id++;
    fl.crosses = m_topo.crosses_access(fl.src, fl.dst);
    m_nodes[fl.src].up_active++;
    m_nodes[fl.dst].down_active++;
    m_flows.push_back(std::move(fl));
    m_flows_changed = true;
}

void engine::start_chunk_flow(peer_id src, peer_id dst, size_t chunk) {
    flow fl;
    fl.src = src;
    fl.dst = dst;
    fl.kind = flow_kind::chunk;
    fl.chunk = chunk;
    fl.total = static_cast<double>(m_plan.chunk_size);
    fl.gen = static_cast<uint32_t>(chunk);
    fl.wire_id = fnv1a(reinterpret_cast<const uint8_t*>(&chunk), sizeof chunk);
    start_flow(std::move(fl));
}

void engine::mark_neighborhood(peer_id p) {
    for (peer_id nb : m_topo.edges[p])
        if (nb != server_id && m_nodes[nb].alive) mark_dirty(nb);
    if (m_cfg.protocol == protocol_kind::dsnc) {
        if (m_nodes[p].group_index >= 0)
            for (peer_id m : m_groups[static_cast<size_t>(m_nodes[p].group_index)].members)
                if (m_nodes[m].alive) mark_dirty(m);
        // super-peers pull from each other across groups
        if (m_nodes[p].is_super)
            for (const auto& g : m_groups)
                for (peer_id sp : g.super_peers)
                    if (m_nodes[sp].alive) mark_dirty(sp);
        // peers reach the server without an overlay edge; wake its clients
        if (p == server_id) {
            for (size_t i = 1; i < m_nodes.size(); ++i) {
                if (!m_nodes[i].alive || m_nodes[i].finished || m_nodes[i].down_active)
                    continue;
                if (!m_topo.is_campus(static_cast<peer_id>(i)) || m_nodes[i].is_super ||
                    m_groups.empty())
                    mark_dirty(static_cast<peer_id>(i));
            }
        }
    }
    if (m_cfg.protocol == protocol_kind::tnnc && m_cfg.tnnc_topology == tnnc_mode::tree) {
        for (size_t i = 1; i < m_nodes.size(); ++i)
            if (m_nodes[i].tree_parent == static_cast<int>(p) && m_nodes[i].alive)
                mark_dirty(static_cast<peer_id>(i));
    }
}

void engine::process_completion(flow fl) {
    m_nodes[fl.src].up_active--;
    m_nodes[fl.dst].down_active--;

    m_uploaded += static_cast<uint64_t>(fl.total);
    m_topo.nodes[fl.src].contribution += static_cast<uint64_t>(fl.total);
    if (fl.kind == flow_kind::coded) {
        ++m_coded_sent;
        m_overhead += fl.overhead;
    }
    tally(fl.src, fl.dst, fl.crosses, fl.wire_id, static_cast<uint64_t>(fl.total) + fl.overhead);

    const char* kind = fl.is_retry ? "retry"
                                    : (fl.kind == flow_kind::coded ? "coded" : "chunk");
    bool lost = overlay::sample_link_failure(m_loss, m_dyn);
    if (lost) {
        trace(kind, fl.src, fl.dst, fl.gen, static_cast<uint64_t>(fl.total), -1);
        if (m_cfg.protocol == protocol_kind::dsnc && fl.kind == flow_kind::chunk &&
            fl.src == server_id && m_phase == phase_kind::nptp)
            m_nptp_outstanding = false; // retried on the next scheduling pass
        if (m_cfg.protocol == protocol_kind::dsnc && fl.kind == flow_kind::coded &&
            fl.attempt < m_cfg.retry_cap && incomplete(fl.dst)) {
            auto& rt = m_nodes[fl.dst].retry;
            rt.pending = true;
            rt.pkt = std::move(fl.pkt);
            rt.src = fl.src;
            rt.gen = fl.gen;
            rt.attempts = fl.attempt;
            rt.pool_idx = fl.pool_idx;
        }
        mark_dirty(fl.dst);
        mark_dirty(fl.src);
        mark_neighborhood(fl.src);
        return;
    }

    int innovative = 1;
    if (fl.kind == flow_kind::chunk) {
        deliver_chunk(fl.dst, fl.chunk);
        if (m_cfg.protocol == protocol_kind::dsnc && m_phase == phase_kind::nptp) {
            if (fl.src == server_id) {
                m_nptp_outstanding = false;
                ++m_nptp_next;
            } else {
                ++m_nptp_relays;
            }
            check_nptp_done();
        }
    } else {
        innovative = deliver_coded(fl);
    }
    trace(kind, fl.src, fl.dst, fl.gen, static_cast<uint64_t>(fl.total), innovative);

    mark_dirty(fl.dst);
    mark_dirty(fl.src);
    mark_neighborhood(fl.src);
    mark_neighborhood(fl.dst);
}

void engine::deliver_chunk(peer_id p, size_t chunk) {
    auto& bm = m_topo.nodes[p].content_bitmap;
    if (bm[chunk]) return;
    size_t off = chunk * m_plan.chunk_size;
    size_t take = std::min<size_t>(m_plan.chunk_size, m_content.size() - off);
    std::copy_n(m_content.begin() + static_cast<ptrdiff_t>(off), take,
                m_nodes[p].content.begin() + static_cast<ptrdiff_t>(off));
    on_chunk_gained(p, chunk);
}

void engine::on_chunk_gained(peer_id p, size_t chunk) {
    auto& node = m_nodes[p];
    auto& bm = m_topo.nodes[p].content_bitmap;
    if (bm[chunk]) return;
    bm[chunk] = 1;
    ++node.chunks_held;
    size_t seg = chunk / m_plan.chunks_per_segment;
    if (--node.seg_remaining[seg] == 0) node.seg_done_time[seg] = m_now;

    // native chunks arriving after a packet group opened must keep its
    // indicator rows and completion state in sync
    if (m_cfg.protocol == protocol_kind::dsnc && !m_pgs.empty()) {
        uint32_t pgid = m_chunk_to_pg[chunk];
        auto& pg = m_pgs[pgid];
        if (pg.open) {
            size_t slot = chunk - pg.chunk_ids.front();
            pg.missing[p][slot] = 0;
            if (!node.gen_done[pgid]) {
                bool all = true;
                for (size_t id : pg.chunk_ids)
                    if (!bm[id]) all = false;
                if (all) set_gen_done(p, pgid);
            }
        }
    }
    if (node.chunks_held == m_plan.total_chunks) finish_peer(p);
}

coding::decoder_state& engine::decoder_for(peer_id p, uint32_t gen) {
    auto& slot = m_nodes[p].decoders[gen];
    if (!slot) {
        const coding::packet_group& g = m_cfg.protocol == protocol_kind::dsnc
                                            ? m_pgs[gen].group
                                            : m_seg_groups[gen];
        slot = std::make_unique<coding::decoder_state>(gen, g.group_size, m_plan.chunk_size,
                                                       m_field);
        const auto& bm = m_topo.nodes[p].content_bitmap;
        for (size_t j = 0; j < g.group_size; ++j) {
            bool seed = false;
            coding::payload data;
            if (g.is_padding(j)) {
                seed = true;
                data.assign(m_plan.chunk_size, 0);
            } else {
                size_t chunk = m_cfg.protocol == protocol_kind::dsnc
                                   ? m_pgs[gen].chunk_ids[j]
                                   : gen * m_plan.chunks_per_segment + j;
                if (bm[chunk]) {
                    seed = true;
                    auto begin = m_nodes[p].content.begin() +
                                 static_cast<ptrdiff_t>(chunk * m_plan.chunk_size);
                    data.assign(begin, begin + static_cast<ptrdiff_t>(m_plan.chunk_size));
                }
            }
            if (seed) {
                coding::coding_vector e(g.group_size, 0);
                e[j] = 1;
                slot->insert_vector(std::move(e), std::move(data));
            }
        }
    }
    return *slot;
}

int engine::deliver_coded(flow& fl) {
    peer_id p = fl.dst;
    auto& node = m_nodes[p];
    const bool dsnc = m_cfg.protocol == protocol_kind::dsnc;
    auto& dec = decoder_for(p, fl.gen);

    if (node.gen_done[fl.gen] || dec.complete() || !dec.insert(fl.pkt)) {
        ++m_non_innovative;
        if (m_cfg.protocol == protocol_kind::fncm && fl.src != server_id &&
            !m_nodes[fl.src].gen_done[fl.gen]) {
            // remember a partial source until it learns something new; a
            // full-rank source draws fresh randomness every time
            const auto& slot = m_nodes[fl.src].decoders[fl.gen];
            size_t src_rank = slot ? slot->rank() : 0;
            if (node.stale.size() >= 16) node.stale.erase(node.stale.begin());
            node.stale.push_back({fl.src, fl.gen, src_rank});
        }
        return 0;
    }

    if (dsnc) {
        auto& pg = m_pgs[fl.gen];
        for (size_t j = 0; j < pg.group.group_size; ++j)
            if (pg.missing[p][j] && dec.has_native(j)) pg.missing[p][j] = 0;
    }

    if (dec.complete()) {
        auto payloads = dec.solve();
        const coding::packet_group& g = dsnc ? m_pgs[fl.gen].group : m_seg_groups[fl.gen];
        for (size_t j = 0; j < g.real_count; ++j) {
            size_t chunk = dsnc ? m_pgs[fl.gen].chunk_ids[j]
                                : fl.gen * m_plan.chunks_per_segment + j;
            if (m_topo.nodes[p].content_bitmap[chunk]) continue;
            std::copy(payloads[j].begin(), payloads[j].end(),
                      node.content.begin() + static_cast<ptrdiff_t>(chunk * m_plan.chunk_size));
            on_chunk_gained(p, chunk);
        }
        if (dsnc) set_gen_done(p, fl.gen);
        else node.gen_done[fl.gen] = 1;
        dec.release_payloads();
    }
    return 1;
}

void engine::finish_peer(peer_id p) {
    auto& node = m_nodes[p];
    if (node.finished) return;
    node.finished = true;
    node.finish_time = m_now;
    m_last_finish = std::max(m_last_finish, m_now);
    // conservation: assembled bytes must hash to the source content
    uint64_t h = fnv1a(node.content.data(), m_content.size());
    if (h != m_content_hash)
        throw std::logic_error("decoded content does not match the source");
    if (m_churn.policy == overlay::departure_policy::leave_after_download && p != server_id)
        m_events.insert({m_now, 2, p, m_next_seq++});
}

void engine::cancel_flows_of(peer_id p) {
    for (auto it = m_flows.begin(); it != m_flows.end();) {
        if (it->src == p || it->dst == p) {
            m_nodes[it->src].up_active--;
            m_nodes[it->dst].down_active--;
            peer_id other = it->src == p ? it->dst : it->src;
            if (m_nodes[other].alive) mark_dirty(other);
            mark_neighborhood(other); // freed slots may unblock waiters
            it = m_flows.erase(it);
            m_flows_changed = true;
        } else {
            ++it;
        }
    }
}

void engine::depart_peer(peer_id p) {
    auto& node = m_nodes[p];
    if (!node.alive) return;
    node.alive = false;
    node.retry.pending = false;
    cancel_flows_of(p);
    trace("leave", p, p, 0, 0, 0);

    // overlay maintenance: surviving neighbours replace the lost edge with
    // a random alive peer so the mesh (and the path to the server) heals
    std::vector<peer_id> former = m_topo.edges[p];
    m_topo.drop_node_edges(p);
    std::vector<peer_id> alive_pool;
    for (size_t i = 1; i < m_nodes.size(); ++i)
        if (m_nodes[i].alive) alive_pool.push_back(static_cast<peer_id>(i));
    for (peer_id nb : former) {
        if (nb != server_id && !m_nodes[nb].alive) continue;
        for (int tries = 0; tries < 8 && !alive_pool.empty(); ++tries) {
            peer_id q = alive_pool[m_dyn.index(alive_pool.size())];
            if (q == nb || m_topo.has_edge(nb, q)) continue;
            m_topo.add_edge(nb, q);
            mark_dirty(q);
            break;
        }
        if (nb != server_id) mark_dirty(nb);
    }

    if (m_cfg.protocol == protocol_kind::dsnc && node.group_index >= 0) {
        auto& g = m_groups[static_cast<size_t>(node.group_index)];
        g.members.erase(std::remove(g.members.begin(), g.members.end(), p), g.members.end());
        if (node.is_super) {
            node.is_super = false;
            g.super_peers.clear();
            std::vector<peer_id> alive_members;
            for (peer_id m : g.members)
                if (m_nodes[m].alive) alive_members.push_back(m);
            if (!alive_members.empty()) {
                overlay::peer_group tmp;
                tmp.members = alive_members;
                peer_id sp = overlay::elect_super_peer(tmp, m_topo.nodes);
                g.super_peers = {sp};
                m_nodes[sp].is_super = true;
            } else if (!m_queues.empty()) {
                // the group died out; its pending work moves to the server queue
                auto& q = m_queues[static_cast<size_t>(node.group_index)];
                auto& pos = m_queue_pos[static_cast<size_t>(node.group_index)];
                for (size_t k = pos; k < q.size(); ++k) {
                    m_pgs[q[k]].coordinator = -1;
                    m_queues.back().push_back(q[k]);
                }
                pos = q.size();
                advance_queue(-1);
            }
        }
    }
    if (m_cfg.protocol == protocol_kind::dsnc) {
        for (uint32_t pgid = 0; pgid < m_pgs.size(); ++pgid) {
            auto& pg = m_pgs[pgid];
            if (!pg.open) continue;
            if (node.gen_done[pgid] && m_topo.is_campus(p) && pg.campus_holders > 0)
                --pg.campus_holders;
            if (!pg.completed && pg.gate[p]) {
                pg.gate[p] = 0;
                pg_gate_check(pgid);
            }
        }
    }
    if (m_cfg.protocol == protocol_kind::tnnc && m_cfg.tnnc_topology == tnnc_mode::tree) {
        // orphans re-attach to their grandparent (the root as a last resort)
        int up = node.tree_parent;
        if (up >= 0 && up != server_id && !m_nodes[static_cast<size_t>(up)].alive)
            up = server_id;
        for (size_t i = 1; i < m_nodes.size(); ++i)
            if (m_nodes[i].tree_parent == static_cast<int>(p)) {
                m_nodes[i].tree_parent = up < 0 ? server_id : up;
                m_nodes[i].tree_ready_at = m_now + m_cfg.tree_repair_delay;
                m_events.insert({m_nodes[i].tree_ready_at, 4, static_cast<peer_id>(i),
                                 m_next_seq++});
            }
    }
    mark_neighborhood(p);
}

void engine::join_peer(peer_id p) {
    auto& node = m_nodes[p];
    node.alive = true;
    ++m_total_interested;
    trace("join", p, p, 0, 0, 0);
    if (m_cfg.protocol == protocol_kind::dsnc && m_topo.is_campus(p) && !m_groups.empty() &&
        m_phase == phase_kind::cptp) {
        size_t best = 0;
        for (size_t gi = 1; gi < m_groups.size(); ++gi)
            if (m_groups[gi].members.size() < m_groups[best].members.size()) best = gi;
        m_groups[best].members.push_back(p);
        std::sort(m_groups[best].members.begin(), m_groups[best].members.end());
        node.group_index = static_cast<int>(best);
    }
    if (m_cfg.protocol == protocol_kind::tnnc && m_cfg.tnnc_topology == tnnc_mode::tree) {
        if (node.tree_parent < 0) node.tree_parent = server_id;
        node.tree_ready_at = m_now + m_cfg.tree_repair_delay;
        m_events.insert({node.tree_ready_at, 4, p, m_next_seq++});
    }
    mark_dirty(p);
    mark_neighborhood(p);
}

void engine::process_event(const event& ev) {
    switch (ev.rank) {
    case 1: join_peer(ev.subject); break;
    case 2: depart_peer(ev.subject); break;
    case 3:
        if (m_phase == phase_kind::nptp) phase_transition();
        break;
    case 4: mark_dirty(ev.subject); break;
    default: break;
    }
}

// ---- dsnc ----------------------------------------------------------------------

void engine::check_nptp_done() {
    // Grouping happens after the server's native pass plus a short relay
    // period (roughly one delivery per peer). Cutting over while holdings
    // are still partial keeps the content dissimilarity that drives the
    // interest scores; letting relays run to coverage would make every
    // bitmap identical and collapse the grouping.
    if (m_phase != phase_kind::nptp || m_nptp_fired || m_nptp_next < m_nptp_total ||
        m_nptp_outstanding)
        return;
    if (m_nptp_relays >= m_cfg.peer_count || m_flows.empty()) {
        m_nptp_fired = true;
        m_events.insert({m_now, 3, 0, m_next_seq++});
    }
}

void engine::phase_transition() {
    m_phase = phase_kind::cptp;
    trace("phase", 0, 0, 0, 0, 0);

    std::vector<overlay::peer_profile> campus;
    for (size_t i = 1; i < m_nodes.size(); ++i) {
        if (!m_nodes[i].alive || m_nodes[i].finished) continue;
        if (!m_topo.is_campus(static_cast<peer_id>(i))) continue;
        campus.push_back(m_topo.nodes[i]);
    }
    m_groups = overlay::form_groups(campus, m_cfg.score_threshold, m_dyn,
                                    m_cfg.similarity_group_cap);
    for (size_t gi = 0; gi < m_groups.size(); ++gi) {
        for (peer_id m : m_groups[gi].members) m_nodes[m].group_index = static_cast<int>(gi);
        for (peer_id sp : m_groups[gi].super_peers) m_nodes[sp].is_super = true;
    }
    // super-peers form a fully connected upper overlay
    for (size_t a = 0; a < m_groups.size(); ++a)
        for (size_t b = a + 1; b < m_groups.size(); ++b) {
            peer_id sa = m_groups[a].super_peers.front();
            peer_id sb = m_groups[b].super_peers.front();
            if (!m_topo.has_edge(sa, sb)) m_topo.add_edge(sa, sb);
        }

    // deal packet groups round-robin over the similarity groups; the last
    // queue belongs to the server (used when no groups exist)
    m_queues.assign(m_groups.size() + 1, {});
    m_queue_pos.assign(m_groups.size() + 1, 0);
    for (uint32_t pgid = 0; pgid < m_pgs.size(); ++pgid) {
        if (m_groups.empty()) {
            m_pgs[pgid].coordinator = -1;
            m_queues.back().push_back(pgid);
        } else {
            size_t gi = pgid % m_groups.size();
            m_pgs[pgid].coordinator = static_cast<int>(gi);
            m_queues[gi].push_back(pgid);
            m_groups[gi].assigned_shares.push_back(pgid);
        }
    }
    for (size_t qi = 0; qi < m_queues.size(); ++qi)
        advance_queue(qi + 1 == m_queues.size() ? -1 : static_cast<int>(qi));

    for (size_t i = 1; i < m_nodes.size(); ++i)
        if (m_nodes[i].alive) mark_dirty(static_cast<peer_id>(i));
}

void engine::advance_queue(int coordinator) {
    size_t qi = coordinator < 0 ? m_queues.size() - 1 : static_cast<size_t>(coordinator);
    auto& q = m_queues[qi];
    auto& pos = m_queue_pos[qi];
    while (pos < q.size()) {
        uint32_t pgid = q[pos];
        if (!m_pgs[pgid].open) open_pg(pgid);
        if (!m_pgs[pgid].completed) break;
        ++pos;
    }
}

void engine::open_pg(uint32_t pgid) {
    auto& pg = m_pgs[pgid];
    pg.open = true;
    pg.pool = coding::coding_vector_pool::build(pg.group.group_size, m_field);
    pg.missing.assign(m_nodes.size(), std::vector<uint8_t>(pg.group.group_size, 0));
    pg.gate.assign(m_nodes.size(), 0);
    pg.gate_pending = 0;

    // the queue advances when the coordinator's own peers have recovered;
    // cross-group and outside dissemination continues asynchronously
    std::vector<uint8_t> in_gate(m_nodes.size(), 0);
    if (pg.coordinator >= 0) {
        for (peer_id m : m_groups[static_cast<size_t>(pg.coordinator)].members)
            in_gate[m] = 1;
    } else {
        std::fill(in_gate.begin() + 1, in_gate.end(), 1);
    }

    for (size_t i = 1; i < m_nodes.size(); ++i) {
        auto& row = pg.missing[i];
        bool done = true;
        for (size_t j = 0; j < pg.group.real_count; ++j) {
            if (!m_topo.nodes[i].content_bitmap[pg.chunk_ids[j]]) {
                row[j] = 1;
                done = false;
            }
        }
        if (done) {
            m_nodes[i].gen_done[pgid] = 1;
            if (m_nodes[i].alive && m_topo.is_campus(static_cast<peer_id>(i))) {
                ++pg.campus_holders;
                pg.ever_acquired = true;
            }
        }
        if (in_gate[i] && m_nodes[i].alive && !m_nodes[i].finished) {
            pg.gate[i] = 1;
            if (!done) ++pg.gate_pending;
        }
    }
    // drop unit vectors of natives that some alive peer already holds
    for (size_t j = 0; j < pg.group.group_size; ++j) {
        bool held = pg.group.is_padding(j);
        for (size_t i = 1; i < m_nodes.size() && !held; ++i)
            if (m_nodes[i].alive && m_topo.nodes[i].content_bitmap[pg.chunk_ids[j]])
                held = true;
        if (held) pg.pool.remove_available(j);
    }
    if (pg.gate_pending == 0) pg_gate_check(pgid);
}

void engine::set_gen_done(peer_id p, uint32_t pgid) {
    auto& node = m_nodes[p];
    if (node.gen_done[pgid]) return;
    node.gen_done[pgid] = 1;
    auto& pg = m_pgs[pgid];
    if (node.alive && m_topo.is_campus(p)) {
        ++pg.campus_holders;
        pg.ever_acquired = true;
    }
    if (pg.open) pg_gate_check(pgid);
}

void engine::pg_gate_check(uint32_t pgid) {
    auto& pg = m_pgs[pgid];
    if (pg.completed || !pg.open) return;
    size_t pending = 0;
    for (size_t i = 1; i < m_nodes.size(); ++i)
        if (pg.gate[i] && !m_nodes[i].gen_done[pgid]) ++pending;
    pg.gate_pending = pending;
    if (pending == 0) {
        pg.completed = true;
        advance_queue(pg.coordinator);
        for (size_t i = 1; i < m_nodes.size(); ++i)
            if (m_nodes[i].alive && !m_nodes[i].finished) mark_dirty(static_cast<peer_id>(i));
    }
}

bool engine::dsnc_can_serve(peer_id u, uint32_t pgid) const {
    if (!m_nodes[u].alive) return false;
    if (u == server_id) return true;
    if (m_nodes[u].gen_done[pgid]) return true;
    return false;
}

bool engine::dsnc_reachable(peer_id dst, peer_id u) const {
    if (m_topo.has_edge(dst, u)) return true;
    const auto& d = m_nodes[dst];
    const auto& s = m_nodes[u];
    if (d.group_index >= 0 && d.group_index == s.group_index) return true;
    if (d.is_super && s.is_super) return true;
    return false;
}

bool engine::pick_dsnc_vector(peer_id dst, uint32_t pgid, coding::coding_vector& out,
                              size_t& pool_idx) {
    auto& pg = m_pgs[pgid];
    auto& dec = decoder_for(dst, pgid);
    size_t budget = pg.pool.universe_size() + 64;
    bool refreshed = false;
    for (size_t tries = 0; tries < budget; ++tries) {
        if (pg.pool.empty() && !refreshed) {
            // constraint-update reuse pass over live backlogs and indicators
            refreshed = true;
            coding::backlog_counter bk;
            bk.need.assign(m_nodes.size(), 0);
            for (size_t i = 1; i < m_nodes.size(); ++i) {
                if (!m_nodes[i].alive || m_nodes[i].gen_done[pgid]) continue;
                const auto& slot = m_nodes[i].decoders[pgid];
                size_t rank;
                if (slot) {
                    rank = slot->rank();
                } else {
                    rank = pg.group.group_size - pg.group.real_count;
                    for (size_t j = 0; j < pg.group.real_count; ++j)
                        if (!pg.missing[i][j]) ++rank;
                }
                bk.need[i] = pg.group.group_size - rank;
            }
            coding::reception_indicator ind;
            ind.l = pg.missing;
            coding::constraint_update(bk, pg.pool, {}, {}, ind);
        }
        coding::coding_vector cand;
        size_t idx = coding::coding_vector_pool::npos;
        if (!pg.pool.empty()) {
            cand = pg.pool.select(m_dyn);
            idx = pg.pool.index_of(cand);
        } else {
            cand.assign(pg.group.group_size, 0);
            bool nz = false;
            for (auto& c : cand) {
                c = static_cast<uint16_t>(m_dyn.below(m_field.order()));
                nz = nz || c != 0;
            }
            if (!nz) continue;
        }
        if (dec.would_be_innovative(cand)) {
            out = std::move(cand);
            pool_idx = idx;
            return true;
        }
    }
    return false;
}

void engine::serve_nptp() {
    // the server streams the first segment's natives one at a time
    while (!m_nptp_outstanding && m_nptp_next < m_nptp_total) {
        size_t chunk = m_nptp_next;
        peer_id target = 0;
        size_t n = m_nodes.size() - 1;
        for (size_t step = 0; step < n; ++step) {
            peer_id cand = static_cast<peer_id>(1 + (m_nptp_rr + step) % n);
            if (m_nodes[cand].alive && !m_nodes[cand].finished &&
                !m_topo.nodes[cand].content_bitmap[chunk] && m_nodes[cand].down_active < 2) {
                target = cand;
                m_nptp_rr = (m_nptp_rr + step + 1) % n;
                break;
            }
        }
        if (target == 0) {
            bool anyone_missing = false;
            for (size_t i = 1; i < m_nodes.size(); ++i)
                if (m_nodes[i].alive && !m_topo.nodes[i].content_bitmap[chunk])
                    anyone_missing = true;
            if (anyone_missing) return; // receivers busy; retry on the next pass
            ++m_nptp_next;               // everyone already holds it
            continue;
        }
        if (m_nodes[server_id].up_active >= m_cfg.upload_slots) return;
        start_chunk_flow(server_id, target, chunk);
        m_nptp_outstanding = true;
    }
}

// ---- per-protocol download scheduling --------------------------------------------

void engine::schedule_work() {
    if (m_cfg.protocol == protocol_kind::dsnc && m_phase == phase_kind::nptp) serve_nptp();
    while (!m_dirty.empty()) {
        peer_id p = *m_dirty.begin();
        m_dirty.erase(m_dirty.begin());
        try_start(p);
    }
    if (m_cfg.protocol == protocol_kind::dsnc && m_phase == phase_kind::nptp &&
        m_flows.empty())
        check_nptp_done();
}

void engine::try_start(peer_id p) {
    if (!m_nodes[p].alive || m_nodes[p].finished || m_nodes[p].down_active) return;
    switch (m_cfg.protocol) {
    case protocol_kind::tnnc:
        if (m_cfg.tnnc_topology == tnnc_mode::tree) try_start_tnnc_tree(p);
        else try_start_tnnc(p);
        break;
    case protocol_kind::fncm: try_start_fncm(p); break;
    case protocol_kind::dsnc: try_start_dsnc(p); break;
    }
}

void engine::try_start_tnnc(peer_id p) {
    const auto& adj = m_topo.edges[p];
    const auto& bm = m_topo.nodes[p].content_bitmap;
    std::vector<uint8_t> missing(m_plan.total_chunks);
    for (size_t c = 0; c < m_plan.total_chunks; ++c) missing[c] = !bm[c];
    std::vector<size_t> counts(m_plan.total_chunks, 0);
    for (peer_id nb : adj) {
        if (!m_nodes[nb].alive) continue;
        const auto& nbm = m_topo.nodes[nb].content_bitmap;
        for (size_t c = 0; c < m_plan.total_chunks; ++c)
            if (missing[c] && nbm[c]) ++counts[c];
    }

    // rarest first, falling back to the next-rarest while holders are busy
    std::vector<size_t> cview(counts);
    for (;;) {
        size_t chunk = tnnc_pick_rarest(missing, cview, m_dyn);
        if (chunk == no_chunk) return; // idle
        cview[chunk] = 0;
        size_t deg = adj.size();
        for (size_t step = 0; step < deg; ++step) {
            peer_id u = adj[(m_nodes[p].rr + step) % deg];
            if (!m_nodes[u].alive || !m_topo.nodes[u].content_bitmap[chunk]) continue;
            if (m_nodes[u].up_active >= m_cfg.upload_slots) continue;
            m_nodes[p].rr = (m_nodes[p].rr + step + 1) % deg;
            start_chunk_flow(u, p, chunk);
            return;
        }
    }
}

void engine::try_start_tnnc_tree(peer_id p) {
    if (m_now < m_nodes[p].tree_ready_at) return; // still re-joining
    int parent = m_nodes[p].tree_parent;
    if (parent < 0) return;
    peer_id u = static_cast<peer_id>(parent);
    if (!m_nodes[u].alive) return;
    const auto& bm = m_topo.nodes[p].content_bitmap;
    const auto& ubm = m_topo.nodes[u].content_bitmap;
    // chunks stream strictly in order down the tree
    for (size_t c = 0; c < m_plan.total_chunks; ++c) {
        if (bm[c]) continue;
        if (!ubm[c]) return; // wait for the parent
        if (m_nodes[u].up_active >= m_cfg.upload_slots) return;
        start_chunk_flow(u, p, c);
        return;
    }
}

void engine::try_start_fncm(peer_id p) {
    const auto& adj = m_topo.edges[p];
    const size_t dim = m_cfg.chunks_per_segment;
    for (size_t s = 0; s < m_plan.segment_count; ++s) {
        if (m_nodes[p].gen_done[s]) continue;
        const auto& mine = m_nodes[p].decoders[s];
        size_t my_rank = mine ? mine->rank() : 0;
        auto rank_of = [&](peer_id u) -> size_t {
            if (u == server_id || m_nodes[u].gen_done[s]) return dim;
            const auto& slot = m_nodes[u].decoders[s];
            return slot ? slot->rank() : 0;
        };
        size_t deg = adj.size();
        // peers advertise their block counts; prefer uploaders that are
        // ahead, falling back to anyone with content (spans may still
        // overlap, which is where the non-innovative receptions come from)
        peer_id pick = 0;
        bool found = false;
        bool pick_ahead = false;
        size_t pick_step = 0;
        for (size_t step = 0; step < deg; ++step) {
            peer_id u = adj[(m_nodes[p].rr + step) % deg];
            if (!m_nodes[u].alive || m_nodes[u].up_active >= m_cfg.upload_slots) continue;
            size_t r = rank_of(u);
            if (r == 0) continue;
            bool is_stale = false;
            for (const auto& st : m_nodes[p].stale)
                if (st.uploader == u && st.segment == s && st.rank == r) is_stale = true;
            if (is_stale) continue;
            bool ahead = r > my_rank;
            if (!found || (ahead && !pick_ahead)) {
                found = true;
                pick = u;
                pick_ahead = ahead;
                pick_step = step;
                if (ahead) break;
            }
        }
        if (found) {
            peer_id u = pick;
            coding::coded_packet pkt;
            if (u == server_id || m_nodes[u].gen_done[s]) {
                // full holders recode uniformly over the generation
                coding::coding_vector v(dim);
                bool nz = false;
                for (auto& c : v) {
                    c = static_cast<uint16_t>(m_dyn.below(m_field.order()));
                    nz = nz || c != 0;
                }
                if (!nz) v[0] = 1;
                pkt = coding::encode(m_seg_groups[s], v, m_field);
            } else {
                pkt = m_nodes[u].decoders[s]->recombine(m_dyn);
            }
            m_nodes[p].rr = (m_nodes[p].rr + pick_step + 1) % deg;
            flow fl;
            fl.src = u;
            fl.dst = p;
            fl.kind = flow_kind::coded;
            fl.gen = static_cast<uint32_t>(s);
            fl.total = static_cast<double>(m_plan.chunk_size);
            fl.overhead = coding::coding_vector_wire_bytes(dim, m_field.bits());
            auto wire = coding::serialize(pkt, m_field);
            fl.wire_id = fnv1a(wire.data(), wire.size());
            fl.pkt = std::move(pkt);
            start_flow(std::move(fl));
            return;
        }
    }
}

void engine::try_start_dsnc(peer_id p) {
    const bool p_campus = m_topo.is_campus(p);
    auto& node = m_nodes[p];
    if (m_phase == phase_kind::nptp) {
        // Native relaying among peers while the server streams. Each peer
        // only grabs a couple of natives here: partial, scattered holdings
        // are what give the interest scores their dissimilarity signal.
        if (node.chunks_held >= 2) return;
        const auto& adj = m_topo.edges[p];
        const auto& bm = m_topo.nodes[p].content_bitmap;
        // relays stay on their own side of the access link
        std::vector<uint8_t> missing(m_nptp_total, 0);
        std::vector<size_t> counts(m_nptp_total, 0);
        for (size_t c = 0; c < m_nptp_total; ++c) {
            missing[c] = !bm[c];
            if (!missing[c]) continue;
            for (peer_id nb : adj) {
                if (nb == server_id || !m_nodes[nb].alive) continue;
                if (m_topo.is_campus(nb) != p_campus) continue;
                if (m_topo.nodes[nb].content_bitmap[c]) ++counts[c];
            }
        }
        std::vector<size_t> cview(counts);
        for (;;) {
            size_t chunk = tnnc_pick_rarest(missing, cview, m_dyn);
            if (chunk == no_chunk) return;
            cview[chunk] = 0;
            size_t deg = adj.size();
            for (size_t step = 0; step < deg; ++step) {
                peer_id u = adj[(node.rr + step) % deg];
                if (u == server_id || !m_nodes[u].alive) continue;
                if (m_topo.is_campus(u) != p_campus) continue;
                if (!m_topo.nodes[u].content_bitmap[chunk]) continue;
                if (m_nodes[u].up_active >= m_cfg.upload_slots) continue;
                node.rr = (node.rr + step + 1) % deg;
                start_chunk_flow(u, p, chunk);
                return;
            }
        }
    }

    // CPTP: resume a pending retransmission of the same packet first
    if (node.retry.pending) {
        auto& rt = node.retry;
        if (node.gen_done[rt.gen] || !m_nodes[rt.src].alive) {
            rt.pending = false;
        } else {
            if (m_nodes[rt.src].up_active >= m_cfg.upload_slots) return;
            flow fl;
            fl.src = rt.src;
            fl.dst = p;
            fl.kind = flow_kind::coded;
            fl.gen = rt.gen;
            fl.pkt = rt.pkt;
            fl.total = static_cast<double>(m_plan.chunk_size);
            fl.overhead = coding::coding_vector_wire_bytes(m_cfg.group_size, m_field.bits());
            auto wire = coding::serialize(fl.pkt, m_field);
            fl.wire_id = fnv1a(wire.data(), wire.size());
            fl.attempt = rt.attempts + 1;
            fl.pool_idx = rt.pool_idx;
            fl.is_retry = true;
            rt.pending = false;
            start_flow(std::move(fl));
            return;
        }
    }

    const bool campus = p_campus;
    for (uint32_t pgid = 0; pgid < static_cast<uint32_t>(m_pgs.size()); ++pgid) {
        auto& pg = m_pgs[pgid];
        if (!pg.open || node.gen_done[pgid]) continue;

        std::vector<peer_id> cands;
        auto push = [&](peer_id u) {
            if (u == p || u == server_id) return;
            if (!dsnc_can_serve(u, pgid) || !dsnc_reachable(p, u)) return;
            if (std::find(cands.begin(), cands.end(), u) == cands.end()) cands.push_back(u);
        };
        if (campus) {
            if (node.group_index >= 0)
                for (peer_id m : m_groups[static_cast<size_t>(node.group_index)].members)
                    push(m);
            for (peer_id nb : m_topo.edges[p])
                if (m_topo.is_campus(nb)) push(nb);
            if (node.is_super)
                for (const auto& g : m_groups)
                    for (peer_id sp : g.super_peers) push(sp);
            // the responsible super-peer acquires across the access link when
            // nothing inside the campus can serve the group yet; once churn
            // drains every campus holder, a super-peer re-acquires for its
            // group rather than every lacker crossing on its own
            bool acquiring = node.is_super && pg.coordinator == node.group_index;
            bool orphaned =
                node.is_super && pg.ever_acquired && pg.campus_holders == 0;
            if ((cands.empty() && (acquiring || orphaned)) || pg.coordinator < 0)
                cands.push_back(server_id);
        } else {
            for (peer_id nb : m_topo.edges[p])
                if (!m_topo.is_campus(nb) && nb != server_id) push(nb);
            cands.push_back(server_id);
        }
        if (cands.empty()) continue;

        size_t deg = cands.size();
        for (size_t step = 0; step < deg; ++step) {
            peer_id u = cands[(node.rr + step) % deg];
            if (m_nodes[u].up_active >= m_cfg.upload_slots) continue;
            coding::coding_vector v;
            size_t pool_idx = coding::coding_vector_pool::npos;
            if (!pick_dsnc_vector(p, pgid, v, pool_idx))
                throw coding::protocol_stall("no innovative vector for peer " +
                                             std::to_string(p) + " in packet group " +
                                             std::to_string(pgid));
            node.rr = (node.rr + step + 1) % deg;
            flow fl;
            fl.src = u;
            fl.dst = p;
            fl.kind = flow_kind::coded;
            fl.gen = pgid;
            fl.pkt = coding::encode(pg.group, v, m_field);
            fl.total = static_cast<double>(m_plan.chunk_size);
            fl.overhead =
                coding::coding_vector_wire_bytes(pg.group.group_size, m_field.bits());
            auto wire = coding::serialize(fl.pkt, m_field);
            fl.wire_id = fnv1a(wire.data(), wire.size());
            fl.pool_idx = pool_idx;
            start_flow(std::move(fl));
            return;
        }
    }
}

} // namespace

metrics_report run(const sim_config& cfg) {
    engine e(cfg);
    return e.run();
}

} // namespace ncdist::sim
