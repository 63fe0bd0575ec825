#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncdist/coding.hpp"
#include "ncdist/overlay.hpp"
#include "ncdist/rng.hpp"

namespace ncdist::sim {

enum class protocol_kind { tnnc, fncm, dsnc };

std::string to_string(protocol_kind p);
protocol_kind protocol_from_string(const std::string& s);

enum class arrangement_kind {
    homogeneous,
    homogeneous_linkfail,
    dynamic_stay,
    dynamic_leave,
};

std::string to_string(arrangement_kind a);
arrangement_kind arrangement_from_string(const std::string& s);

enum class tnnc_mode { mesh, tree };

struct sim_config {
    protocol_kind protocol = protocol_kind::dsnc;
    size_t peer_count = 50;
    uint64_t seed = 1;

    uint64_t content_size = 96 * 1024;
    uint64_t chunk_size = 2 * 1024;
    size_t chunks_per_segment = 24;
    size_t group_size = 8;
    unsigned field_bits = 8;

    arrangement_kind arrangement = arrangement_kind::homogeneous;
    double p_fail = 0;          // per-transmission loss (linkfail arrangement)
    double arrival_rate = 0;    // dynamic arrangements: Poisson joins per second
    double lifetime_mean = 0;   // dynamic arrangements: exponential, 0 = infinite
    double initial_fraction = 1.0; // share of peer_count present at t = 0

    size_t degree = 4;
    double campus_fraction = 0.8;
    double upload_capacity = 64 * 1024;
    double download_capacity = 128 * 1024;
    double server_upload = 512 * 1024;
    double access_capacity = 256 * 1024;
    std::vector<overlay::capacity_tier> tiers; // heterogeneous capacities

    double horizon = 10000;
    size_t retry_cap = 10;
    size_t upload_slots = 4;
    double score_threshold = 0;
    size_t similarity_group_cap = 12; // members per similarity group (0 = unbounded)
    tnnc_mode tnnc_topology = tnnc_mode::mesh;
    // time to detect a lost tree parent and re-join (tree mode only; mesh
    // and group protocols fail over to already-connected sources)
    double tree_repair_delay = 2.0;

    std::string trace_path;    // optional line-oriented transfer log
};

struct metrics_report {
    double throughput = 0;        // total uploaded bytes / makespan
    double avg_finish_time = 0;   // mean per-peer download duration
    double max_finish_time = 0;
    double failure_rate = 0;      // unfinished peers / total interested
    double mean_link_stress = 1;  // mean over used links of total/distinct
    uint64_t message_overhead = 0;   // coding-vector bytes across coded sends
    uint64_t access_link_bytes = 0;  // bytes crossing the campus boundary
    std::vector<double> per_segment_progress; // completion-time share per segment

    uint64_t total_uploaded_bytes = 0;
    uint64_t coded_packets_sent = 0;
    uint64_t non_innovative_receptions = 0;
    double makespan = 0;
    size_t finished_peers = 0;
    size_t failed_peers = 0;
    size_t total_interested = 0;
    size_t group_count = 0; // similarity groups formed (dsnc)
    bool horizon_exceeded = false;
    bool stalled = false;
    std::string stall_diagnostic;
};

// Deterministic fluid-flow discrete-event run; identical (config, seed)
// pairs produce identical reports. Protocol stalls are reported, not thrown.
metrics_report run(const sim_config& cfg);

// ---- pieces exposed for direct testing -----------------------------------

struct transfer_endpoints {
    size_t src = 0;
    size_t dst = 0;
    bool crosses_access = false;
};

// Max-min fair rates (progressive filling): no uploader, downloader, or the
// shared access link exceeds its capacity, and no rate can grow without
// shrinking a smaller-or-equal one.
std::vector<double> allocate_bandwidth(const std::vector<transfer_endpoints>& flows,
                                       const std::vector<double>& upload_caps,
                                       const std::vector<double>& download_caps,
                                       double access_capacity);

inline constexpr size_t no_chunk = static_cast<size_t>(-1);

// total packets over distinct packets; 1.0 when nothing crossed the link
inline double link_stress(uint64_t total_packets, uint64_t distinct_packets) {
    if (total_packets == 0) return 1.0;
    return static_cast<double>(total_packets) / static_cast<double>(distinct_packets);
}

// rarest-first selection among missing chunks with at least one holder;
// ties broken uniformly; no_chunk when nothing is requestable
size_t tnnc_pick_rarest(const std::vector<uint8_t>& missing,
                        const std::vector<size_t>& holder_counts, rng& r);

} // namespace ncdist::sim
