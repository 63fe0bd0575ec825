#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "ncdist/rng.hpp"

namespace ncdist::overlay {

using peer_id = uint32_t;
inline constexpr peer_id server_id = 0;

struct peer_profile {
    peer_id id = 0;
    double upload_capacity = 0;   // bytes/sec
    double download_capacity = 0; // bytes/sec
    bool in_campus = false;
    bool interested = true;
    std::vector<uint8_t> content_bitmap; // per-chunk possession flags
    uint64_t contribution = 0;           // bytes uploaded so far, K(P_i)
};

// similarity-interest group; formed over campus peers
struct peer_group {
    uint32_t group_id = 0;
    std::vector<peer_id> members;
    std::vector<peer_id> super_peers;          // non-empty after election
    std::vector<uint32_t> assigned_shares;      // packet-group ids this group seeds
};

enum class departure_policy { stay_after_download, leave_after_download };

struct churn_model {
    double arrival_rate = 0;  // Poisson arrivals per second
    departure_policy policy = departure_policy::stay_after_download;
    double lifetime_mean = 0; // exponential mean; 0 disables early departures
};

struct link_failure_model {
    double p_fail = 0; // independent per transmission
};

struct capacity_tier {
    double upload = 0;
    double download = 0;
    double weight = 1;
};

struct topology_config {
    size_t peer_count = 0;
    size_t degree = 4;
    double campus_fraction = 0.8;
    double upload_capacity = 64 * 1024;
    double download_capacity = 128 * 1024;
    double server_upload = 512 * 1024;
    double access_capacity = 256 * 1024;
    bool homogeneous = true;
    std::vector<capacity_tier> tiers; // used when !homogeneous
};

struct topology {
    std::vector<peer_profile> nodes;         // index 0 is the server
    std::vector<std::vector<peer_id>> edges; // sorted adjacency lists
    double access_capacity = 0;
    size_t campus_count = 0;

    bool is_campus(peer_id id) const { return nodes[id].in_campus; }
    bool crosses_access(peer_id a, peer_id b) const {
        return is_campus(a) != is_campus(b);
    }
    bool has_edge(peer_id a, peer_id b) const;
    void add_edge(peer_id a, peer_id b);
    void drop_node_edges(peer_id id);
};

// interest score: dissimilar-content measure times the candidate's
// contribution. The dissimilarity is the Jaccard distance of the chunk
// bitmaps (symmetric difference over union, 0 when both are empty), gated
// on both peers being interested.
double interest_score(const peer_profile& requester, const peer_profile& candidate);

// greeting sweep in ascending id order; the first accepting neighbour's
// group wins, refusals fall through, loners end up in singleton groups.
// A full group (max_group_size members, 0 = unbounded) refuses further
// attach requests, which keeps the group count scaling with the number of
// interested peers.
std::vector<peer_group> form_groups(const std::vector<peer_profile>& campus_peers,
                                    double score_threshold, rng& r,
                                    size_t max_group_size = 0);

// highest upload capacity wins, ties broken by lowest id
peer_id elect_super_peer(const peer_group& g, const std::vector<peer_profile>& nodes);

topology generate_topology(const topology_config& cfg, rng& r);

struct churn_event {
    double time = 0;
    double lifetime = std::numeric_limits<double>::infinity();
};

// Poisson arrivals over [0, horizon); each carries its sampled lifetime
std::vector<churn_event> sample_churn_events(const churn_model& m, double horizon, rng& r);

double sample_lifetime(const churn_model& m, rng& r);

inline bool sample_link_failure(const link_failure_model& m, rng& r) {
    return m.p_fail > 0 && r.chance(m.p_fail);
}

} // namespace ncdist::overlay
