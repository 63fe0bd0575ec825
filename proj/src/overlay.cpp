#include "ncdist/overlay.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace ncdist::overlay {

bool topology::has_edge(peer_id a, peer_id b) const {
    const auto& adj = edges[a];
    return std::binary_search(adj.begin(), adj.end(), b);
}

void topology::add_edge(peer_id a, peer_id b) {
    auto ins = [this](peer_id x, peer_id y) {
        auto& adj = edges[x];
        adj.insert(std::lower_bound(adj.begin(), adj.end(), y), y);
    };
    ins(a, b);
    ins(b, a);
}

void topology::drop_node_edges(peer_id id) {
    for (peer_id n : edges[id]) {
        auto& adj = edges[n];
        adj.erase(std::remove(adj.begin(), adj.end(), id), adj.end());
    }
    edges[id].clear();
}

double interest_score(const peer_profile& requester, const peer_profile& candidate) {
    if (!requester.interested || !candidate.interested) return 0;
    const auto& a = requester.content_bitmap;
    const auto& b = candidate.content_bitmap;
    size_t n = std::max(a.size(), b.size());
    size_t sym = 0, uni = 0;
    for (size_t i = 0; i < n; ++i) {
        bool ha = i < a.size() && a[i];
        bool hb = i < b.size() && b[i];
        if (ha || hb) ++uni;
        if (ha != hb) ++sym;
    }
    double dissimilarity = uni == 0 ? 0.0 : static_cast<double>(sym) / static_cast<double>(uni);
    return dissimilarity * static_cast<double>(candidate.contribution);
}

std::vector<peer_group> form_groups(const std::vector<peer_profile>& campus_peers,
                                    double score_threshold, rng&,
                                    size_t max_group_size) {
    std::vector<const peer_profile*> order;
    order.reserve(campus_peers.size());
    for (const auto& p : campus_peers) order.push_back(&p);
    std::sort(order.begin(), order.end(),
              [](const peer_profile* a, const peer_profile* b) { return a->id < b->id; });

    std::vector<peer_group> groups;
    std::unordered_map<peer_id, size_t> member_of;

    for (const peer_profile* p : order) {
        if (member_of.count(p->id)) continue;
        bool attached = false;
        for (const peer_profile* cand : order) {
            if (cand->id == p->id) continue;
            if (interest_score(*p, *cand) <= score_threshold) continue; // refuse
            auto it = member_of.find(cand->id);
            if (it != member_of.end()) {
                if (max_group_size > 0 && groups[it->second].members.size() >= max_group_size)
                    continue; // full group refuses
                groups[it->second].members.push_back(p->id);
                member_of[p->id] = it->second;
            } else {
                peer_group g;
                g.group_id = static_cast<uint32_t>(groups.size());
                g.members = {cand->id, p->id};
                member_of[cand->id] = groups.size();
                member_of[p->id] = groups.size();
                groups.push_back(std::move(g));
            }
            attached = true;
            break;
        }
        if (!attached) {
            peer_group g;
            g.group_id = static_cast<uint32_t>(groups.size());
            g.members = {p->id};
            member_of[p->id] = groups.size();
            groups.push_back(std::move(g));
        }
    }

    std::unordered_map<peer_id, const peer_profile*> by_id;
    for (const auto& p : campus_peers) by_id[p.id] = &p;
    for (auto& g : groups) {
        std::sort(g.members.begin(), g.members.end());
        peer_id best = g.members.front();
        for (peer_id m : g.members) {
            if (by_id[m]->upload_capacity > by_id[best]->upload_capacity) best = m;
        }
        g.super_peers = {best};
    }
    return groups;
}

peer_id elect_super_peer(const peer_group& g, const std::vector<peer_profile>& nodes) {
    if (g.members.empty()) throw std::invalid_argument("cannot elect in an empty group");
    peer_id best = g.members.front();
    for (peer_id m : g.members) {
        if (nodes[m].upload_capacity > nodes[best].upload_capacity ||
            (nodes[m].upload_capacity == nodes[best].upload_capacity && m < best))
            best = m;
    }
    return best;
}

topology generate_topology(const topology_config& cfg, rng& r) {
    if (cfg.peer_count < 1) throw std::invalid_argument("need at least one peer");
    if (cfg.degree < 1) throw std::invalid_argument("degree must be at least 1");
    if (cfg.campus_fraction < 0 || cfg.campus_fraction > 1)
        throw std::invalid_argument("campus_fraction must be in [0, 1]");
    if (!cfg.homogeneous && cfg.tiers.empty())
        throw std::invalid_argument("heterogeneous topology needs capacity tiers");
    if (cfg.upload_capacity <= 0 || cfg.download_capacity <= 0 || cfg.server_upload <= 0 ||
        cfg.access_capacity <= 0)
        throw std::invalid_argument("capacities must be positive");

    topology t;
    const size_t n = cfg.peer_count;
    t.nodes.resize(n + 1);
    t.edges.resize(n + 1);
    t.access_capacity = cfg.access_capacity;

    auto& server = t.nodes[server_id];
    server.id = server_id;
    server.upload_capacity = cfg.server_upload;
    server.download_capacity = cfg.server_upload;
    server.in_campus = false;
    server.interested = false;

    t.campus_count = static_cast<size_t>(cfg.campus_fraction * static_cast<double>(n) + 0.5);
    double tier_total = 0;
    for (const auto& tier : cfg.tiers) tier_total += tier.weight;

    for (size_t i = 1; i <= n; ++i) {
        auto& p = t.nodes[i];
        p.id = static_cast<peer_id>(i);
        p.in_campus = i <= t.campus_count;
        p.interested = true;
        if (cfg.homogeneous) {
            p.upload_capacity = cfg.upload_capacity;
            p.download_capacity = cfg.download_capacity;
        } else {
            double pick = r.unit() * tier_total;
            const capacity_tier* chosen = &cfg.tiers.back();
            for (const auto& tier : cfg.tiers) {
                if (pick < tier.weight) {
                    chosen = &tier;
                    break;
                }
                pick -= tier.weight;
            }
            p.upload_capacity = chosen->upload;
            p.download_capacity = chosen->download;
        }
    }

    // random connected peer mesh: a random backbone plus extra edges up to
    // a mean degree of cfg.degree
    for (size_t i = 2; i <= n; ++i)
        t.add_edge(static_cast<peer_id>(i), static_cast<peer_id>(1 + r.index(i - 1)));
    size_t target_edges = n * cfg.degree / 2;
    size_t have = n - 1;
    size_t attempts = 0;
    while (have < target_edges && attempts < 20 * target_edges + 100) {
        ++attempts;
        peer_id a = static_cast<peer_id>(1 + r.index(n));
        peer_id b = static_cast<peer_id>(1 + r.index(n));
        if (a == b || t.has_edge(a, b)) continue;
        t.add_edge(a, b);
        ++have;
    }

    // the server attaches to a handful of random peers
    size_t server_links = std::min(n, std::max<size_t>(cfg.degree, 1));
    while (t.edges[server_id].size() < server_links) {
        peer_id a = static_cast<peer_id>(1 + r.index(n));
        if (!t.has_edge(server_id, a)) t.add_edge(server_id, a);
    }
    return t;
}

std::vector<churn_event> sample_churn_events(const churn_model& m, double horizon, rng& r) {
    std::vector<churn_event> events;
    if (m.arrival_rate <= 0) return events;
    double t = r.expo(1.0 / m.arrival_rate);
    while (t < horizon) {
        events.push_back({t, sample_lifetime(m, r)});
        t += r.expo(1.0 / m.arrival_rate);
    }
    return events;
}

double sample_lifetime(const churn_model& m, rng& r) {
    if (m.lifetime_mean <= 0) return std::numeric_limits<double>::infinity();
    return r.expo(m.lifetime_mean);
}

} // namespace ncdist::overlay
