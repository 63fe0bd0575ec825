#include "ncdist/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "ncdist/overlay.hpp"

namespace ncdist::experiment {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void experiment_config::validate() const {
    if (!seed_set) throw std::invalid_argument("seed is required for reproducibility");
    if (protocols.empty()) throw std::invalid_argument("at least one protocol is required");
    if (peer_counts.empty()) throw std::invalid_argument("at least one peer count is required");
    for (size_t p : peer_counts)
        if (p < 1) throw std::invalid_argument("peer counts must be positive");
    if (seeds < 1) throw std::invalid_argument("seeds must be at least 1");
    if (base.content_size == 0 || base.chunk_size == 0)
        throw std::invalid_argument("content_size and chunk_size must be positive");
    if (base.group_size < 1 || base.chunks_per_segment < 1)
        throw std::invalid_argument("group_size and chunks_per_segment must be positive");
    if (base.field_bits < 1 || base.field_bits > 16)
        throw std::invalid_argument("field_bits must be in [1, 16]");
    if (base.campus_fraction < 0 || base.campus_fraction > 1)
        throw std::invalid_argument("campus_fraction must be in [0, 1]");
    if (base.p_fail < 0 || base.p_fail > 1)
        throw std::invalid_argument("p_fail must be in [0, 1]");
    if (base.horizon <= 0) throw std::invalid_argument("horizon must be positive");
}

const std::vector<std::string>& experiment_config::preset_names() {
    static const std::vector<std::string> names = {
        "fig4", "fig5", "fig6", "fig7", "fig8", "fig8-baseline", "fig9", "fig10"};
    return names;
}

experiment_config experiment_config::preset(const std::string& name) {
    experiment_config cfg;
    cfg.preset_name = name;

    auto dynamic_defaults = [&] {
        cfg.base.initial_fraction = 0.8;
        cfg.base.arrival_rate = 10.0;
        cfg.base.lifetime_mean = 120.0;
        cfg.base.tiers = {{48 * 1024, 96 * 1024, 1}, {80 * 1024, 160 * 1024, 1}};
    };

    if (name == "fig4") {
        cfg.peer_counts = {100, 200, 400};
        cfg.seeds = 10;
        cfg.note = "homogeneous average download time vs swarm size; probes the "
                   "20-25% claim as dsnc <= 0.9 x tnnc and dsnc <= fncm";
    } else if (name == "fig5") {
        cfg.peer_counts = {100, 200};
        cfg.seeds = 5;
        cfg.base.arrangement = sim::arrangement_kind::homogeneous_linkfail;
        cfg.base.p_fail = 0.05;
        cfg.note = "homogeneous with independent per-transmission link failures "
                   "(p=0.05); probes coded schemes degrading less than tnnc";
    } else if (name == "fig6") {
        cfg.peer_counts = {100, 200};
        cfg.seeds = 5;
        cfg.note = "link stress at 100+ peers; probes dsnc <= fncm <= tnnc mean "
                   "stress and the total/distinct definition";
    } else if (name == "fig7") {
        cfg.peer_counts = {100};
        cfg.seeds = 5;
        cfg.base.arrangement = sim::arrangement_kind::dynamic_stay;
        dynamic_defaults();
        cfg.note = "heterogeneous capacities with churn, peers stay seeded after "
                   "finishing; probes resilience to dynamic joins";
    } else if (name == "fig8") {
        cfg.peer_counts = {100};
        cfg.seeds = 5;
        cfg.base.arrangement = sim::arrangement_kind::dynamic_leave;
        cfg.base.tnnc_topology = sim::tnnc_mode::tree;
        dynamic_defaults();
        cfg.note = "heterogeneous capacities, peers leave after downloading; tnnc "
                   "runs its tree reading; probes tnnc degrading >= 1.5x more "
                   "than dsnc relative to fig8-baseline";
    } else if (name == "fig8-baseline") {
        cfg.peer_counts = {100};
        cfg.seeds = 5;
        cfg.base.tnnc_topology = sim::tnnc_mode::tree;
        cfg.note = "homogeneous reference for fig8 (same tree reading of tnnc); "
                   "the churn degradation ratio is measured against these rows";
    } else if (name == "fig9") {
        cfg.peer_counts = {100};
        cfg.seeds = 3;
        cfg.base.content_size = 192 * 1024;
        cfg.base.chunks_per_segment = 16;
        cfg.note = "per-segment share of the download time (six segments); the "
                   "shares live in summary.json as per_segment_progress";
    } else if (name == "fig10") {
        cfg.peer_counts = {60};
        cfg.seeds = 3;
        cfg.base.content_size = 128 * 1024;
        cfg.base.chunks_per_segment = 64;
        cfg.base.group_size = 8;
        cfg.note = "coding-vector overhead accounting: tnnc carries none, dsnc "
                   "pays group_size bytes per packet, fncm pays segment-width "
                   "bytes per packet";
    } else {
        throw std::invalid_argument("unknown preset '" + name + "'");
    }
    return cfg;
}

namespace {

std::vector<size_t> parse_peers(const json& v) {
    std::vector<size_t> out;
    auto one = [&](const json& x) {
        if (!x.is_number_integer() || x.get<int64_t>() < 1)
            throw std::invalid_argument("key 'peers': counts must be positive integers");
        out.push_back(x.get<size_t>());
    };
    if (v.is_array())
        for (const auto& x : v) one(x);
    else
        one(v);
    return out;
}

} // namespace

experiment_config experiment_config::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");

    experiment_config cfg;
    if (j.contains("preset")) {
        if (!j["preset"].is_string())
            throw std::invalid_argument("key 'preset': expected a string");
        cfg = preset(j["preset"].get<std::string>());
    }

    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "preset") {
                // handled above
            } else if (key == "protocols") {
                cfg.protocols.clear();
                for (const auto& p : value)
                    cfg.protocols.push_back(sim::protocol_from_string(p.get<std::string>()));
            } else if (key == "peers") {
                cfg.peer_counts = parse_peers(value);
            } else if (key == "seeds") {
                cfg.seeds = value.get<size_t>();
            } else if (key == "seed") {
                if (!value.is_number_integer() || value.get<int64_t>() < 0)
                    throw std::invalid_argument("must be a non-negative integer");
                cfg.seed = value.get<uint64_t>();
                cfg.seed_set = true;
            } else if (key == "content_size") {
                cfg.base.content_size = value.get<uint64_t>();
            } else if (key == "chunk_size") {
                cfg.base.chunk_size = value.get<uint64_t>();
            } else if (key == "chunks_per_segment") {
                cfg.base.chunks_per_segment = value.get<size_t>();
            } else if (key == "group_size") {
                cfg.base.group_size = value.get<size_t>();
            } else if (key == "field_bits") {
                cfg.base.field_bits = value.get<unsigned>();
            } else if (key == "arrangement") {
                cfg.base.arrangement =
                    sim::arrangement_from_string(value.get<std::string>());
            } else if (key == "p_fail") {
                cfg.base.p_fail = value.get<double>();
            } else if (key == "arrival_rate") {
                cfg.base.arrival_rate = value.get<double>();
            } else if (key == "lifetime_mean") {
                cfg.base.lifetime_mean = value.get<double>();
            } else if (key == "initial_fraction") {
                cfg.base.initial_fraction = value.get<double>();
            } else if (key == "degree") {
                cfg.base.degree = value.get<size_t>();
            } else if (key == "campus_fraction") {
                cfg.base.campus_fraction = value.get<double>();
            } else if (key == "upload_capacity") {
                cfg.base.upload_capacity = value.get<double>();
            } else if (key == "download_capacity") {
                cfg.base.download_capacity = value.get<double>();
            } else if (key == "server_upload") {
                cfg.base.server_upload = value.get<double>();
            } else if (key == "access_capacity") {
                cfg.base.access_capacity = value.get<double>();
            } else if (key == "tiers") {
                cfg.base.tiers.clear();
                for (const auto& t : value) {
                    if (!t.is_array() || t.size() != 3)
                        throw std::invalid_argument("expected [upload, download, weight]");
                    cfg.base.tiers.push_back(
                        {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()});
                }
            } else if (key == "horizon") {
                cfg.base.horizon = value.get<double>();
            } else if (key == "retry_cap") {
                cfg.base.retry_cap = value.get<size_t>();
            } else if (key == "upload_slots") {
                cfg.base.upload_slots = value.get<size_t>();
            } else if (key == "score_threshold") {
                cfg.base.score_threshold = value.get<double>();
            } else if (key == "similarity_group_cap") {
                cfg.base.similarity_group_cap = value.get<size_t>();
            } else if (key == "tnnc_mode") {
                std::string m = value.get<std::string>();
                if (m == "mesh") cfg.base.tnnc_topology = sim::tnnc_mode::mesh;
                else if (m == "tree") cfg.base.tnnc_topology = sim::tnnc_mode::tree;
                else throw std::invalid_argument("expected 'mesh' or 'tree'");
            } else if (key == "tree_repair_delay") {
                cfg.base.tree_repair_delay = value.get<double>();
            } else if (key == "out") {
                cfg.out_dir = value.get<std::string>();
            } else if (key == "trace") {
                cfg.write_trace = value.get<bool>();
            } else if (key == "dump_topology") {
                cfg.dump_topology = value.get<bool>();
            } else {
                throw std::invalid_argument("unknown key '" + key + "'");
            }
        } catch (const json::exception& e) {
            throw std::invalid_argument("key '" + key + "': " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

experiment_config experiment_config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::vector<run_row> run_experiment(const experiment_config& cfg) {
    cfg.validate();

    struct job {
        sim::sim_config sc;
        std::string protocol;
        size_t peers;
        uint64_t seed;
    };
    std::vector<job> jobs;
    for (auto proto : cfg.protocols) {
        for (size_t peers : cfg.peer_counts) {
            for (size_t k = 0; k < cfg.seeds; ++k) {
                job jb;
                jb.sc = cfg.base;
                jb.sc.protocol = proto;
                jb.sc.peer_count = peers;
                jb.sc.seed = cfg.seed + k;
                jb.protocol = sim::to_string(proto);
                jb.peers = peers;
                jb.seed = cfg.seed + k;
                if (cfg.write_trace && !cfg.out_dir.empty())
                    jb.sc.trace_path = (fs::path(cfg.out_dir) /
                                        ("trace_" + jb.protocol + "_" +
                                         std::to_string(peers) + "_" +
                                         std::to_string(jb.seed) + ".txt"))
                                           .string();
                jobs.push_back(std::move(jb));
            }
        }
    }

    if (cfg.write_trace && !cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

    // independent runs; a bounded pool keeps sweeps quick and the row order
    // (and therefore all emitted bytes) stays fixed
    size_t workers = std::max<size_t>(1, std::thread::hardware_concurrency());
    std::vector<run_row> rows(jobs.size());
    std::vector<std::future<void>> inflight;
    auto drain_one = [&] {
        inflight.front().get();
        inflight.erase(inflight.begin());
    };
    for (size_t i = 0; i < jobs.size(); ++i) {
        if (inflight.size() >= workers) drain_one();
        inflight.push_back(std::async(std::launch::async, [&rows, &jobs, i] {
            run_row row;
            row.protocol = jobs[i].protocol;
            row.peers = jobs[i].peers;
            row.seed = jobs[i].seed;
            row.metrics = sim::run(jobs[i].sc);
            rows[i] = std::move(row);
        }));
    }
    while (!inflight.empty()) drain_one();
    return rows;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

std::string results_csv(const std::vector<run_row>& rows) {
    std::string out = "protocol,peers,seed,throughput,avg_finish,max_finish,"
                      "failure_rate,mean_link_stress,overhead_bytes,access_link_bytes\n";
    for (const auto& r : rows) {
        out += r.protocol;
        out += ',' + std::to_string(r.peers);
        out += ',' + std::to_string(r.seed);
        out += ',' + fmt(r.metrics.throughput);
        out += ',' + fmt(r.metrics.avg_finish_time);
        out += ',' + fmt(r.metrics.max_finish_time);
        out += ',' + fmt(r.metrics.failure_rate);
        out += ',' + fmt(r.metrics.mean_link_stress);
        out += ',' + std::to_string(r.metrics.message_overhead);
        out += ',' + std::to_string(r.metrics.access_link_bytes);
        out += '\n';
    }
    return out;
}

std::string summary_json(const experiment_config& cfg, const std::vector<run_row>& rows) {
    json doc;
    doc["preset"] = cfg.preset_name;
    doc["note"] = cfg.note;
    json c;
    c["seed"] = cfg.seed;
    c["seeds"] = cfg.seeds;
    json protos = json::array();
    for (auto p : cfg.protocols) protos.push_back(sim::to_string(p));
    c["protocols"] = protos;
    c["peers"] = cfg.peer_counts;
    c["content_size"] = cfg.base.content_size;
    c["chunk_size"] = cfg.base.chunk_size;
    c["chunks_per_segment"] = cfg.base.chunks_per_segment;
    c["group_size"] = cfg.base.group_size;
    c["field_bits"] = cfg.base.field_bits;
    c["arrangement"] = sim::to_string(cfg.base.arrangement);
    c["p_fail"] = cfg.base.p_fail;
    c["arrival_rate"] = cfg.base.arrival_rate;
    c["lifetime_mean"] = cfg.base.lifetime_mean;
    c["initial_fraction"] = cfg.base.initial_fraction;
    c["degree"] = cfg.base.degree;
    c["campus_fraction"] = cfg.base.campus_fraction;
    c["upload_capacity"] = cfg.base.upload_capacity;
    c["download_capacity"] = cfg.base.download_capacity;
    c["server_upload"] = cfg.base.server_upload;
    c["access_capacity"] = cfg.base.access_capacity;
    c["horizon"] = cfg.base.horizon;
    c["retry_cap"] = cfg.base.retry_cap;
    c["upload_slots"] = cfg.base.upload_slots;
    c["score_threshold"] = cfg.base.score_threshold;
    c["similarity_group_cap"] = cfg.base.similarity_group_cap;
    c["tnnc_mode"] = cfg.base.tnnc_topology == sim::tnnc_mode::tree ? "tree" : "mesh";
    c["tree_repair_delay"] = cfg.base.tree_repair_delay;
    doc["config"] = c;

    json runs = json::array();
    for (const auto& r : rows) {
        json m;
        m["protocol"] = r.protocol;
        m["peers"] = r.peers;
        m["seed"] = r.seed;
        m["throughput"] = r.metrics.throughput;
        m["avg_finish"] = r.metrics.avg_finish_time;
        m["max_finish"] = r.metrics.max_finish_time;
        m["failure_rate"] = r.metrics.failure_rate;
        m["mean_link_stress"] = r.metrics.mean_link_stress;
        m["overhead_bytes"] = r.metrics.message_overhead;
        m["access_link_bytes"] = r.metrics.access_link_bytes;
        m["uploaded_bytes"] = r.metrics.total_uploaded_bytes;
        m["coded_packets"] = r.metrics.coded_packets_sent;
        m["non_innovative"] = r.metrics.non_innovative_receptions;
        m["finished"] = r.metrics.finished_peers;
        m["failed"] = r.metrics.failed_peers;
        m["interested"] = r.metrics.total_interested;
        m["groups"] = r.metrics.group_count;
        m["makespan"] = r.metrics.makespan;
        m["per_segment_progress"] = r.metrics.per_segment_progress;
        m["horizon_exceeded"] = r.metrics.horizon_exceeded;
        m["stalled"] = r.metrics.stalled;
        if (r.metrics.stalled) m["stall_diagnostic"] = r.metrics.stall_diagnostic;
        runs.push_back(std::move(m));
    }
    doc["runs"] = runs;
    return doc.dump(2) + "\n";
}

namespace {

void write_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

} // namespace

void emit_results(const experiment_config& cfg, const std::vector<run_row>& rows,
                  const std::string& dir) {
    if (rows.empty()) throw std::invalid_argument("nothing to emit");
    fs::create_directories(dir);
    write_atomic(fs::path(dir) / "results.csv", results_csv(rows));
    write_atomic(fs::path(dir) / "summary.json", summary_json(cfg, rows));

    if (cfg.dump_topology) {
        // edge list `peer_id peer_id capacity`; topology depends only on
        // (seed, peers), never on the protocol
        for (size_t peers : cfg.peer_counts) {
            for (size_t k = 0; k < cfg.seeds; ++k) {
                overlay::topology_config tc;
                tc.peer_count = peers;
                tc.degree = cfg.base.degree;
                tc.campus_fraction = cfg.base.campus_fraction;
                tc.upload_capacity = cfg.base.upload_capacity;
                tc.download_capacity = cfg.base.download_capacity;
                tc.server_upload = cfg.base.server_upload;
                tc.access_capacity = cfg.base.access_capacity;
                rng topo_rng = rng(cfg.seed + k).fork(0xA0);
                auto topo = overlay::generate_topology(tc, topo_rng);
                std::string text;
                for (size_t a = 0; a < topo.edges.size(); ++a)
                    for (auto b : topo.edges[a])
                        if (a < b) {
                            char line[96];
                            std::snprintf(line, sizeof line, "%zu %u %.0f\n", a, b,
                                          topo.nodes[a].upload_capacity);
                            text += line;
                        }
                write_atomic(fs::path(dir) / ("topology_" + std::to_string(peers) + "_" +
                                              std::to_string(cfg.seed + k) + ".txt"),
                             text);
            }
        }
    }
}

std::string summary_table(const std::vector<run_row>& rows) {
    struct acc {
        double finish = 0, tput = 0, stress = 0, fail = 0, access = 0;
        size_t n = 0;
    };
    std::vector<std::pair<std::string, acc>> byproto;
    for (const auto& r : rows) {
        auto it = std::find_if(byproto.begin(), byproto.end(),
                               [&](const auto& kv) { return kv.first == r.protocol; });
        if (it == byproto.end()) {
            byproto.push_back({r.protocol, {}});
            it = byproto.end() - 1;
        }
        it->second.finish += r.metrics.avg_finish_time;
        it->second.tput += r.metrics.throughput;
        it->second.stress += r.metrics.mean_link_stress;
        it->second.fail += r.metrics.failure_rate;
        it->second.access += static_cast<double>(r.metrics.access_link_bytes);
        it->second.n += 1;
    }
    char line[160];
    std::string out;
    std::snprintf(line, sizeof line, "%-8s %6s %12s %12s %10s %9s %14s\n", "protocol",
                  "runs", "avg_finish", "throughput", "stress", "fail", "access_bytes");
    out += line;
    for (const auto& [name, a] : byproto) {
        double n = static_cast<double>(a.n);
        std::snprintf(line, sizeof line, "%-8s %6zu %12.3f %12.0f %10.4f %9.4f %14.0f\n",
                      name.c_str(), a.n, a.finish / n, a.tput / n, a.stress / n, a.fail / n,
                      a.access / n);
        out += line;
    }
    return out;
}

} // namespace ncdist::experiment
