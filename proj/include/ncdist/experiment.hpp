#pragma once

#include <string>
#include <vector>

#include "ncdist/simulator.hpp"

namespace ncdist::experiment {

// One experiment = a sweep of simulator runs over protocols x peer counts x
// seeds, sharing everything else. Configs come from presets or JSON files;
// unknown keys are rejected and a seed is mandatory.
struct experiment_config {
    std::vector<sim::protocol_kind> protocols = {
        sim::protocol_kind::tnnc, sim::protocol_kind::fncm, sim::protocol_kind::dsnc};
    std::vector<size_t> peer_counts = {100};
    size_t seeds = 1; // runs per point, seeded seed, seed+1, ...
    uint64_t seed = 0;
    bool seed_set = false;
    sim::sim_config base; // shared simulation parameters
    std::string preset_name;
    std::string note; // what this experiment probes
    std::string out_dir;
    bool write_trace = false;
    bool dump_topology = false;

    void validate() const; // throws std::invalid_argument with the offending key

    static experiment_config preset(const std::string& name);
    static const std::vector<std::string>& preset_names();
    static experiment_config from_json_text(const std::string& text);
    static experiment_config from_file(const std::string& path);
};

struct run_row {
    std::string protocol;
    size_t peers = 0;
    uint64_t seed = 0;
    sim::metrics_report metrics;
};

// executes the sweep (independent runs may execute concurrently); rows come
// back ordered by (protocol, peers, seed) and stalled runs are flagged in
// the row rather than aborting the sweep
std::vector<run_row> run_experiment(const experiment_config& cfg);

// fixed schema: protocol,peers,seed,throughput,avg_finish,max_finish,
// failure_rate,mean_link_stress,overhead_bytes,access_link_bytes
std::string results_csv(const std::vector<run_row>& rows);

// JSON document describing the whole experiment (config echo + per-run
// metrics, including fields the CSV cannot carry)
std::string summary_json(const experiment_config& cfg, const std::vector<run_row>& rows);

// results.csv + summary.json (+ optional topology dumps), written atomically
void emit_results(const experiment_config& cfg, const std::vector<run_row>& rows,
                  const std::string& dir);

// per-protocol means, printable
std::string summary_table(const std::vector<run_row>& rows);

} // namespace ncdist::experiment
