#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ncdist/coding.hpp"
#include "ncdist/coupon.hpp"
#include "ncdist/experiment.hpp"
#include "ncdist/gf.hpp"
#include "ncdist/simulator.hpp"

using namespace ncdist;

namespace {

int cmd_simulate(const std::string& preset, const std::string& config_file,
                 bool seed_given, uint64_t seed, const std::vector<size_t>& peers,
                 size_t seeds, const std::string& out, bool trace, bool dump_topology) {
    experiment::experiment_config cfg;
    if (!preset.empty())
        cfg = experiment::experiment_config::preset(preset);
    else if (!config_file.empty())
        cfg = experiment::experiment_config::from_file(config_file);
    if (seed_given) {
        cfg.seed = seed;
        cfg.seed_set = true;
    }
    if (!peers.empty()) cfg.peer_counts = peers;
    if (seeds > 0) cfg.seeds = seeds;
    if (!out.empty()) cfg.out_dir = out;
    cfg.write_trace = cfg.write_trace || trace;
    cfg.dump_topology = cfg.dump_topology || dump_topology;
    cfg.validate();

    if (!cfg.preset_name.empty())
        std::printf("preset %s: %s\n", cfg.preset_name.c_str(), cfg.note.c_str());
    auto rows = experiment::run_experiment(cfg);
    std::printf("%s", experiment::summary_table(rows).c_str());
    size_t stalled = 0;
    for (const auto& r : rows)
        if (r.metrics.stalled) ++stalled;
    if (stalled) std::printf("flagged rows: %zu stalled (see summary.json)\n", stalled);
    if (!cfg.out_dir.empty()) {
        experiment::emit_results(cfg, rows, cfg.out_dir);
        std::printf("wrote %s/results.csv and summary.json\n", cfg.out_dir.c_str());
    }
    return 0;
}

int cmd_coupon(size_t s, uint64_t q, size_t trials, uint64_t seed) {
    coupon::coupon_model model{s, q};
    std::printf("coupon collection, s=%zu, coded draws over GF(%llu)^s\n", s,
                static_cast<unsigned long long>(q));
    std::printf("%4s %14s %14s %14s %14s\n", "i", "classic E[N]", "classic MC",
                "coded E[N]", "coded MC");
    std::vector<size_t> marks = {1, s / 4, s / 2, (3 * s) / 4, s};
    marks.erase(std::remove_if(marks.begin(), marks.end(), [](size_t i) { return i < 1; }),
                marks.end());
    std::sort(marks.begin(), marks.end());
    marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
    for (size_t i : marks) {
        rng rc(seed), rk(seed + 1);
        auto classic = coupon::monte_carlo_classic(s, i, trials, rc);
        auto coded = coupon::monte_carlo_coded(model, i, trials, rk);
        std::printf("%4zu %14.4f %14.4f %14.4f %14.4f\n", i, coupon::expected_sample(i, s),
                    classic.mean, coupon::coded_expected_sample(i, model), coded.mean);
    }
    return 0;
}

int cmd_selftest(uint64_t seed) {
    size_t failures = 0;
    auto report = [&](const char* name, bool ok) {
        std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", name);
        if (!ok) ++failures;
    };

    // field axioms, exhaustive at q = 4
    {
        gf::field f(gf::field_spec::gf16());
        bool ok = true;
        for (uint32_t a = 0; a < 16 && ok; ++a)
            for (uint32_t b = 0; b < 16 && ok; ++b)
                for (uint32_t c = 0; c < 16 && ok; ++c)
                    ok = f.mul(f.mul(a, b), c) == f.mul(a, f.mul(b, c)) &&
                         f.mul(a, f.add(b, c)) == f.add(f.mul(a, b), f.mul(a, c)) &&
                         f.mul(a, b) == f.mul(b, a);
        for (uint32_t a = 1; a < 16 && ok; ++a) ok = f.mul(a, f.inv(a)) == 1;
        report("field axioms GF(16)", ok);
    }

    // any-n-subset independence of the vector pool for small fields
    {
        bool ok = true;
        for (unsigned q = 2; q <= 3 && ok; ++q) {
            gf::field f({q, gf::find_irreducible(q)});
            for (size_t n = 2; n <= 3 && ok; ++n) {
                auto pool = coding::coding_vector_pool::build(n, f);
                const auto& u = pool.universe();
                for (size_t a = 0; a < u.size() && ok; ++a)
                    for (size_t b = a + 1; b < u.size() && ok; ++b)
                        for (size_t c = b + 1; c < u.size() && ok && n == 3; ++c) {
                            coding::decoder_state span(0, n, 0, f);
                            span.insert_vector(u[a]);
                            span.insert_vector(u[b]);
                            span.insert_vector(u[c]);
                            ok = span.rank() == 3;
                        }
            }
        }
        report("vector pool independence", ok);
    }

    // randomized encode/decode round-trips
    {
        gf::field f(gf::field_spec::gf256());
        rng r(seed);
        bool ok = true;
        for (int t = 0; t < 200 && ok; ++t) {
            size_t n = 1 + r.index(12);
            size_t bytes = 1 + r.index(256);
            std::vector<coding::payload> native;
            for (size_t i = 0; i < n; ++i) {
                coding::payload p(bytes);
                for (auto& b : p) b = static_cast<uint8_t>(r.below(256));
                native.push_back(std::move(p));
            }
            auto groups = coding::form_packet_groups(native, n);
            auto pool = coding::coding_vector_pool::build(n, f);
            coding::decoder_state st(groups[0].group_id, n, bytes, f);
            while (!st.complete()) st.insert(coding::encode(groups[0], pool.select(r), f));
            ok = st.solve() == groups[0].native_packets;
        }
        report("codec round-trips", ok);
    }

    // coupon closed forms vs monte carlo
    {
        rng r(seed + 7);
        auto mc = coupon::monte_carlo_classic(10, 10, 20000, r);
        double expect = coupon::expected_sample(10, 10);
        bool ok = std::abs(mc.mean - expect) < 3 * mc.std_error + 1e-9;
        rng rc(seed + 8);
        auto cc = coupon::monte_carlo_coded({10, 16}, 10, 20000, rc);
        double cexpect = coupon::coded_expected_sample(10, {10, 16});
        ok = ok && std::abs(cc.mean - cexpect) < 3 * cc.std_error + 1e-9;
        report("coupon closed forms vs monte carlo", ok);
    }

    // simulator determinism
    {
        sim::sim_config cfg;
        cfg.peer_count = 24;
        cfg.seed = seed;
        experiment::experiment_config ec;
        ec.seed = seed;
        ec.seed_set = true;
        ec.peer_counts = {24};
        ec.base = cfg;
        auto a = experiment::results_csv(experiment::run_experiment(ec));
        auto b = experiment::results_csv(experiment::run_experiment(ec));
        report("simulation determinism", a == b);
    }

    std::printf("%s\n", failures == 0 ? "selftest passed" : "selftest FAILED");
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"network-coded P2P content distribution simulator"};
    app.require_subcommand(1);

    // simulate
    auto* simc = app.add_subcommand("simulate", "run a simulation experiment");
    std::string preset, config_file, out;
    std::vector<size_t> peers;
    size_t seeds = 0;
    uint64_t seed = 0;
    bool trace = false, dump_topology = false;
    auto* preset_opt =
        simc->add_option("--preset", preset,
                         "built-in experiment (" +
                             [] {
                                 std::string s;
                                 for (const auto& n :
                                      experiment::experiment_config::preset_names())
                                     s += (s.empty() ? "" : ", ") + n;
                                 return s;
                             }() +
                             ")");
    auto* config_opt = simc->add_option("--config", config_file, "JSON config file");
    preset_opt->excludes(config_opt);
    config_opt->excludes(preset_opt);
    auto* seed_opt = simc->add_option("--seed", seed, "base seed (required)");
    simc->add_option("--peers", peers, "override the peer-count sweep");
    simc->add_option("--seeds", seeds, "override the number of seeds per point");
    simc->add_option("--out", out, "output directory for results.csv + summary.json");
    simc->add_flag("--trace", trace, "write per-run transfer traces");
    simc->add_flag("--dump-topology", dump_topology, "write per-run edge lists");

    // coupon
    auto* coup = app.add_subcommand("coupon", "coupon-collection closed forms vs monte carlo");
    size_t cs = 50, trials = 100000;
    uint64_t cq = 256, cseed = 1;
    coup->add_option("--s", cs, "coupon universe size")->check(CLI::PositiveNumber);
    coup->add_option("--q", cq, "field order for the coded collector (power of two)");
    coup->add_option("--trials", trials, "monte carlo trials")->check(CLI::PositiveNumber);
    coup->add_option("--seed", cseed, "rng seed");

    // selftest
    auto* self = app.add_subcommand("selftest", "run the built-in invariant checks");
    uint64_t sseed = 1;
    self->add_option("--seed", sseed, "rng seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simc->parsed())
            return cmd_simulate(preset, config_file, seed_opt->count() > 0, seed, peers,
                                seeds, out, trace, dump_topology);
        if (coup->parsed()) return cmd_coupon(cs, cq, trials, cseed);
        if (self->parsed()) return cmd_selftest(sseed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
