// Acceptance suite: every criterion prints one pass/fail line and the
// process exits non-zero if any of them failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ncdist/coding.hpp"
#include "ncdist/coupon.hpp"
#include "ncdist/experiment.hpp"
#include "ncdist/gf.hpp"
#include "ncdist/simulator.hpp"
#include "oracles.hpp"

using namespace ncdist;
using experiment::experiment_config;
using experiment::run_row;

namespace {

int g_failures = 0;

double now_seconds() {
    using clock = std::chrono::steady_clock;
    static const auto start = clock::now();
    return std::chrono::duration<double>(clock::now() - start).count();
}

void criterion(int id, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", id, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmtd(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

constexpr uint64_t base_seed = 2026;

std::map<std::string, std::vector<run_row>> g_preset_rows;

const std::vector<run_row>& preset_rows(const std::string& name) {
    auto it = g_preset_rows.find(name);
    if (it != g_preset_rows.end()) return it->second;
    auto cfg = experiment_config::preset(name);
    cfg.seed = base_seed;
    cfg.seed_set = true;
    auto rows = experiment::run_experiment(cfg);
    return g_preset_rows.emplace(name, std::move(rows)).first->second;
}

double mean_metric(const std::vector<run_row>& rows, const std::string& proto,
                   const std::function<double(const sim::metrics_report&)>& pick) {
    double sum = 0;
    size_t n = 0;
    for (const auto& r : rows) {
        if (r.protocol != proto) continue;
        sum += pick(r.metrics);
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0;
}

// ---- criteria -------------------------------------------------------------------

void c1_coupon_classic() {
    double t0 = now_seconds();
    rng r(base_seed);
    auto mc = coupon::monte_carlo_classic(50, 50, 10000, r);
    double expect = coupon::expected_sample(50, 50);
    double rel = std::abs(mc.mean - expect) / expect;
    double elapsed = now_seconds() - t0;
    criterion(1, "classic coupon monte carlo matches 50*H50", rel < 0.02 && elapsed < 5.0,
              "mean " + fmtd(mc.mean) + " vs " + fmtd(expect) + ", rel err " + fmtd(rel) +
                  ", " + fmtd(elapsed) + " s");
}

void c2_coupon_coded() {
    double t0 = now_seconds();
    coupon::coupon_model m{16, 2};
    rng rc(base_seed + 1), rk(base_seed + 2);
    auto coded = coupon::monte_carlo_coded(m, 16, 10000, rc);
    double expect = coupon::coded_expected_sample(16, m);
    auto classic = coupon::monte_carlo_classic(16, 16, 10000, rk);
    double rel = std::abs(coded.mean - expect) / expect;
    double elapsed = now_seconds() - t0;
    criterion(2, "coded coupon monte carlo matches the waiting-time sum and beats classic",
              rel < 0.02 && coded.mean < classic.mean && elapsed < 10.0,
              "coded " + fmtd(coded.mean) + " vs " + fmtd(expect) + " (rel " + fmtd(rel) +
                  "), classic " + fmtd(classic.mean) + ", " + fmtd(elapsed) + " s");
}

void c3_large_field_limit() {
    coupon::coupon_model m{8, 1ull << 16};
    double v = coupon::coded_expected_sample(8, m);
    criterion(3, "coded expected sample approaches s for q = 2^16",
              std::abs(v - 8.0) < 1e-3, "value " + fmtd(v));
}

void c4_field_correctness() {
    bool ok = true;
    std::string detail;
    // exhaustive axioms for q <= 4
    for (unsigned q = 1; q <= 4 && ok; ++q) {
        gf::field f({q, gf::find_irreducible(q)});
        uint32_t n = f.order();
        for (uint32_t a = 0; a < n && ok; ++a)
            for (uint32_t b = 0; b < n && ok; ++b) {
                if (f.mul(a, b) != f.mul(b, a)) ok = false;
                for (uint32_t c = 0; c < n && ok; ++c) {
                    if (f.mul(f.mul(a, b), c) != f.mul(a, f.mul(b, c))) ok = false;
                    if (f.mul(a, f.add(b, c)) != f.add(f.mul(a, b), f.mul(a, c))) ok = false;
                }
            }
        for (uint32_t a = 1; a < n && ok; ++a)
            if (f.mul(a, f.inv(a)) != 1) ok = false;
        if (!ok) detail = "axiom failure at q=" + std::to_string(q);
    }
    // 10^5 random triples at q = 8
    gf::field f8(gf::field_spec::gf256());
    rng r(base_seed + 3);
    for (int i = 0; i < 100000 && ok; ++i) {
        uint16_t a = static_cast<uint16_t>(r.below(256));
        uint16_t b = static_cast<uint16_t>(r.below(256));
        uint16_t c = static_cast<uint16_t>(r.below(256));
        if (f8.mul(f8.mul(a, b), c) != f8.mul(a, f8.mul(b, c)) ||
            f8.mul(a, f8.add(b, c)) != f8.add(f8.mul(a, b), f8.mul(a, c))) {
            ok = false;
            detail = "random triple failure at q=8";
        }
    }
    // table vs shift-and-reduce reference, exhaustive at q = 8
    for (uint32_t a = 0; a < 256 && ok; ++a)
        for (uint32_t b = 0; b < 256 && ok; ++b)
            if (f8.mul(static_cast<uint16_t>(a), static_cast<uint16_t>(b)) !=
                oracle::gf_mul_ref(static_cast<uint16_t>(a), static_cast<uint16_t>(b), 8,
                                   0x11B)) {
                ok = false;
                detail = "table/reference mismatch";
            }
    criterion(4, "field axioms and table-vs-reference multiply",
              ok, ok ? "exhaustive q<=4, 1e5 triples and 65536 pairs at q=8" : detail);
}

void c5_mds_pool() {
    bool ok = true;
    std::string detail = "all n-subsets independent for n<=4, 2^q<=16";
    size_t checked = 0;
    for (unsigned q = 1; q <= 4 && ok; ++q) {
        gf::field f({q, gf::find_irreducible(q)});
        for (size_t n = 1; n <= 4 && ok; ++n) {
            if (f.order() < n) continue;
            auto pool = coding::coding_vector_pool::build(n, f);
            const auto& u = pool.universe();
            std::vector<size_t> idx(n);
            std::function<bool(size_t, size_t)> rec = [&](size_t start, size_t k) {
                if (k == n) {
                    std::vector<coding::coding_vector> sub;
                    for (size_t i : idx) sub.push_back(u[i]);
                    ++checked;
                    return oracle::independent_ref(sub, f);
                }
                for (size_t i = start; i < u.size(); ++i) {
                    idx[k] = i;
                    if (!rec(i + 1, k + 1)) return false;
                }
                return true;
            };
            if (!rec(0, 0)) {
                ok = false;
                detail = "dependent subset at q=" + std::to_string(q) +
                         ", n=" + std::to_string(n);
            }
        }
    }
    criterion(5, "vector pool is MDS", ok, detail + ", " + std::to_string(checked) + " subsets");
}

void c6_roundtrip() {
    double t0 = now_seconds();
    gf::field f(gf::field_spec::gf256());
    rng r(base_seed + 4);
    bool ok = true;
    for (int t = 0; t < 1000 && ok; ++t) {
        size_t n = 1 + r.index(64);
        size_t bytes = 1 + r.index(4096);
        std::vector<coding::payload> native;
        for (size_t i = 0; i < n; ++i) {
            coding::payload p(bytes);
            for (auto& b : p) b = static_cast<uint8_t>(r.below(256));
            native.push_back(std::move(p));
        }
        auto group = coding::form_packet_groups(native, n)[0];
        auto pool = coding::coding_vector_pool::build(n, f);
        coding::decoder_state st(group.group_id, n, bytes, f);
        while (!st.complete()) {
            if (!st.insert(coding::encode(group, pool.select(r), f))) ok = false;
        }
        if (st.solve() != group.native_packets) ok = false;
    }
    criterion(6, "1000 randomized encode/decode round-trips are bit-exact", ok,
              fmtd(now_seconds() - t0) + " s");
}

void c7_innovation_guarantee() {
    double t0 = now_seconds();
    size_t dsnc_bad = 0, fncm_positive = 0;
    for (uint64_t k = 0; k < 100; ++k) {
        sim::sim_config d;
        d.protocol = sim::protocol_kind::dsnc;
        d.peer_count = 50;
        d.seed = base_seed + k;
        auto rd = sim::run(d);
        if (rd.non_innovative_receptions != 0 || rd.stalled) ++dsnc_bad;

        sim::sim_config fcfg;
        fcfg.protocol = sim::protocol_kind::fncm;
        fcfg.field_bits = 1; // field order 2
        fcfg.peer_count = 50;
        fcfg.seed = base_seed + k;
        auto rf = sim::run(fcfg);
        if (rf.non_innovative_receptions > 0) ++fncm_positive;
    }
    criterion(7, "dsnc sends only innovative packets; fncm at GF(2) does not",
              dsnc_bad == 0 && fncm_positive >= 90,
              "dsnc violations " + std::to_string(dsnc_bad) + "/100, fncm positive " +
                  std::to_string(fncm_positive) + "/100, " + fmtd(now_seconds() - t0) + " s");
}

void c8_fig4_direction() {
    double t0 = now_seconds();
    const auto& rows = preset_rows("fig4");
    auto avg = [&](const char* p) {
        return mean_metric(rows, p, [](const sim::metrics_report& m) {
            return m.avg_finish_time;
        });
    };
    double tnnc = avg("tnnc"), fncm = avg("fncm"), dsnc = avg("dsnc");
    double elapsed = now_seconds() - t0;
    criterion(8, "fig4: dsnc finishes at most 0.9x tnnc and no later than fncm",
              dsnc <= 0.9 * tnnc && dsnc <= fncm && elapsed < 300.0,
              "dsnc " + fmtd(dsnc) + ", fncm " + fmtd(fncm) + ", tnnc " + fmtd(tnnc) +
                  " (ratio " + fmtd(dsnc / tnnc) + "), " + fmtd(elapsed) + " s");
}

void c9_fig8_direction() {
    const auto& churn = preset_rows("fig8");
    const auto& still = preset_rows("fig8-baseline");
    auto avg = [&](const std::vector<run_row>& rows, const char* p) {
        return mean_metric(rows, p, [](const sim::metrics_report& m) {
            return m.avg_finish_time;
        });
    };
    double tnnc_inc = avg(churn, "tnnc") / avg(still, "tnnc") - 1.0;
    double dsnc_inc = avg(churn, "dsnc") / avg(still, "dsnc") - 1.0;
    bool ok = tnnc_inc > 0 && tnnc_inc >= 1.5 * std::max(dsnc_inc, 0.0);
    criterion(9, "fig8: leave-churn hurts tnnc at least 1.5x more than dsnc", ok,
              "tnnc +" + fmtd(100 * tnnc_inc) + "%, dsnc +" + fmtd(100 * dsnc_inc) + "%");
}

void c10_fig6_stress() {
    const auto& rows = preset_rows("fig6");
    auto stress = [&](const char* p) {
        return mean_metric(rows, p, [](const sim::metrics_report& m) {
            return m.mean_link_stress;
        });
    };
    double tnnc = stress("tnnc"), fncm = stress("fncm"), dsnc = stress("dsnc");
    bool exact = sim::link_stress(3, 1) == 3.0;
    bool ok = dsnc <= fncm + 1e-9 && fncm <= tnnc + 1e-9 && exact;
    criterion(10, "fig6: mean link stress orders dsnc <= fncm <= tnnc; total/distinct exact",
              ok,
              "dsnc " + fmtd(dsnc) + ", fncm " + fmtd(fncm) + ", tnnc " + fmtd(tnnc) +
                  ", stress(3 copies of 1) = " + fmtd(sim::link_stress(3, 1)));
}

void c11_fig10_overhead() {
    const auto& rows = preset_rows("fig10");
    bool ok = true;
    std::string detail;
    auto cfg = experiment_config::preset("fig10");
    uint64_t gs = cfg.base.group_size;
    uint64_t cps = cfg.base.chunks_per_segment;
    for (const auto& r : rows) {
        uint64_t per_packet = r.metrics.coded_packets_sent
                                  ? r.metrics.message_overhead / r.metrics.coded_packets_sent
                                  : 0;
        if (r.protocol == "tnnc" && r.metrics.message_overhead != 0) ok = false;
        if (r.protocol == "dsnc" &&
            (per_packet != gs || r.metrics.message_overhead !=
                                     r.metrics.coded_packets_sent * gs))
            ok = false;
        if (r.protocol == "fncm" &&
            (per_packet != cps || r.metrics.message_overhead !=
                                      r.metrics.coded_packets_sent * cps))
            ok = false;
    }
    ok = ok && gs < cps;
    criterion(11, "fig10: per-packet overhead is group_size < segment width; tnnc pays zero",
              ok,
              "dsnc " + std::to_string(gs) + " B/packet, fncm " + std::to_string(cps) +
                  " B/packet");
}

void c12_determinism() {
    double t0 = now_seconds();
    bool ok = true;
    std::string bad;
    for (const auto& name : experiment_config::preset_names()) {
        const auto& first = preset_rows(name);
        auto cfg = experiment_config::preset(name);
        cfg.seed = base_seed;
        cfg.seed_set = true;
        auto second = experiment::run_experiment(cfg);
        if (experiment::results_csv(first) != experiment::results_csv(second)) {
            ok = false;
            bad += (bad.empty() ? "" : ", ") + name;
        }
    }
    criterion(12, "every preset is byte-identical across repeated seeded runs", ok,
              ok ? "8 presets, " + fmtd(now_seconds() - t0) + " s" : "mismatch: " + bad);
}

void c13_campus_locality() {
    const auto& rows = preset_rows("fig6");
    bool ok = true;
    std::string detail;
    size_t pairs = 0;
    for (const auto& d : rows) {
        if (d.protocol != "dsnc") continue;
        for (const auto& f : rows) {
            if (f.protocol != "fncm" || f.peers != d.peers || f.seed != d.seed) continue;
            ++pairs;
            if (d.metrics.access_link_bytes >= f.metrics.access_link_bytes) {
                ok = false;
                detail = "violation at peers=" + std::to_string(d.peers) +
                         " seed=" + std::to_string(d.seed);
            }
        }
    }
    if (detail.empty())
        detail = std::to_string(pairs) + " (peers, seed) pairs, campus of 80+ peers";
    criterion(13, "dsnc moves fewer bytes across the access link than fncm", ok, detail);
}

} // namespace

int main() {
    std::printf("acceptance suite (base seed %llu)\n",
                static_cast<unsigned long long>(base_seed));
    c1_coupon_classic();
    c2_coupon_coded();
    c3_large_field_limit();
    c4_field_correctness();
    c5_mds_pool();
    c6_roundtrip();
    c7_innovation_guarantee();
    c8_fig4_direction();
    c9_fig8_direction();
    c10_fig6_stress();
    c11_fig10_overhead();
    c12_determinism();
    c13_campus_locality();
    std::printf("%d of 13 criteria failed (total %.1f s)\n", g_failures, now_seconds());
    return g_failures == 0 ? 0 : 1;
}
