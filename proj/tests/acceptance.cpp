// Acceptance checks. Each check prints one PASS/FAIL line with its measured
// values and wall-clock time; the process exits non-zero if any check fails.

#include "qlink/analysis.hpp"
#include "qlink/cli.hpp"
#include "qlink/config.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace qlink;
using namespace qlink::testing;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream notes;
    std::vector<std::string> failures;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            failures.push_back(what);
            ok = false;
        }
    }
};

int g_failures = 0;

void run(const std::string& id, const std::string& title, double budget_s, const std::function<void(Check&)>& body) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char budget[96];
    std::snprintf(budget, sizeof budget, "runtime %.2f s (limit %.0f s)", secs, budget_s);
    c.require(secs < budget_s, budget);
    std::string failed;
    for (const auto& f : c.failures) failed += (failed.empty() ? " | failed: " : "; ") + f;
    std::printf("%s %s %s: %s%s [%.2f s]\n", c.ok ? "PASS" : "FAIL", id.c_str(), title.c_str(), c.notes.str().c_str(),
                failed.c_str(), secs);
    std::fflush(stdout);
    if (!c.ok) ++g_failures;
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

const Matrix4c& phi_plus() {
    static const Matrix4c m = outer(ket(1 / std::sqrt(2.0), 0, 0, 1 / std::sqrt(2.0)));
    return m;
}

SimConfig noiseless(BellState herald, SignMode mode = SignMode::Physical) {
    SimConfig c = ideal_sim(11);
    c.noise.p_succ = 1.0;
    c.noise.psi_plus_fraction = herald == BellState::PsiPlus ? 1.0 : 0.0;
    c.link.sign_mode = mode;
    return c;
}

// ---------------------------------------------------------------------------

void correction_soundness(Check& c) {
    double worst = 0.0;
    int cases = 0;
    const auto bases = six_bases();

    // Gate path: the state left in the register after a K delivery.
    for (auto h : {BellState::PsiPlus, BellState::PsiMinus}) {
        Simulation sim(noiseless(h));
        std::optional<DensityMatrix> delivered;
        sim.link.set_delivery_handler([&](Qubit, std::size_t) { delivered = sim.phys.qubits().state(); });
        EntRequest req;
        req.type = DeliveryType::K;
        sim.link.submit(req);
        sim.events.run();
        c.require(delivered.has_value(), "no K delivery");
        if (!delivered) return;
        c.require(sim.link.records(Qubit::Client).front().raw_heralded == h, "unexpected herald");
        for (const auto& bc : bases)
            for (const auto& bs : bases) {
                const auto got = joint_distribution(delivered->matrix(), bc, bs);
                const auto want = joint_distribution(phi_plus(), bc, bs);
                for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
                ++cases;
            }
    }

    // Classical path: the link layer's gates and flip rules applied to the raw
    // heralded state produced by the simulator, both sign conventions.
    for (auto mode : {SignMode::Physical, SignMode::ClassicalFlip})
        for (auto h : {BellState::PsiPlus, BellState::PsiMinus}) {
            Simulation sim(noiseless(h, mode));
            const auto r = sim.phys.entangle(EntCall{Command::ent("t"), at_ns(0)}, EntCall{Command::ent("t"), at_ns(0)},
                                             DeliveredModel{1.0, 0.0, 1.0}, 1.0);
            c.require(r.heralded == h, "unexpected herald");
            const DensityMatrix raw = sim.phys.qubits().state();
            for (const auto& bc : bases)
                for (const auto& bs : bases) {
                    DensityMatrix rho = raw;
                    const auto gc = basis_change(bc, mode), gs = basis_change(bs, mode);
                    for (const auto& g : gc.gates) rho = apply_local_rotation(rho, Qubit::Client, g);
                    for (const auto& g : gs.gates) rho = apply_local_rotation(rho, Qubit::Server, g);
                    const bool inv_c = gc.invert ^ classical_flip(h, bc.axis);
                    const auto z = joint_distribution(rho.matrix(), MeasBasis(Axis::Z, +1), MeasBasis(Axis::Z, +1));
                    std::array<double, 4> got{};
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) got[2 * (a ^ inv_c) + (b ^ gs.invert)] += z[2 * a + b];
                    const auto want = joint_distribution(phi_plus(), bc, bs);
                    for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
                    ++cases;
                }
        }

    // End to end M deliveries never report an outcome pair that is impossible for PHI_PLUS.
    int impossible = 0, samples = 0;
    for (auto mode : {SignMode::Physical, SignMode::ClassicalFlip})
        for (auto h : {BellState::PsiPlus, BellState::PsiMinus})
            for (const auto& bc : bases)
                for (const auto& bs : bases) {
                    Simulation sim(noiseless(h, mode));
                    EntRequest req;
                    req.type = DeliveryType::M;
                    req.num_pairs = 8;
                    req.meas_basis = bc;
                    req.remote_meas_basis = bs;
                    sim.link.submit(req);
                    sim.events.run();
                    const auto& rc = sim.link.records(Qubit::Client);
                    const auto& rs = sim.link.records(Qubit::Server);
                    const auto want = joint_distribution(phi_plus(), bc, bs);
                    for (std::size_t i = 0; i < rc.size() && i < rs.size(); ++i) {
                        ++samples;
                        if (want[2 * *rc[i].meas_outcome + *rs[i].meas_outcome] < 1e-9) ++impossible;
                    }
                }
    c.require(samples == 2 * 2 * 36 * 8, "missing M deliveries");
    c.require(impossible == 0, std::to_string(impossible) + " outcome pairs impossible for PHI_PLUS");
    c.require(worst <= 1e-12, "max deviation " + fmt("%.3g", worst));
    c.notes << cases << " basis/herald/path cases, max deviation " << fmt("%.2g", worst) << ", " << samples
            << " sampled M pairs consistent";
}

// ---------------------------------------------------------------------------

struct Rig {
    Rig(NoiseParams n, PhysParams p = {}) : rngs(5), trace(TraceLevel::Commands), phys(p, n, rngs, &trace) {}
    RngStreams rngs;
    Trace trace;
    PhysicalLayer phys;
};

NoiseParams ideal_noise(double psi_plus_fraction = 0.5) {
    NoiseParams n = build_noise("ideal", nlohmann::json::object());
    n.psi_plus_fraction = psi_plus_fraction;
    return n;
}

void table_conformance(Check& c) {
    std::map<Verb, std::set<OutcomeCode>> seen;
    int mismatched_trace = 0;

    // Every returned code must also be the code of the node's latest OUTCOME trace event.
    auto record = [&](Rig& rig, Qubit node, Verb v, const Outcome& o, OutcomeCode expect, const std::string& what) {
        c.require(o.code == expect, what + ": got " + std::string(to_string(o.code)));
        seen[v].insert(o.code);
        const auto events = rig.trace.sorted();
        for (auto it = events.rbegin(); it != events.rend(); ++it)
            if (it->type == "OUTCOME" && it->node == to_string(node)) {
                if (it->payload["code_id"].get<int>() != static_cast<int>(o.code)) ++mismatched_trace;
                return;
            }
        ++mismatched_trace;
    };
    auto ent_call = [](Verb v, std::int64_t t, std::string tag = "t") {
        return EntCall{v == Verb::ENT ? Command::ent(std::move(tag)) : Command::enm(std::move(tag)), at_ns(t)};
    };
    const DeliveredModel perfect{1.0, 0.0, 1.0};

    {  // local commands
        PhysParams p;
        p.hardware_z = true;
        Rig rig(ideal_noise(), p);
        auto& d = rig.phys.device(Qubit::Client);
        const Qubit q = Qubit::Client;
        record(rig, q, Verb::MSR, d.execute(Command::msr(), at_ns(0)), OutcomeCode::HARDWARE_FAILURE, "MSR no qubit");
        record(rig, q, Verb::SQG, d.execute(Command::sqg(Rotation(Axis::X, 16)), at_ns(0)),
               OutcomeCode::HARDWARE_FAILURE, "SQG no qubit");
        record(rig, q, Verb::INI, d.execute(Command::ini(), at_ns(0)), OutcomeCode::SUCCESS, "INI");
        record(rig, q, Verb::SQG, d.execute(Command::sqg(Rotation(Axis::Z, 8)), at_ns(200'000)),
               OutcomeCode::HARDWARE_FAILURE, "SQG Z on hardware");
        record(rig, q, Verb::MSR, d.execute(Command::msr(), at_ns(200'000)), OutcomeCode::SUCCESS_0, "MSR |0>");
        d.execute(Command::ini(), at_ns(300'000));
        record(rig, q, Verb::SQG, d.execute(Command::sqg(Rotation(Axis::X, 16)), at_ns(400'000)), OutcomeCode::SUCCESS,
               "SQG X(pi)");
        record(rig, q, Verb::MSR, d.execute(Command::msr(), at_ns(401'000)), OutcomeCode::SUCCESS_1, "MSR |1>");
        d.execute(Command::ini(), at_ns(500'000));
        record(rig, q, Verb::PMG, d.execute(Command::pmg({Rotation(Axis::Y, 16)}), at_ns(600'000)),
               OutcomeCode::SUCCESS, "PMG");
        record(rig, q, Verb::MSR, d.execute(Command::msr(), at_ns(600'000)), OutcomeCode::SUCCESS_1,
               "MSR after PMG Y(pi)");
    }

    for (Verb v : {Verb::ENT, Verb::ENM}) {
        const std::string name(to_string(v));
        {  // absent peer
            Rig rig(ideal_noise());
            const Command cmd = v == Verb::ENT ? Command::ent("t") : Command::enm("t");
            const auto o = rig.phys.execute(Qubit::Client, cmd, at_ns(0));
            record(rig, Qubit::Client, v, o, OutcomeCode::ENT_SYNC_FAILURE, name + " absent peer");
            c.require(o.elapsed == std::chrono::microseconds(500), name + " sync timeout is not 0.5 ms");
        }
        {  // exhausted batch
            Rig rig(ideal_noise());
            const auto r = rig.phys.entangle(ent_call(v, 0), ent_call(v, 0), perfect, 0.0);
            record(rig, Qubit::Client, v, *r.client, OutcomeCode::ENT_FAILURE, name + " p_succ=0");
            c.require(r.attempts == 1000, name + " batch did not exhaust 1000 attempts");
        }
        {  // tag disagreement
            Rig rig(ideal_noise());
            const auto r = rig.phys.entangle(ent_call(v, 0, "a"), ent_call(v, 0, "b"), perfect, 1.0);
            record(rig, Qubit::Client, v, *r.client, OutcomeCode::MISMATCH_FAILURE, name + " mismatch");
            c.require(r.server && r.server->code == OutcomeCode::MISMATCH_FAILURE, name + " server missed mismatch");
        }
        {  // live qubit blocks a new attempt
            Rig rig(ideal_noise());
            rig.phys.device(Qubit::Client).execute(Command::ini(), at_ns(0));
            const auto r = rig.phys.entangle(ent_call(v, 1'000'000), ent_call(v, 1'000'000), perfect, 1.0);
            record(rig, Qubit::Client, v, *r.client, OutcomeCode::HARDWARE_FAILURE, name + " live qubit");
        }
        for (auto h : {BellState::PsiPlus, BellState::PsiMinus}) {
            Rig rig(ideal_noise(h == BellState::PsiPlus ? 1.0 : 0.0));
            std::set<int> bits;
            for (int i = 0; i < 64 && (v == Verb::ENT ? bits.empty() : bits.size() < 2); ++i) {
                const std::int64_t t = i * 10'000'000LL;
                const auto r = rig.phys.entangle(ent_call(v, t), ent_call(Verb::ENT, t), perfect, 1.0);
                const std::optional<int> bit = v == Verb::ENM ? r.client->bit : std::nullopt;
                record(rig, Qubit::Client, v, *r.client, ent_success_code(h, bit), name + " success");
                if (v == Verb::ENM && !bit) c.require(false, "ENM without a bit");
                bits.insert(bit.value_or(0));
                for (Qubit q : {Qubit::Client, Qubit::Server})
                    if (rig.phys.qubits().live(q)) rig.phys.qubits().release(q);
            }
        }
    }

    const std::map<Verb, std::set<OutcomeCode>> table = {
        {Verb::INI, {OutcomeCode::SUCCESS}},
        {Verb::MSR, {OutcomeCode::SUCCESS_0, OutcomeCode::SUCCESS_1, OutcomeCode::HARDWARE_FAILURE}},
        {Verb::SQG, {OutcomeCode::SUCCESS, OutcomeCode::HARDWARE_FAILURE}},
        {Verb::PMG, {OutcomeCode::SUCCESS}},
        {Verb::ENT,
         {OutcomeCode::SUCCESS_PSI_PLUS, OutcomeCode::SUCCESS_PSI_MINUS, OutcomeCode::ENT_FAILURE,
          OutcomeCode::ENT_SYNC_FAILURE, OutcomeCode::MISMATCH_FAILURE, OutcomeCode::HARDWARE_FAILURE}},
        {Verb::ENM,
         {OutcomeCode::SUCCESS_PSI_PLUS_0, OutcomeCode::SUCCESS_PSI_PLUS_1, OutcomeCode::SUCCESS_PSI_MINUS_0,
          OutcomeCode::SUCCESS_PSI_MINUS_1, OutcomeCode::ENT_FAILURE, OutcomeCode::ENT_SYNC_FAILURE,
          OutcomeCode::MISMATCH_FAILURE, OutcomeCode::HARDWARE_FAILURE}},
    };
    std::size_t pairs = 0;
    for (const auto& [verb, codes] : table) {
        for (OutcomeCode code : codes)
            c.require(seen[verb].count(code) == 1,
                      std::string(to_string(verb)) + " never produced " + std::string(to_string(code)));
        for (OutcomeCode code : seen[verb])
            c.require(codes.count(code) == 1,
                      std::string(to_string(verb)) + " produced unexpected " + std::string(to_string(code)));
        pairs += codes.size();
    }
    c.require(mismatched_trace == 0, std::to_string(mismatched_trace) + " trace codes disagree with returned codes");
    c.notes << pairs << " command/outcome pairs emitted exactly";
}

// ---------------------------------------------------------------------------

void batch_statistics(Check& c) {
    const double p = 5e-5;
    const int batches = 10000;
    RngStreams rngs(20240501);
    PhysicalLayer phys(PhysParams{}, ideal_noise(), rngs, nullptr);
    const Duration spacing = phys.params().max_batch_duration() + std::chrono::milliseconds(1);
    SimTime t = at_ns(0);
    int successes = 0, done = 0;
    long long attempts = 0, succeeded_pairs = 0, total_to_success = 0;
    // The first 10^4 batches give the frequency; the same stream then continues
    // until enough successes accumulate for the attempts mean.
    while (done < batches || succeeded_pairs < 2000) {
        const auto r = phys.entangle(EntCall{Command::ent("b"), t}, EntCall{Command::ent("b"), t},
                                     DeliveredModel{1.0, 0.0, 1.0}, p);
        t += spacing;
        const bool ok = r.heralded.has_value();
        if (done++ < batches) successes += ok;
        attempts += r.attempts;
        if (ok) {
            total_to_success += attempts;
            ++succeeded_pairs;
            attempts = 0;
            phys.qubits().release(Qubit::Client);
            phys.qubits().release(Qubit::Server);
        }
    }
    const double expect = 1.0 - std::pow(1.0 - p, 1000);
    const double freq = static_cast<double>(successes) / batches;
    const double sigma = binomial_sigma(expect, batches);
    const double mean_attempts = static_cast<double>(total_to_success) / succeeded_pairs;
    c.require(std::abs(freq - expect) <= 4 * sigma, "success frequency " + fmt("%.4f", freq));
    c.require(std::abs(mean_attempts - 2e4) <= 0.05 * 2e4, "mean attempts " + fmt("%.0f", mean_attempts));
    c.notes << "success frequency " << fmt("%.4f", freq) << " vs " << fmt("%.4f", expect) << " (4 sigma "
            << fmt("%.4f", 4 * sigma) << "), mean attempts to success " << fmt("%.0f", mean_attempts) << " over "
            << succeeded_pairs << " successes";
}

// ---------------------------------------------------------------------------

ReadoutModel calibrated_readout() {
    const NoiseParams n = NoiseParams::calibrated();
    return ReadoutModel{n.readout_client, n.readout_server, true};
}

SimConfig calibrated_sim(std::uint64_t seed) {
    SimConfig c;
    c.seed = seed;
    c.noise = NoiseParams::calibrated();
    return c;
}

void tomography(Check& c) {
    Simulation sim(calibrated_sim(1));
    const auto rows = run_tomography(sim, 125);
    c.require(rows.size() == 4500, "expected 4500 rows, got " + std::to_string(rows.size()));
    const auto ro = calibrated_readout();
    const double full = analyze_tomography(rows, Corrections::Full, ro, 200).state.fidelity;
    const double readout = analyze_tomography(rows, Corrections::Readout, ro, 200).state.fidelity;
    const double none = analyze_tomography(rows, Corrections::None, ro, 200).state.fidelity;
    c.require(std::abs(full - 0.783) <= 0.02, "full " + fmt("%.3f", full));
    c.require(none >= 0.66 && none <= 0.70, "none " + fmt("%.3f", none));
    c.require(readout >= 0.72 && readout <= 0.76, "readout " + fmt("%.3f", readout));
    c.notes << "F full " << fmt("%.3f", full) << ", readout " << fmt("%.3f", readout) << ", none "
            << fmt("%.3f", none) << " over " << rows.size() << " shots";
}

void fidelity_sweep(Check& c) {
    Simulation sim(calibrated_sim(1));
    const auto rows = run_fidelity_sweep(sim, 125);
    const auto pts = fidelity_vs_requested(rows, Corrections::Full, calibrated_readout());
    c.require(pts.size() == 7, "expected 7 levels");
    std::map<long, int> per_level;
    for (const auto& r : rows) ++per_level[std::lround(r.requested_fidelity * 100)];
    for (const auto& [level, n] : per_level) c.require(n == 1500, "level " + std::to_string(level) + "% has " + std::to_string(n) + " pairs");
    double prev = -1.0;
    for (const auto& p : pts) {
        c.require(p.fidelity >= p.requested - 1.5 * p.std_err,
                  "level " + fmt("%.2f", p.requested) + " measured " + fmt("%.3f", p.fidelity));
        c.require(p.fidelity > prev, "not increasing at " + fmt("%.2f", p.requested));
        prev = p.fidelity;
        c.notes << fmt("%.2f", p.requested) << "->" << fmt("%.3f", p.fidelity) << "(" << fmt("%.3f", p.std_err)
                << ") ";
    }
    c.notes << "over " << rows.size() << " pairs";
}

void latency(Check& c) {
    Simulation sim(calibrated_sim(1));
    const auto rows = run_latency_benchmark(sim, 1000, 0.80);
    c.require(rows.size() >= 1000, "fewer than 1000 requests");
    const Duration cutoff = std::chrono::seconds(10);
    int bad_sums = 0;
    std::size_t outliers = 0;
    double sums[4] = {0, 0, 0, 0};
    std::size_t used = 0;
    for (const auto& r : rows) {
        bad_sums += r.created_ns + r.latency.total().count() != r.delivered_ns;
        if (r.latency.total() > cutoff) {
            ++outliers;
            continue;
        }
        ++used;
        sums[0] += to_ms(r.latency.link_layer);
        sums[1] += to_ms(r.latency.cr_check);
        sums[2] += to_ms(r.latency.ent_generation);
        sums[3] += to_ms(r.latency.interface);
    }
    const auto rep = latency_from_rows(rows, cutoff);
    c.require(bad_sums == 0, std::to_string(bad_sums) + " rows whose buckets do not sum to the total");
    c.require(rep.excluded == outliers && rep.used == used, "outlier exclusion disagrees with the 10 s rule");
    const double mean[4] = {sums[0] / used, sums[1] / used, sums[2] / used, sums[3] / used};
    c.require(std::abs(rep.link_layer_ms - mean[0]) < 1e-9 && std::abs(rep.ent_generation_ms - mean[2]) < 1e-9,
              "report means disagree with the recomputed means");
    c.require(std::abs(mean[0] - 10.0) <= 1.0, "link layer mean " + fmt("%.2f", mean[0]) + " ms");
    c.require(mean[2] > mean[1] && mean[1] > mean[0] && mean[0] > mean[3],
              "bucket ordering generation > CR > link layer > interface violated");
    c.notes << "means (ms): link layer " << fmt("%.2f", mean[0]) << ", CR " << fmt("%.2f", mean[1])
            << ", generation " << fmt("%.2f", mean[2]) << ", interface " << fmt("%.3f", mean[3]) << "; "
            << used << " used, " << outliers << " excluded";
}

void rsp(Check& c) {
    Simulation sim(calibrated_sim(1));
    const auto rows = run_rsp(sim, 125);
    c.require(rows.size() == 4500, "expected 4500 rows");
    const auto r = rsp_bloch(rows, Corrections::Full, calibrated_readout(), 200);
    double f0 = -1, f1 = -1;
    for (const auto& s : r.states) {
        if (s.label == "+Z") f0 = s.fidelity;
        if (s.label == "-Z") f1 = s.fidelity;
    }
    c.require(std::abs(r.average_fidelity - 0.853) <= 0.03, "average " + fmt("%.3f", r.average_fidelity));
    c.require(f0 > f1, "|0> fidelity " + fmt("%.3f", f0) + " not above |1> " + fmt("%.3f", f1));
    c.notes << "average " << fmt("%.3f", r.average_fidelity) << ", |0> " << fmt("%.3f", f0) << ", |1> "
            << fmt("%.3f", f1);
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism(Check& c) {
    const fs::path root = fs::temp_directory_path() / "qlink-acceptance-determinism";
    fs::remove_all(root);
    int compared = 0;
    for (Experiment e : {Experiment::Tomography, Experiment::Rsp, Experiment::Latency}) {
        RunConfig cfg;
        cfg.seed = 42;
        cfg.experiment = e;
        cfg.shots_per_setting = 4;
        cfg.requests = 50;
        cfg.trace_level = TraceLevel::Commands;
        std::string files[2][2];
        for (int k = 0; k < 2; ++k) {
            cfg.output_dir = (root / (std::string(to_string(e)) + "-" + std::to_string(k))).string();
            const fs::path dir = cmd_run(cfg);
            files[k][0] = slurp(dir / "outcomes.jsonl");
            files[k][1] = slurp(dir / "trace.jsonl");
        }
        c.require(!files[0][0].empty(), std::string(to_string(e)) + " wrote no outcomes");
        c.require(files[0][0] == files[1][0], std::string(to_string(e)) + " outcomes differ");
        c.require(files[0][1] == files[1][1], std::string(to_string(e)) + " traces differ");
        compared += 2;
    }
    fs::remove_all(root);
    c.notes << compared << " file pairs byte-identical across reruns";
}

void unfolding_and_projection(Check& c) {
    Rng rng(99);
    double worst_unfold = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double p = rng.uniform01();
        const double f0 = 0.5 + 0.5 * rng.uniform01() + 1e-3, f1 = 0.5 + 0.5 * rng.uniform01() + 1e-3;
        const double g0 = std::min(f0, 1.0), g1 = std::min(f1, 1.0);
        // Forward model written out: P(read 0) = F0 p + (1 - F1)(1 - p).
        const std::array<double, 2> measured{g0 * p + (1 - g1) * (1 - p), (1 - g0) * p + g1 * (1 - p)};
        const auto back = unfold_readout(measured, g0, g1);
        worst_unfold = std::max({worst_unfold, std::abs(back[0] - p), std::abs(back[1] - (1 - p))});
    }

    double worst_proj = 0.0, worst_signal = 0.0;
    for (int i = 0; i < 1000; ++i) {
        Matrix4c a;
        for (int r = 0; r < 4; ++r)
            for (int k = 0; k < 4; ++k) a(r, k) = Complex(rng.uniform01() - 0.5, rng.uniform01() - 0.5);
        // Hermitian but generally indefinite input for the projection.
        const Matrix4c h = (a + a.adjoint()) / 2.0;
        const Matrix4c p1 = project_physical(h);
        worst_proj = std::max(worst_proj, (project_physical(p1) - p1).cwiseAbs().maxCoeff());

        const Matrix4c m = a * a.adjoint();
        const DensityMatrix rho(m / m.trace().real());
        for (const auto& b : six_bases()) {
            // The server's marginal along Z must not depend on the client's measurement basis.
            const auto joint = joint_distribution(rho.matrix(), b, MeasBasis(Axis::Z, +1));
            const auto base = joint_distribution(rho.matrix(), MeasBasis(Axis::Z, +1), MeasBasis(Axis::Z, +1));
            worst_signal = std::max(worst_signal, std::abs((joint[0] + joint[2]) - (base[0] + base[2])));
            double p_avg = 0.0;
            for (int bit = 0; bit < 2; ++bit) {
                const auto pr = project_qubit(rho, Qubit::Client, b, bit);
                p_avg += pr.probability * prob_bit_zero(pr.state, Qubit::Server, MeasBasis(Axis::X, +1));
            }
            worst_signal = std::max(worst_signal, std::abs(p_avg - prob_bit_zero(rho, Qubit::Server, MeasBasis(Axis::X, +1))));
        }
    }
    c.require(worst_unfold <= 1e-12, "unfold error " + fmt("%.3g", worst_unfold));
    c.require(worst_proj <= 1e-12, "projection not idempotent " + fmt("%.3g", worst_proj));
    c.require(worst_signal <= 1e-12, "signaling " + fmt("%.3g", worst_signal));
    c.notes << "max unfold error " << fmt("%.2g", worst_unfold) << ", projection drift " << fmt("%.2g", worst_proj)
            << ", signaling " << fmt("%.2g", worst_signal);
}

}  // namespace

int main() {
    run("AC1", "correction soundness", 1.0, correction_soundness);
    run("AC2", "command outcome table", 1.0, table_conformance);
    run("AC3", "batch statistics", 10.0, batch_statistics);
    run("AC4", "tomography", 120.0, tomography);
    run("AC5", "fidelity sweep", 300.0, fidelity_sweep);
    run("AC6", "latency breakdown", 120.0, latency);
    run("AC7", "remote state preparation", 120.0, rsp);
    run("AC8", "determinism", 60.0, determinism);
    run("AC9", "unfolding, projection, no-signaling", 10.0, unfolding_and_projection);
    std::printf("%d of 9 checks failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
