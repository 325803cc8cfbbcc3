#include "qlink/cli.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#ifndef QLINK_VERSION
#define QLINK_VERSION "0.0.0"
#endif

namespace qlink {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << std::setprecision(10);
    return f;
}

json read_json(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw std::runtime_error("cannot read " + p.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw std::runtime_error(p.string() + " is corrupt: " + e.what());
    }
}

std::vector<OutcomeRow> read_rows(const fs::path& dir, json* header) {
    std::ifstream f(dir / "outcomes.jsonl");
    if (!f) throw std::runtime_error("missing " + (dir / "outcomes.jsonl").string());
    try {
        return read_outcomes_jsonl(f, header);
    } catch (const std::exception& e) {
        throw std::runtime_error((dir / "outcomes.jsonl").string() + ": " + e.what());
    }
}

RunConfig manifest_config(const fs::path& dir) {
    const json m = read_json(dir / "manifest.json");
    if (m.value("schema", "") != "qlink.manifest") throw std::runtime_error("manifest.json has the wrong schema");
    return config_from_json(m);
}

ReadoutModel readout_of(const RunConfig& cfg) {
    const NoiseParams n = build_noise(cfg.noise_preset, cfg.noise_overrides);
    return ReadoutModel{n.readout_client, n.readout_server, true};
}

void write_fidelity_csv(const fs::path& p, const std::vector<FidelityPoint>& pts) {
    auto f = open_out(p);
    f << "requested,xx,yy,zz,fidelity,std_err,n_shots,meets_requested\n";
    for (const auto& x : pts)
        f << x.requested << ',' << x.xx << ',' << x.yy << ',' << x.zz << ',' << x.fidelity << ',' << x.std_err << ','
          << x.n_shots << ',' << (x.meets_requested ? 1 : 0) << '\n';
}

json latency_json(const LatencyReport& r) {
    return {{"used", r.used},
            {"excluded", r.excluded},
            {"link_layer_ms", r.link_layer_ms},
            {"cr_check_ms", r.cr_check_ms},
            {"ent_generation_ms", r.ent_generation_ms},
            {"interface_ms", r.interface_ms},
            {"total_ms", r.total_ms}};
}

void write_latency_csv(const fs::path& p, const std::vector<OutcomeRow>& rows) {
    std::map<long, std::vector<OutcomeRow>> by;
    for (const auto& r : rows) by[std::lround(r.requested_fidelity * 1e6)].push_back(r);
    auto f = open_out(p);
    f << "requested,used,excluded,link_layer_ms,cr_check_ms,ent_generation_ms,interface_ms,total_ms\n";
    auto line = [&](const std::string& label, const LatencyReport& r) {
        f << label << ',' << r.used << ',' << r.excluded << ',' << r.link_layer_ms << ',' << r.cr_check_ms << ','
          << r.ent_generation_ms << ',' << r.interface_ms << ',' << r.total_ms << '\n';
    };
    for (const auto& [k, v] : by) {
        std::ostringstream os;
        os << static_cast<double>(k) / 1e6;
        line(os.str(), latency_from_rows(v));
    }
    line("all", latency_from_rows(rows));
}

void write_rsp_csv(const fs::path& p, const RspResult& r) {
    auto f = open_out(p);
    f << "state,x,y,z,x_std,y_std,z_std,fidelity,fidelity_std,n_shots\n";
    for (const auto& s : r.states)
        f << s.label << ',' << s.bloch[0] << ',' << s.bloch[1] << ',' << s.bloch[2] << ',' << s.bloch_std[0] << ','
          << s.bloch_std[1] << ',' << s.bloch_std[2] << ',' << s.fidelity << ',' << s.fidelity_std << ',' << s.n_shots
          << '\n';
    f << "average,,,,,,," << r.average_fidelity << ',' << r.average_std << ",\n";
}

json charge_json(const ChargeFilterReport& c) {
    return {{"total", c.total},       {"client_flagged", c.client_flagged}, {"server_flagged", c.server_flagged},
            {"removed", c.removed},   {"kept", c.kept},                     {"warnings", c.warnings}};
}

bool has_all_tomography_terms(const std::vector<OutcomeRow>& rows) {
    std::set<std::pair<int, int>> pairs;
    for (const auto& r : rows) pairs.insert({static_cast<int>(r.client_basis.axis), static_cast<int>(r.server_basis.axis)});
    return pairs.size() == 9;
}

}  // namespace

fs::path resolve_output_dir(const RunConfig& cfg) {
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    const char* root = std::getenv("QLINK_OUTPUT_ROOT");
    const fs::path base = root && *root ? fs::path(root) : fs::path("qlink-runs");
    return base / (std::string(to_string(cfg.experiment)) + "-seed" + std::to_string(cfg.seed));
}

fs::path cmd_run(const RunConfig& cfg) {
    cfg.validate();
    const fs::path dir = resolve_output_dir(cfg);
    fs::create_directories(dir);

    json manifest = {{"schema", "qlink.manifest"},
                     {"schema_version", 1},
                     {"code_version", QLINK_VERSION},
                     {"seed", cfg.seed},
                     {"experiment", to_string(cfg.experiment)},
                     {"config", to_json(cfg)},
                     {"status", "running"}};
    auto write_manifest = [&]() {
        auto f = open_out(dir / "manifest.json");
        f << manifest.dump(2) << '\n';
    };
    write_manifest();

    Simulation sim(cfg.sim_config());
    std::vector<OutcomeRow> rows;
    std::optional<std::string> failure;
    try {
        if (cfg.experiment == Experiment::Latency)
            rows = run_latency_benchmark(sim, cfg.requests, cfg.min_fidelity.value_or(0.80));
        else {
            ProgramRunner runner(sim, cfg.program());
            rows = runner.run();
        }
    } catch (const std::exception& e) {
        failure = e.what();
    }

    const json header = {{"seed", cfg.seed}, {"experiment", to_string(cfg.experiment)}, {"code_version", QLINK_VERSION}};
    {
        auto f = open_out(dir / "trace.jsonl");
        json h = header;
        h["schema"] = "qlink.trace";
        h["schema_version"] = 1;
        h["level"] = to_string(cfg.trace_level);
        sim.trace.write_jsonl(f, h);
    }
    if (!failure) {
        auto f = open_out(dir / "outcomes.jsonl");
        write_outcomes_jsonl(f, rows, header);
    }
    manifest["status"] = failure ? "failed" : "complete";
    manifest["rows"] = rows.size();
    manifest["simulated_end_ns"] = ns_of(sim.events.now());
    manifest["outputs"] = failure ? json::array({"manifest.json", "trace.jsonl"})
                                  : json::array({"manifest.json", "trace.jsonl", "outcomes.jsonl"});
    if (failure) manifest["error"] = *failure;
    write_manifest();
    if (failure) throw std::runtime_error("simulation failed: " + *failure);
    return dir;
}

json cmd_analyze(const fs::path& dir, const AnalyzeOptions& opt) {
    const RunConfig cfg = manifest_config(dir);
    const std::vector<OutcomeRow> rows = read_rows(dir, nullptr);
    const ReadoutModel ro = readout_of(cfg);

    json out = {{"schema", "qlink.analysis"},
                {"schema_version", 1},
                {"experiment", to_string(cfg.experiment)},
                {"corrections", to_string(opt.corrections)},
                {"rows", rows.size()}};
    ChargeFilterReport charge;
    filter_charge(rows, &charge);
    out["charge"] = charge_json(charge);

    std::vector<OutcomeRow> k_rows, r_rows;
    for (const auto& r : rows) (r.type == DeliveryType::R ? r_rows : k_rows).push_back(r);

    if (!k_rows.empty()) {
        if (has_all_tomography_terms(k_rows)) {
            const auto t = analyze_tomography(k_rows, opt.corrections, ro, opt.bootstrap, opt.seed);
            auto f = open_out(dir / "tomography_rho.csv");
            f << "row,col,re,im,uncertainty\n";
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c)
                    f << r << ',' << c << ',' << t.state.rho(r, c).real() << ',' << t.state.rho(r, c).imag() << ','
                      << t.state.element_uncertainties(r, c) << '\n';
            json ex = json::object();
            for (const auto& c : t.expectations.correlators)
                ex[std::string(to_string(c.client_axis)) + std::string(to_string(c.server_axis))] = {
                    {"value", c.value}, {"std_err", c.std_err}, {"n", c.n_shots}, {"partial", c.partial}};
            out["tomography"] = {{"fidelity", t.state.fidelity},
                                 {"fidelity_std", t.state.fidelity_std},
                                 {"rows_used", t.rows_used},
                                 {"correlators", ex}};
        }
        const auto pts = fidelity_vs_requested(k_rows, opt.corrections, ro);
        if (!pts.empty()) {
            write_fidelity_csv(dir / "fidelity_vs_requested.csv", pts);
            json arr = json::array();
            for (const auto& p : pts)
                arr.push_back({{"requested", p.requested}, {"fidelity", p.fidelity}, {"std_err", p.std_err},
                               {"n", p.n_shots}, {"meets_requested", p.meets_requested}});
            out["fidelity_vs_requested"] = arr;
        }
    }
    if (!r_rows.empty()) {
        const auto r = rsp_bloch(r_rows, opt.corrections, ro, opt.bootstrap, opt.seed);
        write_rsp_csv(dir / "rsp_bloch.csv", r);
        json arr = json::array();
        for (const auto& s : r.states)
            arr.push_back({{"state", s.label}, {"fidelity", s.fidelity}, {"fidelity_std", s.fidelity_std},
                           {"bloch", s.bloch}});
        out["rsp"] = {{"average_fidelity", r.average_fidelity}, {"average_std", r.average_std}, {"states", arr},
                      {"warnings", r.warnings}};
    }
    write_latency_csv(dir / "latency_breakdown.csv", rows);
    out["latency"] = latency_json(latency_from_rows(rows));

    auto f = open_out(dir / "analysis.json");
    f << out.dump(2) << '\n';
    return out;
}

json cmd_report(const std::vector<fs::path>& dirs, const fs::path& out_dir, double pause_threshold_s) {
    if (dirs.empty()) throw std::invalid_argument("report needs at least one run directory");
    fs::create_directories(out_dir);
    json report = {{"schema", "qlink.report"}, {"schema_version", 1}, {"runs", json::array()}, {"warnings", json::array()}};

    auto ts = open_out(out_dir / "delivery_timeseries.csv");
    ts << "run,time_s,cumulative_delivered\n";
    auto fid = open_out(out_dir / "fidelity_vs_requested.csv");
    fid << "run,requested,fidelity,std_err,n_shots,meets_requested\n";
    auto lat = open_out(out_dir / "latency_breakdown.csv");
    lat << "run,used,excluded,link_layer_ms,cr_check_ms,ent_generation_ms,interface_ms,total_ms\n";
    auto bloch = open_out(out_dir / "rsp_bloch.csv");
    bloch << "run,state,x,y,z,fidelity,fidelity_std,n_shots\n";

    std::optional<json> first_noise;
    for (const auto& dir : dirs) {
        const RunConfig cfg = manifest_config(dir);
        const std::vector<OutcomeRow> rows = read_rows(dir, nullptr);
        const ReadoutModel ro = readout_of(cfg);
        const std::string run = dir.filename().string();

        const json noise = {{"preset", cfg.noise_preset}, {"overrides", cfg.noise_overrides}};
        if (!first_noise)
            first_noise = noise;
        else if (*first_noise != noise)
            report["warnings"].push_back("run " + run + " uses a different noise configuration");

        std::vector<std::int64_t> times;
        for (const auto& r : rows) times.push_back(r.delivered_ns);
        std::sort(times.begin(), times.end());
        json pauses = json::array();
        for (std::size_t i = 0; i < times.size(); ++i) {
            ts << run << ',' << static_cast<double>(times[i]) / 1e9 << ',' << (i + 1) << '\n';
            if (i > 0) {
                const double gap = static_cast<double>(times[i] - times[i - 1]) / 1e9;
                if (gap > pause_threshold_s)
                    pauses.push_back({{"start_s", static_cast<double>(times[i - 1]) / 1e9}, {"duration_s", gap}});
            }
        }

        std::vector<OutcomeRow> k_rows, r_rows;
        for (const auto& r : rows) (r.type == DeliveryType::R ? r_rows : k_rows).push_back(r);
        for (const auto& p : fidelity_vs_requested(k_rows, Corrections::Full, ro))
            fid << run << ',' << p.requested << ',' << p.fidelity << ',' << p.std_err << ',' << p.n_shots << ','
                << (p.meets_requested ? 1 : 0) << '\n';
        const LatencyReport l = latency_from_rows(rows);
        lat << run << ',' << l.used << ',' << l.excluded << ',' << l.link_layer_ms << ',' << l.cr_check_ms << ','
            << l.ent_generation_ms << ',' << l.interface_ms << ',' << l.total_ms << '\n';
        if (!r_rows.empty()) {
            const auto rb = rsp_bloch(r_rows, Corrections::Full, ro, 200);
            for (const auto& s : rb.states)
                bloch << run << ',' << s.label << ',' << s.bloch[0] << ',' << s.bloch[1] << ',' << s.bloch[2] << ','
                      << s.fidelity << ',' << s.fidelity_std << ',' << s.n_shots << '\n';
        }
        report["runs"].push_back({{"run", run},
                                  {"experiment", to_string(cfg.experiment)},
                                  {"delivered", rows.size()},
                                  {"pauses", pauses},
                                  {"latency", latency_json(l)}});
    }
    for (const auto& w : report["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
    auto f = open_out(out_dir / "report.json");
    f << report.dump(2) << '\n';
    return report;
}

TdmaSchedule generate_schedule(const std::vector<std::string>& classes, int bins_per_class, Duration bin) {
    if (classes.empty()) throw std::invalid_argument("schedule needs at least one class");
    if (bins_per_class < 1) throw std::invalid_argument("bins per class must be at least 1");
    TdmaSchedule s;
    s.bin_duration = bin;
    s.assignment.clear();
    for (const auto& c : classes)
        for (int i = 0; i < bins_per_class; ++i) s.assignment.push_back({c});
    return s;
}

int cli_main(int argc, char** argv) {
    CLI::App app{"Two-node entanglement delivery simulator"};
    app.set_version_flag("--version", QLINK_VERSION);
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Run an experiment and write its outputs");
    std::string config_path, experiment, program_path, output, trace_level;
    std::uint64_t seed = 0;
    int shots = 0, requests = 0;
    double min_fid = 0.0;
    run->add_option("--config", config_path, "Config file (or a manifest.json of an earlier run)");
    run->add_option("--experiment", experiment, "tomography | fidelity_sweep | rsp | latency | custom");
    run->add_option("--program", program_path, "Program file for custom experiments");
    auto* seed_opt = run->add_option("--seed", seed, "Root random seed");
    auto* shots_opt = run->add_option("--shots", shots, "Shots per setting");
    auto* req_opt = run->add_option("--requests", requests, "Requests for the latency experiment");
    auto* fid_opt = run->add_option("--min-fidelity", min_fid, "Override the requested fidelity");
    run->add_option("--output", output, "Output directory");
    run->add_option("--trace-level", trace_level, "none | link | commands | full");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Analyze a run directory");
    std::string run_dir, corrections = "full";
    AnalyzeOptions aopt;
    analyze->add_option("run_dir", run_dir, "Run directory")->required();
    analyze->add_option("--corrections", corrections, "none | readout | full");
    analyze->add_option("--bootstrap", aopt.bootstrap, "Bootstrap resamples");

    // report
    auto* report = app.add_subcommand("report", "Aggregate run directories into plot-ready tables");
    std::vector<std::string> report_dirs;
    std::string report_out = "report";
    double pause_s = 5.0;
    report->add_option("run_dirs", report_dirs, "Run directories")->required();
    report->add_option("--out", report_out, "Output directory");
    report->add_option("--pause-threshold", pause_s, "Gap (s) reported as a delivery pause");

    // gen-schedule
    auto* gen = app.add_subcommand("gen-schedule", "Print a TDMA schedule as config JSON");
    std::vector<std::string> classes{"*"};
    int bins_per_class = 1;
    double bin_ms = 20.0;
    gen->add_option("--class", classes, "Request class (app:fidelity*1000), repeatable");
    gen->add_option("--bins-per-class", bins_per_class, "Consecutive bins per class");
    gen->add_option("--bin-ms", bin_ms, "Bin duration in ms");

    // validate-config
    auto* check = app.add_subcommand("validate-config", "Check a config file");
    std::string check_path;
    check->add_option("config", check_path, "Config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*run) {
            RunConfig cfg;
            try {
                if (!config_path.empty()) cfg = load_config(config_path);
                if (!experiment.empty()) cfg.experiment = parse_experiment(experiment);
                if (!program_path.empty()) {
                    std::ifstream f(program_path);
                    if (!f) throw std::invalid_argument("cannot read program " + program_path);
                    std::stringstream ss;
                    ss << f.rdbuf();
                    cfg.program_text = ss.str();
                    if (experiment.empty()) cfg.experiment = Experiment::Custom;
                }
                if (*seed_opt) cfg.seed = seed;
                if (*shots_opt) cfg.shots_per_setting = shots;
                if (*req_opt) cfg.requests = requests;
                if (*fid_opt) cfg.min_fidelity = min_fid;
                if (!output.empty()) cfg.output_dir = output;
                if (!trace_level.empty()) cfg.trace_level = parse_trace_level(trace_level);
                cfg.validate();
            } catch (const std::exception& e) {
                std::cerr << "invalid configuration: " << e.what() << '\n';
                return kExitUsage;
            }
            try {
                const auto dir = cmd_run(cfg);
                std::cout << dir.string() << '\n';
            } catch (const std::runtime_error& e) {
                std::cerr << e.what() << '\n';
                return kExitSimulation;
            }
            return kExitOk;
        }
        if (*analyze) {
            aopt.corrections = parse_corrections(corrections);
            const json j = cmd_analyze(run_dir, aopt);
            std::cout << j.dump(2) << '\n';
            return kExitOk;
        }
        if (*report) {
            std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
            cmd_report(dirs, report_out, pause_s);
            std::cout << report_out << '\n';
            return kExitOk;
        }
        if (*gen) {
            const auto bin = Duration(static_cast<std::int64_t>(std::llround(bin_ms * 1e6)));
            const TdmaSchedule s = generate_schedule(classes, bins_per_class, bin);
            const PhysParams phys;
            s.validate(phys.max_batch_duration());
            json j = {{"schedule", {{"bin_ms", bin_ms}, {"assignment", s.assignment}}},
                      {"batches_per_bin", s.batches_per_bin(phys.attempt * phys.batch_size, phys.batch_overhead)}};
            std::cout << j.dump(2) << '\n';
            return kExitOk;
        }
        if (*check) {
            try {
                load_config(check_path).validate();
            } catch (const std::exception& e) {
                std::cerr << check_path << ": " << e.what() << '\n';
                return kExitUsage;
            }
            std::cout << check_path << ": ok\n";
            return kExitOk;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitUsage;
}

}  // namespace qlink
