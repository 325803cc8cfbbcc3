#include "qlink/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace qlink {

using json = nlohmann::json;

std::string_view to_string(Experiment e) {
    switch (e) {
        case Experiment::Tomography: return "tomography";
        case Experiment::FidelitySweep: return "fidelity_sweep";
        case Experiment::Rsp: return "rsp";
        case Experiment::Latency: return "latency";
        case Experiment::Custom: return "custom";
    }
    return "?";
}

Experiment parse_experiment(std::string_view s) {
    if (s == "tomography") return Experiment::Tomography;
    if (s == "fidelity_sweep") return Experiment::FidelitySweep;
    if (s == "rsp") return Experiment::Rsp;
    if (s == "latency") return Experiment::Latency;
    if (s == "custom") return Experiment::Custom;
    throw std::invalid_argument("unknown experiment '" + std::string(s) +
                                "' (expected tomography, fidelity_sweep, rsp, latency or custom)");
}

FidelityTable ideal_fidelity_table() {
    std::vector<FidelityRow> rows = FidelityTable::calibrated().rows();
    for (auto& r : rows) r.model = DeliveredModel{1.0, 0.0, 1.0};
    return FidelityTable(std::move(rows));
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw std::invalid_argument("unknown key '" + k + "' in " + where);
}

void apply_readout(ReadoutFidelity& r, const json& j, const std::string& where) {
    check_keys(j, {"f0", "f1"}, where);
    r.f0 = j.value("f0", r.f0);
    r.f1 = j.value("f1", r.f1);
}

Duration seconds_to_ns(double s) { return Duration(static_cast<std::int64_t>(std::llround(s * 1e9))); }
double ns_to_seconds(Duration d) { return static_cast<double>(d.count()) / 1e9; }

void apply_charge(ChargeParams& c, const json& j, const std::string& where) {
    check_keys(j, {"entry_prob", "recovery_prob", "long_outage_prob", "outage_min_s", "outage_max_s", "cr_pass_prob",
                   "cr_try_us"},
               where);
    c.entry_prob = j.value("entry_prob", c.entry_prob);
    c.recovery_prob = j.value("recovery_prob", c.recovery_prob);
    c.long_outage_prob = j.value("long_outage_prob", c.long_outage_prob);
    if (j.contains("outage_min_s")) c.outage_min = seconds_to_ns(j["outage_min_s"].get<double>());
    if (j.contains("outage_max_s")) c.outage_max = seconds_to_ns(j["outage_max_s"].get<double>());
    c.cr_pass_prob = j.value("cr_pass_prob", c.cr_pass_prob);
    if (j.contains("cr_try_us")) c.cr_try_duration = seconds_to_ns(j["cr_try_us"].get<double>() * 1e-6);
}

json charge_json(const ChargeParams& c) {
    return {{"entry_prob", c.entry_prob},
            {"recovery_prob", c.recovery_prob},
            {"long_outage_prob", c.long_outage_prob},
            {"outage_min_s", ns_to_seconds(c.outage_min)},
            {"outage_max_s", ns_to_seconds(c.outage_max)},
            {"cr_pass_prob", c.cr_pass_prob},
            {"cr_try_us", ns_to_seconds(c.cr_try_duration) * 1e6}};
}

}  // namespace

NoiseParams build_noise(const std::string& preset, const json& o) {
    NoiseParams n;
    if (preset == "calibrated") {
        n = NoiseParams::calibrated();
    } else if (preset == "ideal") {
        n.fid_table = ideal_fidelity_table();
        n.readout_client = n.readout_server = ReadoutFidelity{1.0, 1.0};
    } else {
        throw std::invalid_argument("unknown noise preset '" + preset + "' (expected calibrated or ideal)");
    }
    check_keys(o,
               {"p_succ", "psi_plus_fraction", "readout_client", "readout_server", "charge_client", "charge_server",
                "storage_depol_client", "storage_depol_server", "protected_decay_rate", "fid_table"},
               "noise");
    if (o.contains("p_succ")) n.p_succ = o["p_succ"].get<double>();
    n.psi_plus_fraction = o.value("psi_plus_fraction", n.psi_plus_fraction);
    if (o.contains("readout_client")) apply_readout(n.readout_client, o["readout_client"], "noise.readout_client");
    if (o.contains("readout_server")) apply_readout(n.readout_server, o["readout_server"], "noise.readout_server");
    if (o.contains("charge_client")) apply_charge(n.charge_client, o["charge_client"], "noise.charge_client");
    if (o.contains("charge_server")) apply_charge(n.charge_server, o["charge_server"], "noise.charge_server");
    n.storage_depol_client = o.value("storage_depol_client", n.storage_depol_client);
    n.storage_depol_server = o.value("storage_depol_server", n.storage_depol_server);
    n.protected_decay_rate = o.value("protected_decay_rate", n.protected_decay_rate);
    if (o.contains("fid_table")) {
        const auto t = o["fid_table"].get<std::string>();
        if (t == "ideal")
            n.fid_table = ideal_fidelity_table();
        else if (t == "calibrated")
            n.fid_table = FidelityTable::calibrated();
        else
            throw std::invalid_argument("noise.fid_table must be calibrated or ideal");
    }
    n.validate();
    return n;
}

json noise_to_json(const NoiseParams& n) {
    json j = {{"psi_plus_fraction", n.psi_plus_fraction},
              {"readout_client", {{"f0", n.readout_client.f0}, {"f1", n.readout_client.f1}}},
              {"readout_server", {{"f0", n.readout_server.f0}, {"f1", n.readout_server.f1}}},
              {"charge_client", charge_json(n.charge_client)},
              {"charge_server", charge_json(n.charge_server)},
              {"storage_depol_client", n.storage_depol_client},
              {"storage_depol_server", n.storage_depol_server},
              {"protected_decay_rate", n.protected_decay_rate}};
    if (n.p_succ) j["p_succ"] = *n.p_succ;
    return j;
}

void RunConfig::validate() const {
    if (shots_per_setting < 1) throw std::invalid_argument("shots_per_setting must be at least 1");
    if (requests < 1) throw std::invalid_argument("requests must be at least 1");
    if (min_fidelity && !(*min_fidelity >= kMinRequestedFidelity && *min_fidelity <= kMaxRequestedFidelity)) {
        std::ostringstream os;
        os << "min_fidelity " << *min_fidelity << " is outside the deliverable range [" << kMinRequestedFidelity
           << ", " << kMaxRequestedFidelity << "]: the physical target (requested + " << kPhysFidelityOffset
           << ") must stay inside the calibrated fidelity table";
        throw std::invalid_argument(os.str());
    }
    if (experiment == Experiment::Custom && program_text.empty())
        throw std::invalid_argument("custom experiments need a program");
    const SimConfig sc = sim_config();
    sc.phys.validate();
    sc.noise.validate();
    sc.channel.validate();
    sc.link.schedule.validate(sc.phys.max_batch_duration());
    program().validate();
}

SimConfig RunConfig::sim_config() const {
    SimConfig s;
    s.seed = seed;
    s.noise = build_noise(noise_preset, noise_overrides);
    s.phys.mismatch_check = mismatch_check;
    s.phys.hardware_z = hardware_z;
    s.link.schedule.bin_duration = bin_duration;
    s.link.schedule.assignment = assignment;
    s.link.sign_mode = sign_mode;
    s.channel = channel;
    s.trace_level = trace_level;
    return s;
}

AppProgram RunConfig::program() const {
    AppProgram p;
    switch (experiment) {
        case Experiment::Tomography: p = tomography_program(shots_per_setting); break;
        case Experiment::FidelitySweep: p = fidelity_sweep_program(shots_per_setting); break;
        case Experiment::Rsp: p = rsp_program(shots_per_setting); break;
        case Experiment::Latency:
            p = parse_program("program latency\nreps " + std::to_string(requests) +
                              "\nfidelities 0.80\nsettings +Z/+Z\n"
                              "client:\n  create_ent type=K\n  measure\n  store m\n"
                              "server:\n  recv_ent type=K\n  measure\n  store m\n");
            break;
        case Experiment::Custom: p = parse_program(program_text); break;
    }
    if (min_fidelity) p.fidelities = {*min_fidelity};
    p.validate();
    return p;
}

json to_json(const RunConfig& c) {
    json j = {{"schema", "qlink.config"},
              {"schema_version", kConfigSchemaVersion},
              {"seed", c.seed},
              {"experiment", to_string(c.experiment)},
              {"shots_per_setting", c.shots_per_setting},
              {"requests", c.requests},
              {"noise", {{"preset", c.noise_preset}, {"overrides", c.noise_overrides}}},
              {"schedule", {{"bin_ms", to_ms(c.bin_duration)}, {"assignment", c.assignment}}},
              {"channel", {{"latency_us", static_cast<double>(c.channel.latency.count()) / 1e3}, {"loss", c.channel.loss}}},
              {"flags",
               {{"mismatch_check", c.mismatch_check},
                {"hardware_z", c.hardware_z},
                {"sign_mode", to_string(c.sign_mode)}}},
              {"trace_level", to_string(c.trace_level)},
              {"output_dir", c.output_dir}};
    if (!c.program_text.empty()) j["program"] = c.program_text;
    if (c.min_fidelity) j["min_fidelity"] = *c.min_fidelity;
    return j;
}

RunConfig config_from_json(const json& in) {
    const json& j = in.contains("config") && in["config"].is_object() ? in["config"] : in;
    check_keys(j,
               {"schema", "schema_version", "seed", "experiment", "program", "program_path", "shots_per_setting",
                "requests", "min_fidelity", "noise", "schedule", "channel", "flags", "trace_level", "output_dir"},
               "config");
    if (j.contains("schema") && j["schema"] != "qlink.config")
        throw std::invalid_argument("config schema must be qlink.config");
    if (j.value("schema_version", kConfigSchemaVersion) != kConfigSchemaVersion)
        throw std::invalid_argument("unsupported config schema_version");

    RunConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("experiment")) c.experiment = parse_experiment(j["experiment"].get<std::string>());
    c.program_text = j.value("program", std::string{});
    if (j.contains("program_path")) {
        std::ifstream f(j["program_path"].get<std::string>());
        if (!f) throw std::invalid_argument("cannot read program file " + j["program_path"].get<std::string>());
        std::stringstream ss;
        ss << f.rdbuf();
        c.program_text = ss.str();
    }
    c.shots_per_setting = j.value("shots_per_setting", c.shots_per_setting);
    c.requests = j.value("requests", c.requests);
    if (j.contains("min_fidelity")) c.min_fidelity = j["min_fidelity"].get<double>();
    if (j.contains("noise")) {
        const auto& n = j["noise"];
        check_keys(n, {"preset", "overrides"}, "noise");
        c.noise_preset = n.value("preset", c.noise_preset);
        if (n.contains("overrides")) c.noise_overrides = n["overrides"];
    }
    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        check_keys(s, {"bin_ms", "assignment"}, "schedule");
        if (s.contains("bin_ms"))
            c.bin_duration = Duration(static_cast<std::int64_t>(std::llround(s["bin_ms"].get<double>() * 1e6)));
        if (s.contains("assignment")) c.assignment = s["assignment"].get<std::vector<std::vector<std::string>>>();
    }
    if (j.contains("channel")) {
        const auto& ch = j["channel"];
        check_keys(ch, {"latency_us", "loss"}, "channel");
        if (ch.contains("latency_us"))
            c.channel.latency = Duration(static_cast<std::int64_t>(std::llround(ch["latency_us"].get<double>() * 1e3)));
        c.channel.loss = ch.value("loss", c.channel.loss);
    }
    if (j.contains("flags")) {
        const auto& f = j["flags"];
        check_keys(f, {"mismatch_check", "hardware_z", "sign_mode", "protected_decay_rate"}, "flags");
        c.mismatch_check = f.value("mismatch_check", c.mismatch_check);
        c.hardware_z = f.value("hardware_z", c.hardware_z);
        if (f.contains("sign_mode")) c.sign_mode = parse_sign_mode(f["sign_mode"].get<std::string>());
        if (f.contains("protected_decay_rate")) c.noise_overrides["protected_decay_rate"] = f["protected_decay_rate"];
    }
    if (j.contains("trace_level")) c.trace_level = parse_trace_level(j["trace_level"].get<std::string>());
    c.output_dir = j.value("output_dir", std::string{});
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace qlink
