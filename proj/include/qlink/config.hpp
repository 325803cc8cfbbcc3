#pragma once

#include "qlink/apps.hpp"

#include "json.hpp"

#include <optional>
#include <string>

namespace qlink {

inline constexpr int kConfigSchemaVersion = 1;

enum class Experiment : std::uint8_t { Tomography, FidelitySweep, Rsp, Latency, Custom };
std::string_view to_string(Experiment e);
Experiment parse_experiment(std::string_view s);

/// Everything needed to reproduce a run. Serializes to a self-contained JSON object;
/// custom programs are embedded as text so the config alone is sufficient.
struct RunConfig {
    std::uint64_t seed = 1;
    Experiment experiment = Experiment::Tomography;
    std::string program_text;  // custom experiments
    int shots_per_setting = 125;
    int requests = 1000;       // latency experiment
    std::optional<double> min_fidelity;  // overrides the experiment's fidelity list
    std::string noise_preset = "calibrated";  // "calibrated" or "ideal"
    nlohmann::json noise_overrides = nlohmann::json::object();
    Duration bin_duration = std::chrono::milliseconds(20);
    std::vector<std::vector<std::string>> assignment{{"*"}};
    ChannelParams channel;
    bool mismatch_check = true;
    bool hardware_z = false;
    SignMode sign_mode = SignMode::Physical;
    TraceLevel trace_level = TraceLevel::Link;
    std::string output_dir;

    /// Throws std::invalid_argument with a diagnostic.
    void validate() const;
    SimConfig sim_config() const;
    AppProgram program() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Accepts a config object or a run manifest carrying one under "config".
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

/// Noise parameters from a preset plus JSON overrides.
NoiseParams build_noise(const std::string& preset, const nlohmann::json& overrides);
nlohmann::json noise_to_json(const NoiseParams& n);

/// A fidelity table whose every row delivers the ideal Bell state.
FidelityTable ideal_fidelity_table();

}  // namespace qlink
