#pragma once

#include "qlink/analysis.hpp"
#include "qlink/config.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace qlink {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitSimulation = 2, kExitIo = 3 };

/// Resolves the run directory: the configured one, else $QLINK_OUTPUT_ROOT (or
/// "qlink-runs") joined with "<experiment>-seed<seed>".
std::filesystem::path resolve_output_dir(const RunConfig& cfg);

/// Executes the configured experiment and writes manifest.json, trace.jsonl and
/// outcomes.jsonl. Throws on invalid configuration; simulation failures are
/// recorded in a manifest with status "failed" and rethrown.
std::filesystem::path cmd_run(const RunConfig& cfg);

struct AnalyzeOptions {
    Corrections corrections = Corrections::Full;
    int bootstrap = 1000;
    std::uint64_t seed = 7;
};

/// Runs the analysis pipeline over a run directory and writes the result tables
/// next to the inputs. Returns the analysis summary that is also written to analysis.json.
nlohmann::json cmd_analyze(const std::filesystem::path& run_dir, const AnalyzeOptions& opt);

/// Aggregates several run directories into plot-ready tables under `out_dir`.
nlohmann::json cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir,
                          double pause_threshold_s = 5.0);

/// Round-robin TDMA assignment of `classes` with `bins_per_class` consecutive bins each.
TdmaSchedule generate_schedule(const std::vector<std::string>& classes, int bins_per_class, Duration bin);

int cli_main(int argc, char** argv);

}  // namespace qlink
