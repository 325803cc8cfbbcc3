#pragma once

#include "qlink/link.hpp"
#include "qlink/netsim.hpp"
#include "qlink/noise.hpp"
#include "qlink/phys.hpp"
#include "qlink/program.hpp"

#include "json.hpp"

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace qlink {

struct SimConfig {
    std::uint64_t seed = 1;
    PhysParams phys;
    NoiseParams noise = NoiseParams::calibrated();
    LinkParams link;
    ChannelParams channel;
    TraceLevel trace_level = TraceLevel::None;
};

// Owns one complete two-node stack. Members are declared in dependency order.
class Simulation {
public:
    explicit Simulation(const SimConfig& cfg);
    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    const SimConfig& config() const { return cfg_; }

private:
    SimConfig cfg_;

public:
    EventQueue events;
    RngStreams rngs;
    Trace trace;
    ClassicalChannel channel;
    PhysicalLayer phys;
    LinkLayer link;
};

class ProgramError : public std::runtime_error {
public:
    ProgramError(const std::string& what, std::optional<OutcomeCode> code)
        : std::runtime_error(what), code_(code) {}
    std::optional<OutcomeCode> code() const { return code_; }

private:
    std::optional<OutcomeCode> code_;
};

struct OutcomeRow {
    std::string experiment;
    int rep = 0;
    double requested_fidelity = 0.0;
    std::size_t setting_index = 0;
    DeliveryType type = DeliveryType::K;
    MeasBasis client_basis;
    MeasBasis server_basis;
    int client_bit = 0;
    int server_bit = 0;
    bool client_inverted = false;  // reported bit differs from the physical readout
    bool server_inverted = false;
    bool client_charge_flag = false;
    bool server_charge_flag = false;
    BellState heralded = BellState::PsiPlus;
    std::uint64_t ent_seq = 0;
    std::int64_t created_ns = 0;
    std::int64_t delivered_ns = 0;
    LatencyBreakdown latency;  // originator's view
    std::map<std::string, int> client_store;
    std::map<std::string, int> server_store;
};

void to_json(nlohmann::json& j, const OutcomeRow& r);
void from_json(const nlohmann::json& j, OutcomeRow& r);

inline constexpr int kOutcomeSchemaVersion = 1;

void write_outcomes_jsonl(std::ostream& os, const std::vector<OutcomeRow>& rows, const nlohmann::json& header);
/// Reads rows written by write_outcomes_jsonl; the header line is returned through `header`.
std::vector<OutcomeRow> read_outcomes_jsonl(std::istream& is, nlohmann::json* header = nullptr);

/// Executes an application program on both nodes of a simulation.
///
/// Shots are run in program order (rep, fidelity, setting). The two node actors
/// step through their instruction lists driven by the event queue; the next shot
/// starts once both have finished the current one.
class ProgramRunner {
public:
    ProgramRunner(Simulation& sim, AppProgram program);
    ~ProgramRunner();
    ProgramRunner(const ProgramRunner&) = delete;
    ProgramRunner& operator=(const ProgramRunner&) = delete;

    /// Optional idle time inserted before each shot (drawn per shot).
    void set_shot_gap(std::function<Duration()> gap) { gap_ = std::move(gap); }

    std::vector<OutcomeRow> run();

private:
    struct Actor;
    struct ShotState;

    void start_shot(std::size_t shot);
    void step(Actor& a);
    void actor_done(Actor& a);
    void on_delivery(Qubit node, std::size_t record);
    [[noreturn]] void fail(const Actor& a, const std::string& msg, std::optional<OutcomeCode> code);

    Simulation& sim_;
    AppProgram prog_;
    std::function<Duration()> gap_;
    std::unique_ptr<Actor> actors_[2];
    std::unique_ptr<ShotState> shot_;
    std::vector<OutcomeRow> rows_;
    std::vector<std::vector<std::size_t>> row_records_[2];  // per row, per node delivery record indices
};

std::vector<OutcomeRow> run_tomography(Simulation& sim, int shots_per_setting = 125);
std::vector<OutcomeRow> run_fidelity_sweep(Simulation& sim, int shots_per_setting = 125);
std::vector<OutcomeRow> run_rsp(Simulation& sim, int shots_per_setting = 125);
/// K-type requests at one fidelity with a uniform random idle time in [0, bin) before each submission.
std::vector<OutcomeRow> run_latency_benchmark(Simulation& sim, int requests, double min_fidelity = 0.80);

}  // namespace qlink
