#pragma once

// Physical layer: per-node device controllers executing commands, and the
// midpoint heralding protocol (ready handshake, sync timeout, attempt batches).
//
// A command's internal timeline (CR tries, sync wait, attempts) is computed when
// the command is issued. Callers receive the elapsed time and schedule the
// outcome on the event queue; trace events carry their true timestamps.

#include "qlink/netsim.hpp"
#include "qlink/noise.hpp"
#include "qlink/qstate.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace qlink {

// Integer codes are stable and appear in traces.
enum class Verb : std::uint8_t { INI = 0, MSR = 1, SQG = 2, PMG = 3, ENT = 4, ENM = 5 };

enum class OutcomeCode : std::uint8_t {
    SUCCESS = 0,
    SUCCESS_0 = 1,
    SUCCESS_1 = 2,
    SUCCESS_PSI_PLUS = 3,
    SUCCESS_PSI_MINUS = 4,
    SUCCESS_PSI_PLUS_0 = 5,
    SUCCESS_PSI_PLUS_1 = 6,
    SUCCESS_PSI_MINUS_0 = 7,
    SUCCESS_PSI_MINUS_1 = 8,
    ENT_FAILURE = 9,
    ENT_SYNC_FAILURE = 10,
    HARDWARE_FAILURE = 11,
    MISMATCH_FAILURE = 12,
};

std::string_view to_string(Verb v);
std::string_view to_string(OutcomeCode c);
bool is_success(OutcomeCode c);
OutcomeCode ent_success_code(BellState heralded, std::optional<int> bit);

struct Command {
    Verb verb = Verb::INI;
    std::vector<Rotation> rotations;  // SQG: exactly one; PMG: up to three
    std::string tag;                  // ENT/ENM: request tag for mismatch verification

    static Command ini() { return {Verb::INI, {}, {}}; }
    static Command msr() { return {Verb::MSR, {}, {}}; }
    static Command sqg(Rotation r) { return {Verb::SQG, {r}, {}}; }
    static Command pmg(std::vector<Rotation> rs) { return {Verb::PMG, std::move(rs), {}}; }
    static Command ent(std::string tag) { return {Verb::ENT, {}, std::move(tag)}; }
    static Command enm(std::string tag) { return {Verb::ENM, {}, std::move(tag)}; }

    /// Throws std::invalid_argument on a malformed command.
    void validate() const;
};

struct Outcome {
    OutcomeCode code = OutcomeCode::SUCCESS;
    Duration elapsed{0};
    std::optional<BellState> heralded;
    std::optional<int> bit;
};

struct PhysParams {
    Duration ini = std::chrono::microseconds(100);
    Duration msr = std::chrono::microseconds(10);
    Duration sqg = std::chrono::nanoseconds(100);
    Duration pmg = Duration::zero();
    Duration attempt = std::chrono::nanoseconds(3800);
    int batch_size = 1000;
    Duration sync_timeout = std::chrono::microseconds(500);
    Duration handshake = std::chrono::microseconds(3);
    Duration batch_overhead = std::chrono::milliseconds(1);  // optical phase stabilization
    bool mismatch_check = true;
    bool hardware_z = false;  // reject Z-axis SQG like the real hardware

    Duration max_batch_duration() const { return handshake + batch_overhead + attempt * batch_size; }
    void validate() const;
};

enum class DevicePhase : std::uint8_t { CrCheck, AwaitCommand, EntSync, EntAttempting, ProtectedIdle };
std::string_view to_string(DevicePhase p);

/// Joint two-qubit state shared by both devices, with per-qubit liveness.
class QubitRegister {
public:
    using ReleaseHook = std::function<void(Qubit)>;

    const DensityMatrix& state() const { return rho_; }
    bool live(Qubit q) const { return live_[idx(q)]; }
    SimTime touched(Qubit q) const { return touched_[idx(q)]; }

    void init(Qubit q, SimTime t);
    void set_pair(const DensityMatrix& rho, SimTime t);
    void update(const DensityMatrix& rho) { rho_ = rho; }
    void touch(Qubit q, SimTime t) { touched_[idx(q)] = t; }
    void release(Qubit q);
    void on_release(ReleaseHook hook) { hooks_.push_back(std::move(hook)); }

private:
    static int idx(Qubit q) { return q == Qubit::Client ? 0 : 1; }
    DensityMatrix rho_;
    bool live_[2]{false, false};
    SimTime touched_[2]{};
    std::vector<ReleaseHook> hooks_;
};

struct CrResult {
    Duration elapsed{0};
    int tries = 0;
    bool zero_counts_first = false;  // the first try read zero counts (wrong charge state)
    Duration wrong_charge_time{0};
    bool long_outage = false;
};

class DeviceController {
public:
    DeviceController(Qubit node, const PhysParams& phys, const NoiseParams& noise, QubitRegister& reg,
                     RngStreams& rngs, Trace* trace);

    Qubit node() const { return node_; }
    std::string_view name() const { return to_string(node_); }
    DevicePhase phase() const { return phase_; }
    ChargeStatus charge() const { return charge_; }
    void set_charge(ChargeStatus s) { charge_ = s; }
    const std::vector<Rotation>& pending_pmg() const { return pmg_; }

    /// Repeats CR tries from `start` until one passes.
    CrResult cr_check(SimTime start);

    /// Executes INI, MSR, SQG or PMG at time `now`. ENT/ENM go through PhysicalLayer::entangle.
    Outcome execute(const Command& cmd, SimTime now);

    /// Charge-state step at the end of a batch. Returns true if the node left RESONANT.
    bool complete_batch(SimTime t);

    /// Applies the stored pre-measurement gates, then measures in Z with readout error.
    int measure_with_pmg(SimTime t);

    void set_phase(DevicePhase p, SimTime t);

private:
    void apply_protected_decay(SimTime now);
    Outcome fail(SimTime now, const Command& cmd, const std::string& why);

    Qubit node_;
    const PhysParams& phys_;
    const NoiseParams& noise_;
    QubitRegister& reg_;
    Rng& charge_rng_;
    Rng& cr_rng_;
    Rng& measure_rng_;
    Rng& readout_rng_;
    Trace* trace_;
    DevicePhase phase_ = DevicePhase::AwaitCommand;
    ChargeStatus charge_ = ChargeStatus::Resonant;
    std::vector<Rotation> pmg_;
};

struct BatchDraw {
    bool success = false;
    int attempts = 0;  // attempts performed (== batch size on failure)
};

/// One geometric draw per batch: success index k = 1 + floor(log u / log(1 - p)),
/// failure when k exceeds the batch size.
BatchDraw draw_batch(double p_succ, int batch_size, double u);

struct SyncResolution {
    bool synced = false;
    SimTime at{};                 // handshake completion (synced) or timeout (failed)
    std::optional<Qubit> failed;  // node whose wait timed out
};

/// Ready announcements: the earlier node waits up to `timeout` for the later one.
SyncResolution resolve_sync(std::optional<SimTime> client_ready, std::optional<SimTime> server_ready,
                            Duration timeout);

struct EntCall {
    Command cmd;
    SimTime ready{};  // time the node announced itself ready to its peer
};

struct EntangleResult {
    // nullopt: the node is still waiting for its peer and has no outcome yet.
    std::optional<Outcome> client;
    std::optional<Outcome> server;
    SimTime client_done{};
    SimTime server_done{};
    std::optional<BellState> heralded;
    bool batch_ran = false;
    int attempts = 0;
    std::uint64_t batch_id = 0;

    std::optional<Outcome>& side(Qubit q) { return q == Qubit::Client ? client : server; }
    SimTime& done(Qubit q) { return q == Qubit::Client ? client_done : server_done; }
};

/// Both device controllers, the shared register and the heralding station.
class PhysicalLayer {
public:
    PhysicalLayer(const PhysParams& phys, const NoiseParams& noise, RngStreams& rngs, Trace* trace);
    PhysicalLayer(const PhysicalLayer&) = delete;
    PhysicalLayer& operator=(const PhysicalLayer&) = delete;

    DeviceController& device(Qubit q) { return q == Qubit::Client ? client_ : server_; }
    const DeviceController& device(Qubit q) const { return q == Qubit::Client ? client_ : server_; }
    QubitRegister& qubits() { return reg_; }
    const PhysParams& params() const { return phys_; }
    const NoiseParams& noise() const { return noise_; }

    /// Local commands run on the device. ENT/ENM issued here have no peer and
    /// therefore time out with ENT_SYNC_FAILURE.
    Outcome execute(Qubit node, const Command& cmd, SimTime now);

    /// One round of the heralding protocol. A missing side models an absent peer.
    /// When the announcements are further apart than the sync timeout, only the
    /// earlier node receives ENT_SYNC_FAILURE; the other keeps waiting.
    EntangleResult entangle(std::optional<EntCall> client, std::optional<EntCall> server,
                            const DeliveredModel& model, double p_succ);

    std::uint64_t batches_run() const { return batch_counter_; }

private:
    const PhysParams phys_;
    const NoiseParams noise_;
    Trace* trace_;
    QubitRegister reg_;
    DeviceController client_;
    DeviceController server_;
    Rng& herald_rng_;
    std::uint64_t batch_counter_ = 0;
    std::uint64_t sync_counter_ = 0;
};

}  // namespace qlink
