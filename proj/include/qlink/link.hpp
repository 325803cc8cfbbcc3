#pragma once

// Link layer: request intake and forwarding, TDMA-gated processing, physical
// command orchestration, Pauli and classical corrections, entanglement IDs and
// per-delivery latency bookkeeping.

#include "qlink/netsim.hpp"
#include "qlink/noise.hpp"
#include "qlink/phys.hpp"
#include "qlink/qstate.hpp"

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qlink {

enum class DeliveryType : std::uint8_t { K = 0, M = 1, R = 2 };
std::string_view to_string(DeliveryType t);
DeliveryType parse_delivery_type(std::string_view s);

struct EntRequest {
    Qubit remote_node = Qubit::Server;
    int num_pairs = 1;
    double min_fidelity = 0.8;
    DeliveryType type = DeliveryType::K;
    std::optional<MeasBasis> meas_basis;         // originator's basis (M/R)
    std::optional<MeasBasis> remote_meas_basis;  // remote node's basis (M only)
    Duration timeout = std::chrono::seconds(3600);
    std::string app_id = "app";
    int priority = 0;  // carried but ignored by the FIFO scheduler

    Qubit origin() const { return other(remote_node); }
    /// Scheduling class: requests of one application asking for one fidelity.
    std::string class_key() const;
    void validate() const;
};

std::vector<std::uint8_t> encode_request(std::uint64_t id, const EntRequest& r);
std::pair<std::uint64_t, EntRequest> decode_request(const std::vector<std::uint8_t>& payload);

struct LatencyBreakdown {
    Duration link_layer{0};
    Duration cr_check{0};
    Duration ent_generation{0};
    Duration interface{0};

    Duration total() const { return link_layer + cr_check + ent_generation + interface; }
};

struct EntId {
    std::uint32_t pair_id = 0;
    std::uint64_t seq = 0;
    friend bool operator==(const EntId&, const EntId&) = default;
};

struct DeliveryRecord {
    Qubit node = Qubit::Client;
    std::uint64_t request_id = 0;
    EntId ent_id;
    DeliveryType type = DeliveryType::K;
    BellState delivered_bell = BellState::PhiPlus;
    BellState raw_heralded = BellState::PsiPlus;
    std::optional<MeasBasis> meas_basis;
    std::optional<int> meas_outcome;  // after classical correction (M/R)
    bool outcome_inverted = false;    // reported bit XOR physical readout bit
    SimTime created_at{};
    SimTime delivered_at{};
    LatencyBreakdown latency;
    bool charge_flag = false;
    bool charge_resolved = false;
};

/// Offline-installed TDMA schedule. Each bin in a repeating period is assigned a
/// set of request classes; "*" matches every class.
class TdmaSchedule {
public:
    Duration bin_duration = std::chrono::milliseconds(20);
    std::vector<std::vector<std::string>> assignment{{"*"}};

    std::int64_t bin_index(SimTime t) const;
    SimTime bin_start(std::int64_t bin) const;
    bool assigned(std::int64_t bin, const std::string& cls) const;
    /// First bin start at or after t whose bin is assigned to `cls`.
    SimTime next_eligible(SimTime t, const std::string& cls) const;
    /// Earliest time >= t at which a batch of length `need` may be issued for `cls`.
    SimTime next_issue_time(SimTime t, const std::string& cls, Duration need) const;
    /// Whole batches (attempt window plus per-batch overhead) fitting in one bin.
    std::int64_t batches_per_bin(Duration attempt_window, Duration overhead) const;

    void validate(Duration max_batch) const;
};

enum class SignMode : std::uint8_t { Physical, ClassicalFlip };
std::string_view to_string(SignMode m);
SignMode parse_sign_mode(std::string_view s);

struct BasisChange {
    std::vector<Rotation> gates;  // applied before a Z measurement
    bool invert = false;          // flip the reported bit afterwards
};

/// Gates mapping `basis` onto the computational basis: +X via Y(-8), +Y via X(+8),
/// Z without a gate. Negative orientations use the opposite rotation (or X(16) for -Z)
/// in physical mode, or the positive gate plus a classical flip otherwise.
BasisChange basis_change(const MeasBasis& basis, SignMode mode);

/// K-type correction applied by the originator: X(16) for PSI_PLUS, Y(16) for PSI_MINUS.
Rotation pauli_correction(BellState heralded);

/// Whether the originator flips its M/R outcome so statistics match PHI_PLUS.
bool classical_flip(BellState heralded, Axis basis_axis);

struct LatencyReport {
    std::size_t used = 0;
    std::size_t excluded = 0;
    double link_layer_ms = 0, cr_check_ms = 0, ent_generation_ms = 0, interface_ms = 0;
    double total_ms = 0;  // sum of the bucket means
};

LatencyReport latency_report(const std::vector<LatencyBreakdown>& records,
                             Duration exclusion_cutoff = std::chrono::seconds(10));

struct LinkParams {
    Duration interface_round_trip = std::chrono::microseconds(20);
    TdmaSchedule schedule;
    SignMode sign_mode = SignMode::Physical;
    std::uint32_t pair_id = 1;
};

struct RequestResult {
    std::uint64_t request_id = 0;
    std::vector<std::size_t> records;  // indices into the originator's record list
    bool timed_out = false;
    std::optional<OutcomeCode> error;  // set when the request was aborted
};

class LinkLayer {
public:
    using CompletionHandler = std::function<void(const RequestResult&)>;
    /// Called once per delivered pair for each node, after any correction is in place.
    using DeliveryHandler = std::function<void(Qubit node, std::size_t record_index)>;

    LinkLayer(EventQueue& events, PhysicalLayer& phys, ClassicalChannel& channel, LinkParams params,
              Trace* trace);
    LinkLayer(const LinkLayer&) = delete;
    LinkLayer& operator=(const LinkLayer&) = delete;

    /// Accepts a request at the current simulated time on its origin node.
    std::uint64_t submit(const EntRequest& req, CompletionHandler on_done = {});

    void set_delivery_handler(DeliveryHandler h) { on_delivery_ = std::move(h); }

    /// Runs a last CR check on every node with unresolved charge flags.
    void finalize(SimTime t);

    const std::deque<DeliveryRecord>& records(Qubit q) const { return records_[idx(q)]; }
    const LinkParams& params() const { return params_; }
    bool busy() const { return active_ != nullptr; }
    std::size_t queued() const { return queue_.size(); }

private:
    struct Active;

    static int idx(Qubit q) { return q == Qubit::Client ? 0 : 1; }
    void try_start();
    void begin_pair(Active& a);
    void prepare_node(Active& a, Qubit n);
    void run_cycle();
    void deliver(EntangleResult res);
    void finish(std::optional<OutcomeCode> error, bool timed_out);
    bool timed_out(const Active& a, SimTime t) const;
    void resolve_charge(Qubit n, bool zero_counts);
    void issue_pmg(Active& a, Qubit n);

    EventQueue& events_;
    PhysicalLayer& phys_;
    ClassicalChannel& channel_;
    LinkParams params_;
    Trace* trace_;
    DeliveryHandler on_delivery_;

    std::uint64_t next_request_id_ = 0;
    std::deque<std::shared_ptr<Active>> queue_;
    std::shared_ptr<Active> active_;
    std::deque<DeliveryRecord> records_[2];
    std::vector<std::size_t> pending_charge_[2];
    std::uint64_t ent_seq_[2]{0, 0};
    bool waiting_release_ = false;
};

}  // namespace qlink
