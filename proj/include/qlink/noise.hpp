#pragma once

// Hardware error models: the delivered entangled state, readout errors,
// charge-state dynamics and the requested-fidelity calibration map.

#include "qlink/netsim.hpp"
#include "qlink/qstate.hpp"

#include <optional>
#include <vector>

namespace qlink {

/// Readout fidelities: f0 = P(read 0 | state 0), f1 = P(read 1 | state 1).
struct ReadoutFidelity {
    double f0 = 1.0;
    double f1 = 1.0;
};

/// Parameters of the heralded-state model, in the frame of the heralded Bell state.
struct DeliveredModel {
    double bell_weight = 1.0;  // weight of the (dephased) heralded Bell projector
    double pop_asym = 0.0;     // population moved from raw |10> into raw |00>
    double dephase = 1.0;      // coherence damping of the Bell projector
};

enum class ChargeStatus : std::uint8_t { Resonant, WrongCharge, LongOutage };
std::string_view to_string(ChargeStatus s);

struct ChargeParams {
    double entry_prob = 0.0;        // per completed batch
    double recovery_prob = 0.3;     // per CR try while in the wrong charge state
    double long_outage_prob = 0.0;  // per recovery try; honoured on the client only
    Duration outage_min = std::chrono::seconds(10);
    Duration outage_max = std::chrono::seconds(60);
    double cr_pass_prob = 0.5;
    Duration cr_try_duration = std::chrono::microseconds(100);
};

struct FidelityRow {
    double target = 1.0;
    DeliveredModel model;
    double p_succ = 5e-5;
};

/// Piecewise-linear map from physical-layer target fidelity to model parameters.
class FidelityTable {
public:
    FidelityTable() = default;
    explicit FidelityTable(std::vector<FidelityRow> rows);

    /// Default table: grid 0.28, 0.33, ..., 0.98 plus 1.0, each row solved so the
    /// Pauli-corrected fidelity equals its target.
    static FidelityTable calibrated();

    FidelityRow lookup(double target) const;
    const std::vector<FidelityRow>& rows() const { return rows_; }
    double min_target() const;
    double max_target() const;

private:
    std::vector<FidelityRow> rows_;
};

struct NoiseParams {
    std::optional<double> p_succ;  // overrides the table's value when set
    double psi_plus_fraction = 0.5;
    FidelityTable fid_table = FidelityTable::calibrated();
    ReadoutFidelity readout_client{0.928, 0.997};
    ReadoutFidelity readout_server{0.962, 0.993};
    ChargeParams charge_client;
    ChargeParams charge_server;
    // Depolarization applied at heralding to each qubit that stays live (ENT, not ENM).
    double storage_depol_client = 0.0;
    double storage_depol_server = 0.0;
    // Depolarization rate (1/s) while a qubit sits in protected storage.
    double protected_decay_rate = 0.0;

    static NoiseParams calibrated();

    const ReadoutFidelity& readout(Qubit q) const { return q == Qubit::Client ? readout_client : readout_server; }
    const ChargeParams& charge(Qubit q) const { return q == Qubit::Client ? charge_client : charge_server; }
    double storage_depol(Qubit q) const { return q == Qubit::Client ? storage_depol_client : storage_depol_server; }
    double success_probability(double phys_target) const;

    void validate() const;
};

/// Heralded state before any Pauli correction. `heralded` must be PSI_PLUS or PSI_MINUS.
DensityMatrix delivered_state(const DeliveredModel& m, BellState heralded);

/// Solves `dephase` by bisection so the corrected fidelity equals `target` for the
/// family bell_weight = 1 - 1.2 (1 - T), pop_asym = 0.159 (1 - T).
DeliveredModel calibrate_model(double target);

/// Fidelity with PHI_PLUS after the link layer's K-type correction of a Psi+ herald.
double corrected_fidelity(const DeliveredModel& m);

int apply_readout_error(int true_bit, double f0, double f1, double rand);

enum class ChargeEvent : std::uint8_t { BatchCompleted, CrTry };

ChargeStatus step_charge(ChargeStatus state, Qubit node, ChargeEvent event, const NoiseParams& p,
                         double rand);

/// Physical-layer target for a requested link-layer minimum fidelity: requested + 0.03, at most 1.
double fidelity_to_phys_target(double requested_min_fidelity);

inline constexpr double kMinRequestedFidelity = 0.25;
inline constexpr double kMaxRequestedFidelity = 0.97;
inline constexpr double kPhysFidelityOffset = 0.03;

}  // namespace qlink
