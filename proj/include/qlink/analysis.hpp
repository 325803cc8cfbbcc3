#pragma once

// Post-processing of outcome tables: charge-state filtering, readout unfolding,
// correlator estimation over sign variants, linear-inversion tomography with
// physical projection, remote-state Bloch vectors and latency aggregation.

#include "qlink/apps.hpp"
#include "qlink/link.hpp"
#include "qlink/noise.hpp"
#include "qlink/qstate.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace qlink {

enum class Corrections : std::uint8_t { None, Readout, Full };
std::string_view to_string(Corrections c);
Corrections parse_corrections(std::string_view s);

struct ChargeFilterReport {
    std::size_t total = 0;
    std::size_t client_flagged = 0;
    std::size_t server_flagged = 0;
    std::size_t removed = 0;  // rows with either flag
    std::size_t kept = 0;
    std::vector<std::string> warnings;
};

std::vector<OutcomeRow> filter_charge(const std::vector<OutcomeRow>& rows, ChargeFilterReport* report = nullptr);

/// Inverts the confusion matrix M = [[f0, 1-f1], [1-f0, f1]] on (p0, p1). When the
/// result leaves the probability simplex it is clipped to [0, 1] and renormalized.
std::array<double, 2> unfold_readout(const std::array<double, 2>& measured, double f0, double f1,
                                     bool clip = true);

/// Joint two-qubit version, indices 2*client + server, using M_client (x) M_server.
std::array<double, 4> unfold_joint(const std::array<double, 4>& measured, const ReadoutFidelity& client,
                                   const ReadoutFidelity& server, bool clip = true);

struct CorrelatorEstimate {
    Axis client_axis = Axis::X;
    Axis server_axis = Axis::X;
    double value = 0.0;
    double std_err = 0.0;
    std::size_t n_shots = 0;
    bool partial = false;  // fewer than four sign variants were present
};

struct SingleEstimate {
    Qubit node = Qubit::Client;
    Axis axis = Axis::X;
    double value = 0.0;
    double std_err = 0.0;
    std::size_t n_shots = 0;
};

struct ExpectationSet {
    std::vector<CorrelatorEstimate> correlators;
    std::vector<SingleEstimate> singles;

    std::optional<double> get(Pauli client, Pauli server) const;
};

struct ReadoutModel {
    ReadoutFidelity client{1.0, 1.0};
    ReadoutFidelity server{1.0, 1.0};
    bool enabled = false;
};

/// Estimates every correlator and single-qubit expectation the rows support. Each
/// sign variant is unfolded separately in the physical readout frame, mapped to the
/// positive orientation, and the variants are averaged with equal weight.
ExpectationSet estimate_expectations(const std::vector<OutcomeRow>& rows, const ReadoutModel& readout);

/// Nearest density matrix in eigenvalue space: eigenvalues are projected onto the
/// probability simplex and the eigenvectors kept.
Matrix4c project_physical(const Matrix4c& m);

struct ReconstructedState {
    DensityMatrix rho;
    double fidelity = 0.0;  // with PHI_PLUS
    double fidelity_std = 0.0;
    Eigen::Matrix4d element_uncertainties = Eigen::Matrix4d::Zero();
};

/// rho = 1/4 sum <s_i s_j> s_i (x) s_j over all 16 Pauli pairs, then projected.
/// Throws std::invalid_argument naming the missing terms when any of the 15 is absent.
ReconstructedState linear_inversion(const ExpectationSet& e);

struct TomographyResult {
    ReconstructedState state;
    ExpectationSet expectations;
    ChargeFilterReport charge;
    std::size_t rows_used = 0;
};

/// Full pipeline with bootstrap uncertainties (rows resampled within each setting).
TomographyResult analyze_tomography(const std::vector<OutcomeRow>& rows, Corrections level,
                                    const ReadoutModel& readout, int bootstrap = 1000, std::uint64_t seed = 7);

struct FidelityPoint {
    double requested = 0.0;
    double xx = 0.0, yy = 0.0, zz = 0.0;
    double fidelity = 0.0;
    double std_err = 0.0;
    std::size_t n_shots = 0;
    bool meets_requested = false;  // fidelity >= requested
};

/// Fidelity estimate (1 + <XX> - <YY> + <ZZ>) / 4 per requested level.
std::vector<FidelityPoint> fidelity_vs_requested(const std::vector<OutcomeRow>& rows, Corrections level,
                                                 const ReadoutModel& readout);

struct BlochPoint {
    Axis axis = Axis::Z;  // ideal server state is the `eigen` eigenstate of sigma_axis
    int eigen = 1;
    std::string label;    // "+Z" = |0>, "-Z" = |1>, ...
    std::array<double, 3> bloch{0, 0, 0};
    std::array<double, 3> bloch_std{0, 0, 0};
    double fidelity = 0.0;
    double fidelity_std = 0.0;
    std::size_t n_shots = 0;
};

struct RspResult {
    std::vector<BlochPoint> states;
    double average_fidelity = 0.0;
    double average_std = 0.0;
    ChargeFilterReport charge;
    std::vector<std::string> warnings;
};

/// Groups rows by the state the client's corrected outcome prepared on the server
/// and tomographs the server qubit in each group.
RspResult rsp_bloch(const std::vector<OutcomeRow>& rows, Corrections level, const ReadoutModel& readout,
                    int bootstrap = 1000, std::uint64_t seed = 7);

LatencyReport latency_from_rows(const std::vector<OutcomeRow>& rows,
                                Duration exclusion_cutoff = std::chrono::seconds(10));

}  // namespace qlink
