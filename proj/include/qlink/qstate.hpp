#pragma once

// Exact two-qubit density-matrix engine.
//
// Tensor-factor order is client (x) server, so index 2*i + j addresses
// |ij> with i the client bit and j the server bit.

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

namespace qlink {

using Complex = std::complex<double>;
using Matrix2c = Eigen::Matrix2cd;
using Matrix4c = Eigen::Matrix4cd;

enum class Qubit : std::uint8_t { Client = 0, Server = 1 };

enum class BellState : std::uint8_t { PhiPlus, PhiMinus, PsiPlus, PsiMinus };

enum class Axis : std::uint8_t { X, Y, Z };

enum class Pauli : std::uint8_t { I, X, Y, Z };

std::string_view to_string(Qubit q);
std::string_view to_string(BellState b);
std::string_view to_string(Axis a);
Qubit other(Qubit q);
Qubit parse_qubit(std::string_view s);
BellState parse_bell_state(std::string_view s);

/// Signed measurement basis. Bit 0 is the +1 eigenvalue of sign * sigma_axis.
struct MeasBasis {
    Axis axis = Axis::Z;
    int sign = +1;

    MeasBasis() = default;
    MeasBasis(Axis a, int s);

    friend bool operator==(const MeasBasis&, const MeasBasis&) = default;
};

/// "+X", "-Z", ...
std::string to_string(const MeasBasis& b);
MeasBasis parse_basis(std::string_view s);

/// Single-qubit rotation in multiples of pi/16 about X, Y or Z.
/// Valid steps are [-31, 32]; 16 steps is a pi rotation and 32 steps a full turn.
struct Rotation {
    static constexpr int kMinSteps = -31;
    static constexpr int kMaxSteps = 32;

    Axis axis = Axis::X;
    int steps = 0;

    Rotation() = default;
    Rotation(Axis a, int s);

    double angle() const;
    /// Undoes this rotation (up to global phase, which is invisible on density operators).
    Rotation inverse() const;

    /// Reduces any integer step count modulo a full turn into [-15, 16].
    static Rotation wrapped(Axis a, int steps);

    friend bool operator==(const Rotation&, const Rotation&) = default;
};

Matrix2c pauli_matrix(Pauli p);
Matrix2c pauli_matrix(Axis a);
/// exp(-i * angle * sigma_axis / 2)
Matrix2c rotation_unitary(const Rotation& r);

class DensityMatrix {
public:
    /// |00><00|
    DensityMatrix();
    /// Validates the invariants (Hermitian, unit trace, PSD) and throws std::domain_error otherwise.
    explicit DensityMatrix(const Matrix4c& m);

    /// Skips validation; used on hot paths that already guarantee the invariants.
    static DensityMatrix unchecked(const Matrix4c& m);
    static DensityMatrix maximally_mixed();
    static DensityMatrix product(const Matrix2c& client, const Matrix2c& server);

    const Matrix4c& matrix() const { return m_; }
    Complex operator()(int row, int col) const { return m_(row, col); }

    bool is_valid(double herm_tol = 1e-12, double trace_tol = 1e-12,
                  double psd_tol = 1e-9) const;
    void check() const;

    Matrix2c reduced(Qubit keep) const;
    double purity() const;
    double min_eigenvalue() const;

private:
    Matrix4c m_;
};

// Debug builds validate every state produced by the operations below.
#ifndef NDEBUG
#define QLINK_CHECK_STATE(rho) (rho).check()
#else
#define QLINK_CHECK_STATE(rho) ((void)0)
#endif

Eigen::Vector4cd bell_vector(BellState b);
DensityMatrix bell_density(BellState b);

DensityMatrix apply_local_unitary(const DensityMatrix& rho, Qubit q, const Matrix2c& u);
DensityMatrix apply_local_rotation(const DensityMatrix& rho, Qubit q, const Rotation& r);

struct Projection {
    double probability = 0.0;
    DensityMatrix state;  // normalized post-measurement state; |00><00| when probability == 0
};

/// Projects qubit q onto the eigenvector of sign*sigma_axis selected by `bit`.
Projection project_qubit(const DensityMatrix& rho, Qubit q, const MeasBasis& basis, int bit);

/// Born-rule probability of reading bit 0.
double prob_bit_zero(const DensityMatrix& rho, Qubit q, const MeasBasis& basis);

struct MeasurementResult {
    int bit = 0;
    DensityMatrix state;
};

/// Samples a projective measurement with the supplied uniform draw in [0, 1).
MeasurementResult measure_qubit(const DensityMatrix& rho, Qubit q, const MeasBasis& basis,
                                double rand);

double pauli_expectation(const DensityMatrix& rho, Pauli client_obs, Pauli server_obs);
double fidelity_with_pure(const DensityMatrix& rho, BellState target);

/// rho -> (1-p) rho + p (I/2 on q) (x) Tr_q(rho)
DensityMatrix depolarize_qubit(const DensityMatrix& rho, Qubit q, double p);
/// Replaces qubit q with the single-qubit state `sigma`, keeping the other marginal.
DensityMatrix replace_qubit(const DensityMatrix& rho, Qubit q, const Matrix2c& sigma);

/// Hermitian part, trace renormalized; absorbs floating-point drift.
Matrix4c hermitize(const Matrix4c& m);

}  // namespace qlink
