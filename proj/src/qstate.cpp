#include "qlink/qstate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qlink {

namespace {

Matrix4c kron(const Matrix2c& a, const Matrix2c& b) {
    Matrix4c out;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) out(2 * i + k, 2 * j + l) = a(i, j) * b(k, l);
    return out;
}

Matrix4c embed(Qubit q, const Matrix2c& op) {
    return q == Qubit::Client ? kron(op, Matrix2c::Identity()) : kron(Matrix2c::Identity(), op);
}

Matrix2c eigen_projector(const MeasBasis& basis, int bit) {
    const double s = (bit == 0 ? 1.0 : -1.0) * basis.sign;
    return 0.5 * (Matrix2c::Identity() + s * pauli_matrix(basis.axis));
}

}  // namespace

std::string_view to_string(Qubit q) { return q == Qubit::Client ? "client" : "server"; }

std::string_view to_string(BellState b) {
    switch (b) {
        case BellState::PhiPlus: return "PHI_PLUS";
        case BellState::PhiMinus: return "PHI_MINUS";
        case BellState::PsiPlus: return "PSI_PLUS";
        case BellState::PsiMinus: return "PSI_MINUS";
    }
    return "?";
}

std::string_view to_string(Axis a) {
    switch (a) {
        case Axis::X: return "X";
        case Axis::Y: return "Y";
        case Axis::Z: return "Z";
    }
    return "?";
}

Qubit other(Qubit q) { return q == Qubit::Client ? Qubit::Server : Qubit::Client; }

Qubit parse_qubit(std::string_view s) {
    if (s == "client") return Qubit::Client;
    if (s == "server") return Qubit::Server;
    throw std::invalid_argument("unknown node label: " + std::string(s));
}

BellState parse_bell_state(std::string_view s) {
    for (auto b : {BellState::PhiPlus, BellState::PhiMinus, BellState::PsiPlus, BellState::PsiMinus})
        if (to_string(b) == s) return b;
    throw std::invalid_argument("unknown Bell state: " + std::string(s));
}

MeasBasis::MeasBasis(Axis a, int s) : axis(a), sign(s) {
    if (s != 1 && s != -1) throw std::invalid_argument("basis sign must be +1 or -1");
}

std::string to_string(const MeasBasis& b) {
    return std::string(b.sign > 0 ? "+" : "-") + std::string(to_string(b.axis));
}

MeasBasis parse_basis(std::string_view s) {
    if (s.size() != 2 || (s[0] != '+' && s[0] != '-'))
        throw std::invalid_argument("basis must look like +X or -Z, got '" + std::string(s) + "'");
    Axis a;
    switch (s[1]) {
        case 'X': a = Axis::X; break;
        case 'Y': a = Axis::Y; break;
        case 'Z': a = Axis::Z; break;
        default: throw std::invalid_argument("unknown basis axis in '" + std::string(s) + "'");
    }
    return MeasBasis(a, s[0] == '+' ? 1 : -1);
}

Rotation::Rotation(Axis a, int s) : axis(a), steps(s) {
    if (s < kMinSteps || s > kMaxSteps)
        throw std::invalid_argument("rotation steps out of range [-31, 32]: " + std::to_string(s));
}

double Rotation::angle() const { return steps * std::numbers::pi / 16.0; }

Rotation Rotation::inverse() const { return wrapped(axis, -steps); }

Rotation Rotation::wrapped(Axis a, int steps) {
    int s = ((steps % 32) + 32) % 32;  // [0, 31]
    if (s > 16) s -= 32;
    return Rotation(a, s);
}

Matrix2c pauli_matrix(Pauli p) {
    Matrix2c m;
    const Complex i(0.0, 1.0);
    switch (p) {
        case Pauli::I: m << 1, 0, 0, 1; break;
        case Pauli::X: m << 0, 1, 1, 0; break;
        case Pauli::Y: m << 0, -i, i, 0; break;
        case Pauli::Z: m << 1, 0, 0, -1; break;
    }
    return m;
}

Matrix2c pauli_matrix(Axis a) {
    switch (a) {
        case Axis::X: return pauli_matrix(Pauli::X);
        case Axis::Y: return pauli_matrix(Pauli::Y);
        case Axis::Z: return pauli_matrix(Pauli::Z);
    }
    return pauli_matrix(Pauli::I);
}

Matrix2c rotation_unitary(const Rotation& r) {
    const double half = r.angle() / 2.0;
    return std::cos(half) * Matrix2c::Identity() -
           Complex(0.0, std::sin(half)) * pauli_matrix(r.axis);
}

Matrix4c hermitize(const Matrix4c& m) {
    Matrix4c h = 0.5 * (m + m.adjoint());
    const double tr = h.trace().real();
    if (tr > 0) h /= tr;
    return h;
}

DensityMatrix::DensityMatrix() : m_(Matrix4c::Zero()) { m_(0, 0) = 1.0; }

DensityMatrix::DensityMatrix(const Matrix4c& m) : m_(m) { check(); }

DensityMatrix DensityMatrix::unchecked(const Matrix4c& m) {
    DensityMatrix d;
    d.m_ = m;
    return d;
}

DensityMatrix DensityMatrix::maximally_mixed() {
    return unchecked(Matrix4c::Identity() / 4.0);
}

DensityMatrix DensityMatrix::product(const Matrix2c& client, const Matrix2c& server) {
    return DensityMatrix(kron(client, server));
}

double DensityMatrix::min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(0.5 * (m_ + m_.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

bool DensityMatrix::is_valid(double herm_tol, double trace_tol, double psd_tol) const {
    if (!m_.allFinite()) return false;
    if ((m_ - m_.adjoint()).cwiseAbs().maxCoeff() > herm_tol) return false;
    if (std::abs(m_.trace() - Complex(1.0, 0.0)) > trace_tol) return false;
    return min_eigenvalue() >= -psd_tol;
}

void DensityMatrix::check() const {
    if (!is_valid()) throw std::domain_error("matrix violates density-matrix invariants");
}

Matrix2c DensityMatrix::reduced(Qubit keep) const {
    Matrix2c r = Matrix2c::Zero();
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int k = 0; k < 2; ++k) {
                if (keep == Qubit::Client)
                    r(a, b) += m_(2 * a + k, 2 * b + k);
                else
                    r(a, b) += m_(2 * k + a, 2 * k + b);
            }
    return r;
}

double DensityMatrix::purity() const { return (m_ * m_).trace().real(); }

Eigen::Vector4cd bell_vector(BellState b) {
    const double h = 1.0 / std::sqrt(2.0);
    Eigen::Vector4cd v = Eigen::Vector4cd::Zero();
    switch (b) {
        case BellState::PhiPlus: v(0) = h; v(3) = h; break;
        case BellState::PhiMinus: v(0) = h; v(3) = -h; break;
        case BellState::PsiPlus: v(1) = h; v(2) = h; break;
        case BellState::PsiMinus: v(1) = h; v(2) = -h; break;
    }
    return v;
}

DensityMatrix bell_density(BellState b) {
    const auto v = bell_vector(b);
    return DensityMatrix::unchecked(v * v.adjoint());
}

DensityMatrix apply_local_unitary(const DensityMatrix& rho, Qubit q, const Matrix2c& u) {
    const Matrix4c big = embed(q, u);
    auto out = DensityMatrix::unchecked(hermitize(big * rho.matrix() * big.adjoint()));
    QLINK_CHECK_STATE(out);
    return out;
}

DensityMatrix apply_local_rotation(const DensityMatrix& rho, Qubit q, const Rotation& r) {
    if (r.steps < Rotation::kMinSteps || r.steps > Rotation::kMaxSteps)
        throw std::invalid_argument("rotation steps out of range");
    if (q != Qubit::Client && q != Qubit::Server) throw std::invalid_argument("invalid qubit label");
    if (r.steps == 0) return rho;
    return apply_local_unitary(rho, q, rotation_unitary(r));
}

Projection project_qubit(const DensityMatrix& rho, Qubit q, const MeasBasis& basis, int bit) {
    const Matrix4c p = embed(q, eigen_projector(basis, bit));
    const Matrix4c unnorm = p * rho.matrix() * p;
    const double prob = std::max(0.0, unnorm.trace().real());
    if (prob <= 0.0) return {0.0, DensityMatrix()};
    auto state = DensityMatrix::unchecked(hermitize(unnorm / prob));
    QLINK_CHECK_STATE(state);
    return {prob, state};
}

double prob_bit_zero(const DensityMatrix& rho, Qubit q, const MeasBasis& basis) {
    const Matrix4c p = embed(q, eigen_projector(basis, 0));
    return std::clamp((p * rho.matrix()).trace().real(), 0.0, 1.0);
}

MeasurementResult measure_qubit(const DensityMatrix& rho, Qubit q, const MeasBasis& basis,
                                double rand) {
    const double p0 = prob_bit_zero(rho, q, basis);
    const int bit = rand < p0 ? 0 : 1;
    return {bit, project_qubit(rho, q, basis, bit).state};
}

double pauli_expectation(const DensityMatrix& rho, Pauli client_obs, Pauli server_obs) {
    const Matrix4c obs = kron(pauli_matrix(client_obs), pauli_matrix(server_obs));
    return (rho.matrix() * obs).trace().real();
}

double fidelity_with_pure(const DensityMatrix& rho, BellState target) {
    const auto v = bell_vector(target);
    return (v.adjoint() * rho.matrix() * v)(0, 0).real();
}

DensityMatrix replace_qubit(const DensityMatrix& rho, Qubit q, const Matrix2c& sigma) {
    const Matrix2c rest = rho.reduced(other(q));
    const Matrix4c m = q == Qubit::Client ? kron(sigma, rest) : kron(rest, sigma);
    auto out = DensityMatrix::unchecked(hermitize(m));
    QLINK_CHECK_STATE(out);
    return out;
}

DensityMatrix depolarize_qubit(const DensityMatrix& rho, Qubit q, double p) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("depolarization probability outside [0, 1]");
    if (p == 0.0) return rho;
    const Matrix4c mixed = replace_qubit(rho, q, Matrix2c::Identity() / 2.0).matrix();
    return DensityMatrix::unchecked(hermitize((1.0 - p) * rho.matrix() + p * mixed));
}

}  // namespace qlink
