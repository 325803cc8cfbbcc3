#pragma once

#include "qlink/apps.hpp"
#include "qlink/config.hpp"

#include <cmath>

namespace qlink::testing {

// Noiseless stack: pure Bell deliveries, perfect readout, no charge errors.
inline SimConfig ideal_sim(std::uint64_t seed = 1, TraceLevel level = TraceLevel::None) {
    SimConfig c;
    c.seed = seed;
    c.noise = build_noise("ideal", nlohmann::json::object());
    c.trace_level = level;
    return c;
}

inline double binomial_sigma(double p, int n) { return std::sqrt(p * (1.0 - p) / n); }

// Textbook matrices written out by hand, independent of the library's helpers.
inline Matrix4c outer(const Eigen::Vector4cd& v) { return v * v.adjoint(); }

inline Eigen::Vector4cd ket(Complex a00, Complex a01, Complex a10, Complex a11) {
    Eigen::Vector4cd v;
    v << a00, a01, a10, a11;
    return v;
}

inline Matrix4c kron(const Matrix2c& a, const Matrix2c& b) {
    Matrix4c m;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) m(2 * i + k, 2 * j + l) = a(i, j) * b(k, l);
    return m;
}

inline Matrix2c sx() { Matrix2c m; m << 0, 1, 1, 0; return m; }
inline Matrix2c sy() { Matrix2c m; m << 0, Complex(0, -1), Complex(0, 1), 0; return m; }
inline Matrix2c sz() { Matrix2c m; m << 1, 0, 0, -1; return m; }

// Projector onto the `bit` outcome of sign * sigma_axis, built from its eigenvectors.
inline Matrix2c eigen_projector(const MeasBasis& b, int bit) {
    const Matrix2c s = b.axis == Axis::X ? sx() : b.axis == Axis::Y ? sy() : sz();
    const double eig = (bit == 0 ? 1.0 : -1.0) * b.sign;
    return (Matrix2c::Identity() + eig * s) / 2.0;
}

// Joint outcome distribution of measuring client and server in the given bases.
inline std::array<double, 4> joint_distribution(const Matrix4c& rho, const MeasBasis& c, const MeasBasis& s) {
    std::array<double, 4> p{};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            p[2 * a + b] = (rho * kron(eigen_projector(c, a), eigen_projector(s, b))).trace().real();
    return p;
}

inline std::vector<MeasBasis> six_bases() {
    std::vector<MeasBasis> v;
    for (Axis a : {Axis::X, Axis::Y, Axis::Z})
        for (int s : {+1, -1}) v.emplace_back(a, s);
    return v;
}

}  // namespace qlink::testing
