#include "qlink/analysis.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace qlink;
using namespace qlink::testing;

namespace {

const double r2 = 1.0 / std::sqrt(2.0);

// Draws tomography rows by sampling the Born distribution of `rho` directly, with
// optional readout errors on the physical bits.
std::vector<OutcomeRow> sample_rows(const Matrix4c& rho, int shots, Rng& rng, ReadoutFidelity rc = {1, 1},
                                    ReadoutFidelity rs = {1, 1}) {
    std::vector<OutcomeRow> rows;
    const auto settings = tomography36();
    for (int rep = 0; rep < shots; ++rep)
        for (std::size_t k = 0; k < settings.size(); ++k) {
            const auto p = joint_distribution(rho, settings[k].client, settings[k].server);
            double u = rng.uniform01();
            int idx = 0;
            while (idx < 3 && u >= p[idx]) u -= p[idx++];
            OutcomeRow r;
            r.experiment = "synthetic";
            r.rep = rep;
            r.setting_index = k;
            r.requested_fidelity = 0.8;
            r.client_basis = settings[k].client;
            r.server_basis = settings[k].server;
            r.client_bit = apply_readout_error(idx >> 1, rc.f0, rc.f1, rng.uniform01());
            r.server_bit = apply_readout_error(idx & 1, rs.f0, rs.f1, rng.uniform01());
            rows.push_back(r);
        }
    return rows;
}

Matrix4c reference_rho() {
    const double re[4][4] = {{0.442, 0.003, 0.003, 0.328},
                             {0.003, 0.033, -0.023, -0.000},
                             {0.003, -0.023, 0.056, -0.003},
                             {0.328, -0.000, -0.003, 0.469}};
    const double im[4][4] = {{0, -0.014, -0.005, 0.032},
                             {0.014, 0, -0.002, 0.001},
                             {0.005, 0.002, 0, -0.000},
                             {-0.032, -0.001, 0.000, 0}};
    Matrix4c m;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m(i, j) = Complex(re[i][j], im[i][j]);
    return project_physical(m);
}

double tr_pauli(const Matrix4c& rho, const Matrix2c& a, const Matrix2c& b) { return (rho * kron(a, b)).trace().real(); }

Matrix2c pauli_of(Pauli p) {
    switch (p) {
        case Pauli::X: return sx();
        case Pauli::Y: return sy();
        case Pauli::Z: return sz();
        default: return Matrix2c::Identity();
    }
}

}  // namespace

TEST(Unfold, Examples) {
    auto p = unfold_readout({0.3, 0.7}, 1.0, 1.0);
    EXPECT_NEAR(p[0], 0.3, 1e-15);
    p = unfold_readout({0.928, 0.072}, 0.928, 0.997);
    EXPECT_NEAR(p[0], 1.0, 1e-12);
    EXPECT_NEAR(p[1], 0.0, 1e-12);
    p = unfold_readout({0.001, 0.999}, 0.928, 0.997);
    EXPECT_GE(p[0], 0.0);
    EXPECT_GE(p[1], 0.0);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
    EXPECT_EQ(p[0], 0.0);
    EXPECT_THROW(unfold_readout({0.5, 0.5}, 0.5, 0.5), std::domain_error);
}

TEST(Unfold, RoundTripIsExact) {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double f0 = 0.5 + 0.5 * rng.uniform01() + 1e-3, f1 = 0.5 + 0.5 * rng.uniform01() + 1e-3;
        const double a = rng.uniform01();
        const double f0c = std::min(f0, 1.0), f1c = std::min(f1, 1.0);
        // Forward model written out from the confusion matrix definition.
        const std::array<double, 2> measured{f0c * a + (1 - f1c) * (1 - a), (1 - f0c) * a + f1c * (1 - a)};
        const auto back = unfold_readout(measured, f0c, f1c);
        EXPECT_NEAR(back[0], a, 1e-12);
        EXPECT_NEAR(back[1], 1 - a, 1e-12);
    }
}

TEST(Unfold, JointRoundTrip) {
    Rng rng(2);
    const ReadoutFidelity c{0.928, 0.997}, s{0.962, 0.993};
    for (int i = 0; i < 200; ++i) {
        std::array<double, 4> p{};
        double tot = 0;
        for (auto& v : p) tot += v = rng.uniform01();
        for (auto& v : p) v /= tot;
        std::array<double, 4> m{};
        for (int out = 0; out < 4; ++out)
            for (int in = 0; in < 4; ++in) {
                const int oc = out >> 1, os = out & 1, ic = in >> 1, is = in & 1;
                const double pc = ic == 0 ? (oc == 0 ? c.f0 : 1 - c.f0) : (oc == 1 ? c.f1 : 1 - c.f1);
                const double ps = is == 0 ? (os == 0 ? s.f0 : 1 - s.f0) : (os == 1 ? s.f1 : 1 - s.f1);
                m[out] += pc * ps * p[in];
            }
        const auto back = unfold_joint(m, c, s);
        for (int k = 0; k < 4; ++k) EXPECT_NEAR(back[k], p[k], 1e-12);
    }
}

TEST(Projection, IdempotentAndPhysical) {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        Matrix4c m;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) m(r, c) = Complex(rng.uniform01() - 0.5, rng.uniform01() - 0.5);
        m = (m + m.adjoint()).eval();
        const Matrix4c once = project_physical(m);
        EXPECT_TRUE(DensityMatrix::unchecked(once).is_valid());
        EXPECT_LT((project_physical(once) - once).cwiseAbs().maxCoeff(), 1e-12);
    }
    const Matrix4c phi = bell_density(BellState::PhiPlus).matrix();
    EXPECT_LT((project_physical(phi) - phi).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LinearInversion, IdealAndZeroExpectations) {
    ExpectationSet e;
    for (Axis a : {Axis::X, Axis::Y, Axis::Z}) {
        for (Axis b : {Axis::X, Axis::Y, Axis::Z}) {
            CorrelatorEstimate c;
            c.client_axis = a;
            c.server_axis = b;
            c.value = a != b ? 0.0 : (a == Axis::Y ? -1.0 : 1.0);
            e.correlators.push_back(c);
        }
        e.singles.push_back({Qubit::Client, a, 0.0, 0.0, 1});
        e.singles.push_back({Qubit::Server, a, 0.0, 0.0, 1});
    }
    auto st = linear_inversion(e);
    EXPECT_LT((st.rho.matrix() - outer(ket(r2, 0, 0, r2))).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(st.fidelity, 1.0, 1e-12);

    for (auto& c : e.correlators) c.value = 0.0;
    st = linear_inversion(e);
    EXPECT_LT((st.rho.matrix() - Matrix4c::Identity() / 4.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LinearInversion, MissingTermsAreListed) {
    ExpectationSet e;
    e.correlators.push_back({Axis::X, Axis::X, 1.0, 0.0, 10, false});
    try {
        linear_inversion(e);
        FAIL() << "expected an exception";
    } catch (const std::invalid_argument& ex) {
        const std::string what = ex.what();
        EXPECT_NE(what.find("YY"), std::string::npos);
        EXPECT_NE(what.find("IZ"), std::string::npos);
        EXPECT_EQ(what.find("XX,"), std::string::npos);
    }
}

TEST(Correlators, NoiselessPhiPlus) {
    Rng rng(4);
    const auto rows = sample_rows(bell_density(BellState::PhiPlus).matrix(), 50, rng);
    const auto e = estimate_expectations(rows, ReadoutModel{});
    EXPECT_NEAR(*e.get(Pauli::X, Pauli::X), 1.0, 1e-12);
    EXPECT_NEAR(*e.get(Pauli::Y, Pauli::Y), -1.0, 1e-12);
    EXPECT_NEAR(*e.get(Pauli::Z, Pauli::Z), 1.0, 1e-12);
    for (const auto& c : e.correlators) {
        EXPECT_FALSE(c.partial);
        EXPECT_EQ(c.n_shots, 200u);
        if (c.client_axis == c.server_axis) {
            EXPECT_NEAR(c.std_err, 0.0, 1e-12);
        }
    }
}

TEST(Correlators, SyntheticReferenceStateWithinFourSigma) {
    const Matrix4c rho = reference_rho();
    Rng rng(5);
    const auto rows = sample_rows(rho, 125, rng);
    const auto e = estimate_expectations(rows, ReadoutModel{});
    const Pauli ps[3] = {Pauli::X, Pauli::Y, Pauli::Z};
    for (const auto& c : e.correlators) {
        const double truth = tr_pauli(rho, pauli_of(ps[static_cast<int>(c.client_axis)]),
                                      pauli_of(ps[static_cast<int>(c.server_axis)]));
        EXPECT_NEAR(c.value, truth, 4 * c.std_err + 1e-9);
    }
}

TEST(Correlators, ReadoutUnfoldingRemovesBias) {
    const ReadoutFidelity rc{0.928, 0.997}, rs{0.962, 0.993};
    Rng rng(6);
    const auto rows = sample_rows(bell_density(BellState::PhiPlus).matrix(), 400, rng, rc, rs);
    const auto raw = estimate_expectations(rows, ReadoutModel{});
    const auto fixed = estimate_expectations(rows, ReadoutModel{rc, rs, true});
    EXPECT_LT(*raw.get(Pauli::Z, Pauli::Z), 0.93);
    for (const auto& c : fixed.correlators)
        if (c.client_axis == c.server_axis) {
            const double truth = c.client_axis == Axis::Y ? -1.0 : 1.0;
            EXPECT_NEAR(c.value, truth, 4 * c.std_err + 1e-9);
        }
}

TEST(Correlators, SingleVariantIsPartial) {
    Rng rng(7);
    auto rows = sample_rows(bell_density(BellState::PhiPlus).matrix(), 5, rng);
    std::erase_if(rows, [](const OutcomeRow& r) { return r.client_basis.sign < 0 || r.server_basis.sign < 0; });
    const auto e = estimate_expectations(rows, ReadoutModel{});
    for (const auto& c : e.correlators) EXPECT_TRUE(c.partial);
}

TEST(Fidelity, TwoWaysAgree) {
    Rng rng(8);
    for (const Matrix4c& rho : {reference_rho(), bell_density(BellState::PhiPlus).matrix(),
                                Matrix4c(Matrix4c::Identity() / 4.0)}) {
        const auto rows = sample_rows(rho, 125, rng);
        const auto res = analyze_tomography(rows, Corrections::None, ReadoutModel{}, 0);
        const auto& r = res.state.rho;
        const double via_paulis = (1 + pauli_expectation(r, Pauli::X, Pauli::X) - pauli_expectation(r, Pauli::Y, Pauli::Y) +
                                   pauli_expectation(r, Pauli::Z, Pauli::Z)) /
                                  4.0;
        EXPECT_NEAR(res.state.fidelity, via_paulis, 0.01);
        EXPECT_NEAR(res.state.fidelity, fidelity_with_pure(DensityMatrix::unchecked(rho), BellState::PhiPlus), 0.06);
    }
}

TEST(Tomography, BootstrapIsSeedDeterministic) {
    Rng rng(9);
    const auto rows = sample_rows(reference_rho(), 30, rng);
    const auto a = analyze_tomography(rows, Corrections::None, ReadoutModel{}, 50, 3);
    const auto b = analyze_tomography(rows, Corrections::None, ReadoutModel{}, 50, 3);
    EXPECT_EQ(a.state.fidelity_std, b.state.fidelity_std);
    EXPECT_GT(a.state.fidelity_std, 0.0);
    EXPECT_TRUE(a.state.rho.is_valid());
}

TEST(ChargeFilter, IdentityAndBoundary) {
    Rng rng(10);
    auto rows = sample_rows(bell_density(BellState::PhiPlus).matrix(), 2, rng);
    ChargeFilterReport rep;
    EXPECT_EQ(filter_charge(rows, &rep).size(), rows.size());
    EXPECT_EQ(rep.removed, 0u);
    rows[0].client_charge_flag = true;
    rows[1].server_charge_flag = true;
    rows[2].client_charge_flag = rows[2].server_charge_flag = true;
    EXPECT_EQ(filter_charge(rows, &rep).size(), rows.size() - 3);
    EXPECT_EQ(rep.client_flagged, 2u);
    EXPECT_EQ(rep.server_flagged, 2u);
    EXPECT_EQ(rep.removed, 3u);
    for (auto& r : rows) r.client_charge_flag = true;
    EXPECT_TRUE(filter_charge(rows, &rep).empty());
    EXPECT_FALSE(rep.warnings.empty());
}

TEST(RspBloch, NoiselessPreparations) {
    Simulation sim(ideal_sim(3));
    const auto rows = run_rsp(sim, 20);
    const auto res = rsp_bloch(rows, Corrections::None, ReadoutModel{}, 20);
    ASSERT_EQ(res.states.size(), 6u);
    for (const auto& s : res.states) {
        EXPECT_NEAR(s.fidelity, 1.0, 1e-12) << s.label;
        const int ax = static_cast<int>(s.axis);
        EXPECT_NEAR(s.bloch[ax], s.eigen, 1e-12);
    }
    EXPECT_NEAR(res.average_fidelity, 1.0, 1e-12);
}

TEST(SweepFidelity, NoiselessIsOneAtEveryLevel) {
    Simulation sim(ideal_sim(4));
    const auto rows = run_fidelity_sweep(sim, 3);
    const auto pts = fidelity_vs_requested(rows, Corrections::Full, ReadoutModel{});
    ASSERT_EQ(pts.size(), 7u);
    for (const auto& p : pts) {
        EXPECT_NEAR(p.fidelity, 1.0, 1e-12);
        EXPECT_TRUE(p.meets_requested);
    }
}

TEST(Latency, FromRowsMatchesReport) {
    Simulation sim(ideal_sim(5));
    const auto rows = run_latency_benchmark(sim, 30);
    const auto rep = latency_from_rows(rows);
    EXPECT_EQ(rep.used, 30u);
    EXPECT_NEAR(rep.total_ms, rep.link_layer_ms + rep.cr_check_ms + rep.ent_generation_ms + rep.interface_ms, 1e-12);
}

TEST(Corrections, ParseNames) {
    EXPECT_EQ(parse_corrections("none"), Corrections::None);
    EXPECT_EQ(parse_corrections("readout"), Corrections::Readout);
    EXPECT_EQ(parse_corrections("full"), Corrections::Full);
    EXPECT_THROW(parse_corrections("bayes"), std::invalid_argument);
}
