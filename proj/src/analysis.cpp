#include "qlink/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace qlink {

namespace {

int parity(int bits) { return (std::popcount(static_cast<unsigned>(bits)) & 1) ? -1 : 1; }

std::array<double, 2> clip_simplex(std::array<double, 2> p) {
    for (double& x : p) x = std::clamp(x, 0.0, 1.0);
    const double s = p[0] + p[1];
    if (s <= 0.0) return {0.5, 0.5};
    return {p[0] / s, p[1] / s};
}

Eigen::Matrix2d confusion(const ReadoutFidelity& f) {
    Eigen::Matrix2d m;
    m << f.f0, 1.0 - f.f1, 1.0 - f.f0, f.f1;
    return m;
}

Eigen::Matrix2d confusion_inverse(const ReadoutFidelity& f) {
    if (!(f.f0 + f.f1 > 1.0))
        throw std::domain_error("readout confusion matrix is singular (f0 + f1 <= 1)");
    return confusion(f).inverse();
}

// Signed basis identifies a sign variant; inversion identifies the physical frame.
struct GroupKey {
    int c_axis, c_sign, s_axis, s_sign;
    bool c_inv, s_inv;
    auto tie() const { return std::tie(c_axis, c_sign, s_axis, s_sign, c_inv, s_inv); }
    bool operator<(const GroupKey& o) const { return tie() < o.tie(); }
};

using Counts = std::array<std::size_t, 4>;  // reported bits, index 2*client + server

std::map<GroupKey, Counts> group_counts(const std::vector<const OutcomeRow*>& rows) {
    std::map<GroupKey, Counts> g;
    for (const OutcomeRow* r : rows) {
        GroupKey k{static_cast<int>(r->client_basis.axis), r->client_basis.sign, static_cast<int>(r->server_basis.axis),
                   r->server_basis.sign, r->client_inverted, r->server_inverted};
        auto& c = g[k];
        ++c[2 * r->client_bit + r->server_bit];
    }
    return g;
}

struct Est {
    double value = 0.0;
    double var = 0.0;
    std::size_t n = 0;
};

// Linear estimator E = sum_k w_k p_k over measured physical frequencies, with its
// value after (optionally clipped) unfolding and a delta-method variance.
Est correlator_group(const Counts& counts, bool c_inv, bool s_inv, const ReadoutModel& ro) {
    const std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    const int mask = (c_inv ? 2 : 0) | (s_inv ? 1 : 0);
    std::array<double, 4> phys{};
    for (int j = 0; j < 4; ++j) phys[j ^ mask] = static_cast<double>(counts[j]) / static_cast<double>(n);

    Eigen::Matrix4d minv = Eigen::Matrix4d::Identity();
    std::array<double, 4> truth = phys;
    if (ro.enabled) {
        const Eigen::Matrix2d a = confusion_inverse(ro.client), b = confusion_inverse(ro.server);
        for (int i = 0; i < 4; ++i)
            for (int k = 0; k < 4; ++k) minv(i, k) = a(i >> 1, k >> 1) * b(i & 1, k & 1);
        truth = unfold_joint(phys, ro.client, ro.server, true);
    }
    const double frame = parity(mask);
    double value = 0.0, second = 0.0, linear = 0.0;
    for (int k = 0; k < 4; ++k) value += frame * parity(k) * truth[k];
    for (int k = 0; k < 4; ++k) {
        double w = 0.0;
        for (int i = 0; i < 4; ++i) w += frame * parity(i) * minv(i, k);
        second += w * w * phys[k];
        linear += w * phys[k];
    }
    return {value, std::max(0.0, second - linear * linear) / static_cast<double>(n), n};
}

Est single_group(std::size_t n0, std::size_t n1, bool inv, const ReadoutFidelity& f, bool unfold) {
    const std::size_t n = n0 + n1;
    std::array<double, 2> phys{static_cast<double>(n0) / n, static_cast<double>(n1) / n};
    if (inv) std::swap(phys[0], phys[1]);
    Eigen::Matrix2d minv = Eigen::Matrix2d::Identity();
    std::array<double, 2> truth = phys;
    if (unfold) {
        minv = confusion_inverse(f);
        truth = unfold_readout(phys, f.f0, f.f1, true);
    }
    const double frame = inv ? -1.0 : 1.0;
    const double value = frame * (truth[0] - truth[1]);
    double second = 0.0, linear = 0.0;
    for (int k = 0; k < 2; ++k) {
        const double w = frame * (minv(0, k) - minv(1, k));
        second += w * w * phys[k];
        linear += w * phys[k];
    }
    return {value, std::max(0.0, second - linear * linear) / static_cast<double>(n), n};
}

Est combine(const std::vector<Est>& parts) {
    Est out;
    double total = 0.0;
    for (const auto& p : parts) total += static_cast<double>(p.n);
    for (const auto& p : parts) {
        const double w = static_cast<double>(p.n) / total;
        out.value += w * p.value;
        out.var += w * w * p.var;
        out.n += p.n;
    }
    return out;
}

ExpectationSet estimate_from_groups(const std::map<GroupKey, Counts>& groups, const ReadoutModel& ro) {
    ExpectationSet out;
    // Correlators: per axis pair, gather each sign variant.
    for (int ca = 0; ca < 3; ++ca) {
        for (int sa = 0; sa < 3; ++sa) {
            std::vector<Est> variants;
            for (int cs : {1, -1}) {
                for (int ss : {1, -1}) {
                    std::vector<Est> parts;
                    for (const auto& [k, c] : groups) {
                        if (k.c_axis != ca || k.s_axis != sa || k.c_sign != cs || k.s_sign != ss) continue;
                        Est e = correlator_group(c, k.c_inv, k.s_inv, ro);
                        e.value *= cs * ss;
                        parts.push_back(e);
                    }
                    if (!parts.empty()) variants.push_back(combine(parts));
                }
            }
            if (variants.empty()) continue;
            CorrelatorEstimate ce;
            ce.client_axis = static_cast<Axis>(ca);
            ce.server_axis = static_cast<Axis>(sa);
            double var = 0.0;
            for (const auto& v : variants) {
                ce.value += v.value / variants.size();
                var += v.var;
                ce.n_shots += v.n;
            }
            ce.std_err = std::sqrt(var) / variants.size();
            ce.partial = variants.size() < 4;
            out.correlators.push_back(ce);
        }
    }
    // Single-qubit expectations from each node's marginal.
    for (Qubit node : {Qubit::Client, Qubit::Server}) {
        const bool is_client = node == Qubit::Client;
        const ReadoutFidelity& f = is_client ? ro.client : ro.server;
        for (int ax = 0; ax < 3; ++ax) {
            std::vector<Est> variants;
            for (int sign : {1, -1}) {
                std::map<bool, std::array<std::size_t, 2>> by_inv;
                for (const auto& [k, c] : groups) {
                    const int a = is_client ? k.c_axis : k.s_axis;
                    const int s = is_client ? k.c_sign : k.s_sign;
                    if (a != ax || s != sign) continue;
                    auto& m = by_inv[is_client ? k.c_inv : k.s_inv];
                    if (is_client) {
                        m[0] += c[0] + c[1];
                        m[1] += c[2] + c[3];
                    } else {
                        m[0] += c[0] + c[2];
                        m[1] += c[1] + c[3];
                    }
                }
                std::vector<Est> parts;
                for (const auto& [inv, m] : by_inv) {
                    if (m[0] + m[1] == 0) continue;
                    Est e = single_group(m[0], m[1], inv, f, ro.enabled);
                    e.value *= sign;
                    parts.push_back(e);
                }
                if (!parts.empty()) variants.push_back(combine(parts));
            }
            if (variants.empty()) continue;
            SingleEstimate se;
            se.node = node;
            se.axis = static_cast<Axis>(ax);
            double var = 0.0;
            for (const auto& v : variants) {
                se.value += v.value / variants.size();
                var += v.var;
                se.n_shots += v.n;
            }
            se.std_err = std::sqrt(var) / variants.size();
            out.singles.push_back(se);
        }
    }
    return out;
}

std::vector<const OutcomeRow*> pointers(const std::vector<OutcomeRow>& rows) {
    std::vector<const OutcomeRow*> p;
    p.reserve(rows.size());
    for (const auto& r : rows) p.push_back(&r);
    return p;
}

// Rows grouped by measurement setting, used for stratified bootstrap resampling.
std::vector<std::vector<const OutcomeRow*>> strata(const std::vector<const OutcomeRow*>& rows) {
    std::map<std::tuple<int, int, int, int>, std::vector<const OutcomeRow*>> m;
    for (const OutcomeRow* r : rows)
        m[{static_cast<int>(r->client_basis.axis), r->client_basis.sign, static_cast<int>(r->server_basis.axis),
           r->server_basis.sign}]
            .push_back(r);
    std::vector<std::vector<const OutcomeRow*>> out;
    for (auto& [k, v] : m) out.push_back(std::move(v));
    return out;
}

std::vector<const OutcomeRow*> resample(const std::vector<std::vector<const OutcomeRow*>>& groups, Rng& rng) {
    std::vector<const OutcomeRow*> out;
    for (const auto& g : groups)
        for (std::size_t i = 0; i < g.size(); ++i) out.push_back(g[rng.index(g.size())]);
    return out;
}

Pauli to_pauli(Axis a) {
    switch (a) {
        case Axis::X: return Pauli::X;
        case Axis::Y: return Pauli::Y;
        case Axis::Z: return Pauli::Z;
    }
    return Pauli::I;
}

std::vector<OutcomeRow> apply_level(const std::vector<OutcomeRow>& rows, Corrections level,
                                    const ReadoutModel& readout, ReadoutModel& used, ChargeFilterReport& report) {
    used = readout;
    used.enabled = level != Corrections::None;
    if (level == Corrections::Full) return filter_charge(rows, &report);
    report = ChargeFilterReport{};
    report.total = report.kept = rows.size();
    for (const auto& r : rows) {
        report.client_flagged += r.client_charge_flag;
        report.server_flagged += r.server_charge_flag;
    }
    return rows;
}

double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / (v.size() - 1));
}

}  // namespace

std::string_view to_string(Corrections c) {
    switch (c) {
        case Corrections::None: return "none";
        case Corrections::Readout: return "readout";
        case Corrections::Full: return "full";
    }
    return "?";
}

Corrections parse_corrections(std::string_view s) {
    if (s == "none") return Corrections::None;
    if (s == "readout") return Corrections::Readout;
    if (s == "full") return Corrections::Full;
    throw std::invalid_argument("corrections must be none, readout or full, got '" + std::string(s) + "'");
}

std::vector<OutcomeRow> filter_charge(const std::vector<OutcomeRow>& rows, ChargeFilterReport* report) {
    ChargeFilterReport rep;
    rep.total = rows.size();
    std::vector<OutcomeRow> kept;
    kept.reserve(rows.size());
    for (const auto& r : rows) {
        rep.client_flagged += r.client_charge_flag;
        rep.server_flagged += r.server_charge_flag;
        if (r.client_charge_flag || r.server_charge_flag)
            ++rep.removed;
        else
            kept.push_back(r);
    }
    rep.kept = kept.size();
    if (rep.total > 0 && kept.empty()) rep.warnings.push_back("charge filter removed every row");
    if (report) *report = std::move(rep);
    return kept;
}

std::array<double, 2> unfold_readout(const std::array<double, 2>& measured, double f0, double f1, bool clip) {
    const Eigen::Matrix2d inv = confusion_inverse({f0, f1});
    const Eigen::Vector2d p = inv * Eigen::Vector2d(measured[0], measured[1]);
    std::array<double, 2> out{p(0), p(1)};
    const bool outside = out[0] < 0.0 || out[1] < 0.0 || out[0] > 1.0 || out[1] > 1.0;
    return clip && outside ? clip_simplex(out) : out;
}

std::array<double, 4> unfold_joint(const std::array<double, 4>& measured, const ReadoutFidelity& client,
                                   const ReadoutFidelity& server, bool clip) {
    const Eigen::Matrix2d a = confusion_inverse(client), b = confusion_inverse(server);
    std::array<double, 4> out{};
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) out[i] += a(i >> 1, k >> 1) * b(i & 1, k & 1) * measured[k];
    if (!clip) return out;
    bool outside = false;
    for (double x : out) outside = outside || x < 0.0 || x > 1.0;
    if (!outside) return out;
    double s = 0.0;
    for (double& x : out) {
        x = std::clamp(x, 0.0, 1.0);
        s += x;
    }
    for (double& x : out) x = s > 0.0 ? x / s : 0.25;
    return out;
}

std::optional<double> ExpectationSet::get(Pauli c, Pauli s) const {
    if (c == Pauli::I && s == Pauli::I) return 1.0;
    for (const auto& e : correlators)
        if (to_pauli(e.client_axis) == c && to_pauli(e.server_axis) == s) return e.value;
    for (const auto& e : singles) {
        const Pauli p = to_pauli(e.axis);
        if (e.node == Qubit::Client && s == Pauli::I && p == c) return e.value;
        if (e.node == Qubit::Server && c == Pauli::I && p == s) return e.value;
    }
    return std::nullopt;
}

ExpectationSet estimate_expectations(const std::vector<OutcomeRow>& rows, const ReadoutModel& readout) {
    return estimate_from_groups(group_counts(pointers(rows)), readout);
}

Matrix4c project_physical(const Matrix4c& m) {
    const Matrix4c h = hermitize(m);
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(h);
    Eigen::Vector4d lam = es.eigenvalues();
    // Euclidean projection of the eigenvalues onto the probability simplex.
    std::array<double, 4> u{lam(0), lam(1), lam(2), lam(3)};
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (int j = 0; j < 4; ++j) {
        cum += u[j];
        const double t = (cum - 1.0) / (j + 1);
        if (u[j] - t > 0.0) theta = t;
    }
    for (int i = 0; i < 4; ++i) lam(i) = std::max(lam(i) - theta, 0.0);
    lam /= lam.sum();
    const Matrix4c v = es.eigenvectors();
    return hermitize(v * lam.cast<Complex>().asDiagonal() * v.adjoint());
}

ReconstructedState linear_inversion(const ExpectationSet& e) {
    const Pauli ps[4] = {Pauli::I, Pauli::X, Pauli::Y, Pauli::Z};
    const char* names = "IXYZ";
    std::string missing;
    Matrix4c m = Matrix4c::Zero();
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            const auto v = e.get(ps[i], ps[j]);
            if (!v) {
                if (!missing.empty()) missing += ", ";
                missing += std::string{names[i], names[j]};
                continue;
            }
            Matrix4c term;
            const Matrix2c a = pauli_matrix(ps[i]), b = pauli_matrix(ps[j]);
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) term(r, c) = a(r >> 1, c >> 1) * b(r & 1, c & 1);
            m += *v * term;
        }
    }
    if (!missing.empty()) throw std::invalid_argument("linear inversion is missing expectations: " + missing);
    ReconstructedState out{DensityMatrix(project_physical(m / 4.0)), 0.0, 0.0, Eigen::Matrix4d::Zero()};
    out.fidelity = fidelity_with_pure(out.rho, BellState::PhiPlus);
    return out;
}

TomographyResult analyze_tomography(const std::vector<OutcomeRow>& rows, Corrections level,
                                    const ReadoutModel& readout, int bootstrap, std::uint64_t seed) {
    TomographyResult res;
    ReadoutModel ro;
    const std::vector<OutcomeRow> used = apply_level(rows, level, readout, ro, res.charge);
    res.rows_used = used.size();
    const auto ptrs = pointers(used);
    res.expectations = estimate_from_groups(group_counts(ptrs), ro);
    res.state = linear_inversion(res.expectations);

    if (bootstrap > 1) {
        Rng rng(seed);
        const auto groups = strata(ptrs);
        std::vector<double> fids;
        std::vector<Matrix4c> rhos;
        for (int b = 0; b < bootstrap; ++b) {
            const auto sample = resample(groups, rng);
            const auto st = linear_inversion(estimate_from_groups(group_counts(sample), ro));
            fids.push_back(st.fidelity);
            rhos.push_back(st.rho.matrix());
        }
        res.state.fidelity_std = stddev(fids);
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                std::vector<double> re, im;
                for (const auto& m : rhos) {
                    re.push_back(m(r, c).real());
                    im.push_back(m(r, c).imag());
                }
                res.state.element_uncertainties(r, c) = std::hypot(stddev(re), stddev(im));
            }
        }
    }
    return res;
}

std::vector<FidelityPoint> fidelity_vs_requested(const std::vector<OutcomeRow>& rows, Corrections level,
                                                 const ReadoutModel& readout) {
    ReadoutModel ro;
    ChargeFilterReport rep;
    const std::vector<OutcomeRow> used = apply_level(rows, level, readout, ro, rep);
    std::map<long, std::vector<const OutcomeRow*>> by_level;
    for (const auto& r : used) by_level[std::lround(r.requested_fidelity * 1e6)].push_back(&r);

    std::vector<FidelityPoint> out;
    for (const auto& [key, subset] : by_level) {
        const ExpectationSet e = estimate_from_groups(group_counts(subset), ro);
        auto find = [&](Axis a) -> const CorrelatorEstimate* {
            for (const auto& c : e.correlators)
                if (c.client_axis == a && c.server_axis == a) return &c;
            return nullptr;
        };
        const auto *xx = find(Axis::X), *yy = find(Axis::Y), *zz = find(Axis::Z);
        if (!xx || !yy || !zz) continue;
        FidelityPoint p;
        p.requested = static_cast<double>(key) / 1e6;
        p.xx = xx->value;
        p.yy = yy->value;
        p.zz = zz->value;
        p.fidelity = (1.0 + p.xx - p.yy + p.zz) / 4.0;
        p.std_err = std::sqrt(xx->std_err * xx->std_err + yy->std_err * yy->std_err + zz->std_err * zz->std_err) / 4.0;
        p.n_shots = subset.size();
        p.meets_requested = p.fidelity >= p.requested;
        out.push_back(p);
    }
    return out;
}

namespace {

struct RspGroupKey {
    int axis;
    int eigen;
    bool operator<(const RspGroupKey& o) const { return std::tie(axis, eigen) < std::tie(o.axis, o.eigen); }
};

// Ideal server state after the client reads eigenvalue e of sigma_axis on PHI_PLUS.
RspGroupKey prepared_state(const OutcomeRow& r) {
    const int e = r.client_basis.sign * (r.client_bit ? -1 : 1);
    const int s = r.client_basis.axis == Axis::Y ? -e : e;
    return {static_cast<int>(r.client_basis.axis), s};
}

std::array<double, 4> server_bloch(const std::vector<const OutcomeRow*>& rows, const ReadoutModel& ro,
                                   std::array<bool, 3>& present) {
    const ExpectationSet e = estimate_from_groups(group_counts(rows), ro);
    std::array<double, 4> out{0, 0, 0, 0};
    present = {false, false, false};
    for (const auto& s : e.singles) {
        if (s.node != Qubit::Server) continue;
        out[static_cast<int>(s.axis)] = s.value;
        present[static_cast<int>(s.axis)] = true;
    }
    return out;
}

}  // namespace

RspResult rsp_bloch(const std::vector<OutcomeRow>& rows, Corrections level, const ReadoutModel& readout,
                    int bootstrap, std::uint64_t seed) {
    RspResult res;
    ReadoutModel ro;
    const std::vector<OutcomeRow> used = apply_level(rows, level, readout, ro, res.charge);
    // Only the server's readout is unfolded: the client's outcome selects the group.
    ro.client = ReadoutFidelity{1.0, 1.0};

    std::map<RspGroupKey, std::vector<const OutcomeRow*>> groups;
    for (const auto& r : used) groups[prepared_state(r)].push_back(&r);

    Rng rng(seed);
    for (int ax = 0; ax < 3; ++ax) {
        for (int eigen : {1, -1}) {
            BlochPoint p;
            p.axis = static_cast<Axis>(ax);
            p.eigen = eigen;
            p.label = std::string(eigen > 0 ? "+" : "-") + std::string(to_string(p.axis));
            auto it = groups.find({ax, eigen});
            if (it == groups.end() || it->second.empty()) {
                res.warnings.push_back("no rows prepared state " + p.label);
                continue;
            }
            std::array<bool, 3> present{};
            const auto b = server_bloch(it->second, ro, present);
            if (!present[ax]) {
                res.warnings.push_back("state " + p.label + " lacks server measurements along its axis");
                continue;
            }
            for (int k = 0; k < 3; ++k) p.bloch[k] = b[k];
            p.fidelity = (1.0 + eigen * b[ax]) / 2.0;
            p.n_shots = it->second.size();

            if (bootstrap > 1) {
                const auto st = strata(it->second);
                std::vector<double> f, comp[3];
                for (int i = 0; i < bootstrap; ++i) {
                    std::array<bool, 3> pr{};
                    const auto bb = server_bloch(resample(st, rng), ro, pr);
                    for (int k = 0; k < 3; ++k) comp[k].push_back(bb[k]);
                    f.push_back((1.0 + eigen * bb[ax]) / 2.0);
                }
                for (int k = 0; k < 3; ++k) p.bloch_std[k] = stddev(comp[k]);
                p.fidelity_std = stddev(f);
            }
            res.states.push_back(p);
        }
    }
    if (!res.states.empty()) {
        double var = 0.0;
        for (const auto& s : res.states) {
            res.average_fidelity += s.fidelity / res.states.size();
            var += s.fidelity_std * s.fidelity_std;
        }
        res.average_std = std::sqrt(var) / res.states.size();
    }
    return res;
}

LatencyReport latency_from_rows(const std::vector<OutcomeRow>& rows, Duration exclusion_cutoff) {
    std::vector<LatencyBreakdown> lat;
    lat.reserve(rows.size());
    for (const auto& r : rows) lat.push_back(r.latency);
    return latency_report(lat, exclusion_cutoff);
}

}  // namespace qlink
