#include "qlink/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qlink {

namespace {

void require_prob(double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + " must be in [0, 1]");
}

void require_readout(const ReadoutFidelity& r, const char* who) {
    if (!(r.f0 > 0.5 && r.f0 <= 1.0 && r.f1 > 0.5 && r.f1 <= 1.0))
        throw std::invalid_argument(std::string(who) + " readout fidelities must lie in (0.5, 1]");
}

void validate_charge(const ChargeParams& c, const char* who) {
    const std::string w(who);
    require_prob(c.entry_prob, (w + " charge entry probability").c_str());
    require_prob(c.recovery_prob, (w + " charge recovery probability").c_str());
    require_prob(c.long_outage_prob, (w + " long outage probability").c_str());
    require_prob(c.cr_pass_prob, (w + " CR pass probability").c_str());
    if (c.cr_pass_prob <= 0.0) throw std::invalid_argument(w + " CR pass probability must be positive");
    if (c.recovery_prob + c.long_outage_prob <= 0.0)
        throw std::invalid_argument(w + " charge recovery must be possible");
    if (c.recovery_prob + c.long_outage_prob > 1.0)
        throw std::invalid_argument(w + " recovery + outage probabilities exceed 1");
    if (c.cr_try_duration <= Duration::zero()) throw std::invalid_argument(w + " CR try duration must be positive");
    if (c.outage_min < Duration::zero() || c.outage_max < c.outage_min)
        throw std::invalid_argument(w + " outage duration range is invalid");
}

double lerp(double a, double b, double w) { return a + (b - a) * w; }

// Linear stand-in for the rate/fidelity trade-off: 1e-4 at 0.53, 5e-5 at 0.83.
double default_p_succ(double target) { return 1e-4 + (target - 0.53) * (5e-5 - 1e-4) / 0.30; }

}  // namespace

std::string_view to_string(ChargeStatus s) {
    switch (s) {
        case ChargeStatus::Resonant: return "RESONANT";
        case ChargeStatus::WrongCharge: return "WRONG_CHARGE";
        case ChargeStatus::LongOutage: return "LONG_OUTAGE";
    }
    return "?";
}

DensityMatrix delivered_state(const DeliveredModel& m, BellState heralded) {
    if (heralded != BellState::PsiPlus && heralded != BellState::PsiMinus)
        throw std::invalid_argument("the physical layer only heralds PSI_PLUS or PSI_MINUS");
    if (m.bell_weight < 0.0 || m.bell_weight > 1.0 || m.dephase < 0.0 || m.dephase > 1.0 || m.pop_asym < 0.0)
        throw std::invalid_argument("delivered model parameters out of range");

    Matrix4c bell = bell_density(heralded).matrix();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) bell(i, j) *= m.dephase;

    Matrix4c rho = m.bell_weight * bell + (1.0 - m.bell_weight) * Matrix4c::Identity() / 4.0;
    rho(2, 2) -= m.pop_asym;
    rho(0, 0) += m.pop_asym;
    return DensityMatrix(rho);
}

double corrected_fidelity(const DeliveredModel& m) {
    const auto raw = delivered_state(m, BellState::PsiPlus);
    const auto corrected = apply_local_rotation(raw, Qubit::Client, Rotation(Axis::X, 16));
    return fidelity_with_pure(corrected, BellState::PhiPlus);
}

DeliveredModel calibrate_model(double target) {
    if (!(target > 0.25 && target <= 1.0)) throw std::invalid_argument("calibration target must be in (0.25, 1]");
    DeliveredModel m;
    m.bell_weight = 1.0 - std::min(1.0, 1.2 * (1.0 - target));
    m.pop_asym = 0.159 * (1.0 - target);

    m.dephase = 1.0;
    if (corrected_fidelity(m) <= target) return m;
    m.dephase = 0.0;
    if (corrected_fidelity(m) >= target) return m;

    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 100; ++i) {
        m.dephase = 0.5 * (lo + hi);
        if (corrected_fidelity(m) < target)
            lo = m.dephase;
        else
            hi = m.dephase;
    }
    m.dephase = 0.5 * (lo + hi);
    return m;
}

FidelityTable::FidelityTable(std::vector<FidelityRow> rows) : rows_(std::move(rows)) {
    if (rows_.empty()) throw std::invalid_argument("fidelity table is empty");
    std::sort(rows_.begin(), rows_.end(), [](const auto& a, const auto& b) { return a.target < b.target; });
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const auto& r = rows_[i];
        if (!(r.target > 0.25 && r.target <= 1.0))
            throw std::invalid_argument("fidelity table keys must lie in (0.25, 1]");
        if (!(r.p_succ >= 0.0 && r.p_succ <= 1.0)) throw std::invalid_argument("table p_succ out of [0, 1]");
        if (i > 0 && r.target == rows_[i - 1].target) throw std::invalid_argument("duplicate fidelity table key");
    }
}

FidelityTable FidelityTable::calibrated() {
    // Every NoiseParams starts from this table, so it is built once.
    static const FidelityTable table = [] {
        std::vector<FidelityRow> rows;
        for (int k = 0; k <= 14; ++k) {
            const double t = std::round((0.28 + 0.05 * k) * 100.0) / 100.0;
            rows.push_back({t, calibrate_model(t), default_p_succ(t)});
        }
        rows.push_back({1.0, calibrate_model(1.0), default_p_succ(1.0)});
        return FidelityTable(std::move(rows));
    }();
    return table;
}

double FidelityTable::min_target() const { return rows_.empty() ? 1.0 : rows_.front().target; }
double FidelityTable::max_target() const { return rows_.empty() ? 1.0 : rows_.back().target; }

FidelityRow FidelityTable::lookup(double target) const {
    if (rows_.empty()) throw std::logic_error("fidelity table is empty");
    constexpr double eps = 1e-12;
    if (target < rows_.front().target - eps || target > rows_.back().target + eps)
        throw std::out_of_range("target fidelity " + std::to_string(target) + " outside the calibrated table [" +
                                std::to_string(min_target()) + ", " + std::to_string(max_target()) + "]");
    target = std::clamp(target, rows_.front().target, rows_.back().target);
    auto hi = std::lower_bound(rows_.begin(), rows_.end(), target,
                               [](const FidelityRow& r, double t) { return r.target < t; });
    if (std::abs(hi->target - target) < eps || hi == rows_.begin()) return *hi;
    const auto lo = hi - 1;
    const double w = (target - lo->target) / (hi->target - lo->target);
    FidelityRow out;
    out.target = target;
    out.model.bell_weight = lerp(lo->model.bell_weight, hi->model.bell_weight, w);
    out.model.pop_asym = lerp(lo->model.pop_asym, hi->model.pop_asym, w);
    out.model.dephase = lerp(lo->model.dephase, hi->model.dephase, w);
    out.p_succ = lerp(lo->p_succ, hi->p_succ, w);
    return out;
}

NoiseParams NoiseParams::calibrated() {
    NoiseParams p;
    p.storage_depol_client = 0.06;
    p.storage_depol_server = 0.02;

    p.charge_client.entry_prob = 37.0 / 4500.0;
    p.charge_client.recovery_prob = 0.3;
    p.charge_client.long_outage_prob = 1e-4;
    p.charge_client.cr_pass_prob = 0.15;
    p.charge_client.cr_try_duration = std::chrono::microseconds(100);

    p.charge_server.entry_prob = 380.0 / 4500.0;
    p.charge_server.recovery_prob = 0.3;
    p.charge_server.long_outage_prob = 0.0;
    p.charge_server.cr_pass_prob = 0.5;
    p.charge_server.cr_try_duration = std::chrono::microseconds(50);
    return p;
}

double NoiseParams::success_probability(double phys_target) const {
    if (p_succ) return *p_succ;
    return fid_table.lookup(phys_target).p_succ;
}

void NoiseParams::validate() const {
    if (p_succ) require_prob(*p_succ, "p_succ");
    require_prob(psi_plus_fraction, "psi_plus_fraction");
    require_readout(readout_client, "client");
    require_readout(readout_server, "server");
    validate_charge(charge_client, "client");
    validate_charge(charge_server, "server");
    require_prob(storage_depol_client, "client storage depolarization");
    require_prob(storage_depol_server, "server storage depolarization");
    if (protected_decay_rate < 0.0) throw std::invalid_argument("protected decay rate must be non-negative");
    if (fid_table.rows().empty()) throw std::invalid_argument("fidelity table is empty");
}

int apply_readout_error(int true_bit, double f0, double f1, double rand) {
    const double keep = true_bit == 0 ? f0 : f1;
    return rand < keep ? true_bit : 1 - true_bit;
}

ChargeStatus step_charge(ChargeStatus state, Qubit node, ChargeEvent event, const NoiseParams& p,
                         double rand) {
    const ChargeParams& c = p.charge(node);
    switch (event) {
        case ChargeEvent::BatchCompleted:
            if (state == ChargeStatus::Resonant && rand < c.entry_prob) return ChargeStatus::WrongCharge;
            return state;
        case ChargeEvent::CrTry:
            if (state != ChargeStatus::WrongCharge) return state;
            {
                const double outage = node == Qubit::Client ? c.long_outage_prob : 0.0;
                if (rand < outage) return ChargeStatus::LongOutage;
                if (rand < outage + c.recovery_prob) return ChargeStatus::Resonant;
            }
            return ChargeStatus::WrongCharge;
    }
    return state;
}

double fidelity_to_phys_target(double requested) {
    if (!(requested >= kMinRequestedFidelity && requested <= kMaxRequestedFidelity))
        throw std::invalid_argument("requested minimum fidelity " + std::to_string(requested) +
                                    " outside the supported range [0.25, 0.97]");
    return std::min(1.0, requested + kPhysFidelityOffset);
}

}  // namespace qlink
