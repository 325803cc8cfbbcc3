#include "qlink/phys.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qlink {

using json = nlohmann::json;

std::string_view to_string(Verb v) {
    switch (v) {
        case Verb::INI: return "INI";
        case Verb::MSR: return "MSR";
        case Verb::SQG: return "SQG";
        case Verb::PMG: return "PMG";
        case Verb::ENT: return "ENT";
        case Verb::ENM: return "ENM";
    }
    return "?";
}

std::string_view to_string(OutcomeCode c) {
    switch (c) {
        case OutcomeCode::SUCCESS: return "SUCCESS";
        case OutcomeCode::SUCCESS_0: return "SUCCESS_0";
        case OutcomeCode::SUCCESS_1: return "SUCCESS_1";
        case OutcomeCode::SUCCESS_PSI_PLUS: return "SUCCESS_PSI_PLUS";
        case OutcomeCode::SUCCESS_PSI_MINUS: return "SUCCESS_PSI_MINUS";
        case OutcomeCode::SUCCESS_PSI_PLUS_0: return "SUCCESS_PSI_PLUS_0";
        case OutcomeCode::SUCCESS_PSI_PLUS_1: return "SUCCESS_PSI_PLUS_1";
        case OutcomeCode::SUCCESS_PSI_MINUS_0: return "SUCCESS_PSI_MINUS_0";
        case OutcomeCode::SUCCESS_PSI_MINUS_1: return "SUCCESS_PSI_MINUS_1";
        case OutcomeCode::ENT_FAILURE: return "ENT_FAILURE";
        case OutcomeCode::ENT_SYNC_FAILURE: return "ENT_SYNC_FAILURE";
        case OutcomeCode::HARDWARE_FAILURE: return "HARDWARE_FAILURE";
        case OutcomeCode::MISMATCH_FAILURE: return "MISMATCH_FAILURE";
    }
    return "?";
}

bool is_success(OutcomeCode c) { return static_cast<int>(c) <= static_cast<int>(OutcomeCode::SUCCESS_PSI_MINUS_1); }

OutcomeCode ent_success_code(BellState heralded, std::optional<int> bit) {
    const bool plus = heralded == BellState::PsiPlus;
    if (heralded != BellState::PsiPlus && heralded != BellState::PsiMinus)
        throw std::invalid_argument("heralded state must be PSI_PLUS or PSI_MINUS");
    if (!bit) return plus ? OutcomeCode::SUCCESS_PSI_PLUS : OutcomeCode::SUCCESS_PSI_MINUS;
    if (plus) return *bit ? OutcomeCode::SUCCESS_PSI_PLUS_1 : OutcomeCode::SUCCESS_PSI_PLUS_0;
    return *bit ? OutcomeCode::SUCCESS_PSI_MINUS_1 : OutcomeCode::SUCCESS_PSI_MINUS_0;
}

void Command::validate() const {
    switch (verb) {
        case Verb::SQG:
            if (rotations.size() != 1) throw std::invalid_argument("SQG carries exactly one rotation");
            break;
        case Verb::PMG:
            if (rotations.size() > 3) throw std::invalid_argument("PMG carries at most three rotations");
            break;
        case Verb::ENT:
        case Verb::ENM:
            if (tag.empty()) throw std::invalid_argument("ENT/ENM require a non-empty request tag");
            if (!rotations.empty()) throw std::invalid_argument("ENT/ENM carry no rotations");
            break;
        case Verb::INI:
        case Verb::MSR:
            if (!rotations.empty()) throw std::invalid_argument("INI/MSR carry no rotations");
            break;
    }
    for (const auto& r : rotations)
        if (r.steps < Rotation::kMinSteps || r.steps > Rotation::kMaxSteps)
            throw std::invalid_argument("rotation steps out of range");
}

void PhysParams::validate() const {
    if (ini < Duration::zero() || msr < Duration::zero() || sqg < Duration::zero() || pmg < Duration::zero())
        throw std::invalid_argument("command durations must be non-negative");
    if (attempt <= Duration::zero()) throw std::invalid_argument("attempt duration must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
    if (sync_timeout <= Duration::zero()) throw std::invalid_argument("sync timeout must be positive");
    if (handshake < Duration::zero() || batch_overhead < Duration::zero())
        throw std::invalid_argument("handshake and batch overhead must be non-negative");
}

std::string_view to_string(DevicePhase p) {
    switch (p) {
        case DevicePhase::CrCheck: return "CR_CHECK";
        case DevicePhase::AwaitCommand: return "AWAIT_COMMAND";
        case DevicePhase::EntSync: return "ENT_SYNC";
        case DevicePhase::EntAttempting: return "ENT_ATTEMPTING";
        case DevicePhase::ProtectedIdle: return "PROTECTED_IDLE";
    }
    return "?";
}

void QubitRegister::init(Qubit q, SimTime t) {
    Matrix2c zero = Matrix2c::Zero();
    zero(0, 0) = 1.0;
    rho_ = replace_qubit(rho_, q, zero);
    live_[idx(q)] = true;
    touched_[idx(q)] = t;
}

void QubitRegister::set_pair(const DensityMatrix& rho, SimTime t) {
    rho_ = rho;
    live_[0] = live_[1] = true;
    touched_[0] = touched_[1] = t;
}

void QubitRegister::release(Qubit q) {
    if (!live_[idx(q)]) return;
    live_[idx(q)] = false;
    for (auto& h : hooks_) h(q);
}

DeviceController::DeviceController(Qubit node, const PhysParams& phys, const NoiseParams& noise,
                                   QubitRegister& reg, RngStreams& rngs, Trace* trace)
    : node_(node),
      phys_(phys),
      noise_(noise),
      reg_(reg),
      charge_rng_(rngs.stream("charge." + std::string(to_string(node)))),
      cr_rng_(rngs.stream("cr." + std::string(to_string(node)))),
      measure_rng_(rngs.stream("measure." + std::string(to_string(node)))),
      readout_rng_(rngs.stream("readout." + std::string(to_string(node)))),
      trace_(trace) {}

void DeviceController::set_phase(DevicePhase p, SimTime t) {
    if (p == phase_) return;
    if (trace_ && trace_->enabled(TraceLevel::Full))
        trace_->emit(TraceLevel::Full, t, name(), "PHASE",
                     {{"from", to_string(phase_)}, {"to", to_string(p)}});
    phase_ = p;
}

CrResult DeviceController::cr_check(SimTime start) {
    if (phase_ == DevicePhase::EntAttempting) throw std::logic_error("CR check during entanglement attempts");
    const ChargeParams& c = noise_.charge(node_);
    const DevicePhase resume = reg_.live(node_) ? DevicePhase::ProtectedIdle : DevicePhase::AwaitCommand;
    set_phase(DevicePhase::CrCheck, start);
    if (trace_ && trace_->enabled(TraceLevel::Full))
        trace_->emit(TraceLevel::Full, start, name(), "CR_BEGIN", {{"charge", to_string(charge_)}});

    CrResult r;
    SimTime t = start;
    for (;;) {
        ++r.tries;
        t += c.cr_try_duration;
        if (charge_ == ChargeStatus::Resonant) {
            if (cr_rng_.uniform01() < c.cr_pass_prob) break;
            continue;
        }
        // Wrong charge: the try reads zero counts and attempts a recovery.
        if (r.tries == 1) r.zero_counts_first = true;
        r.wrong_charge_time += c.cr_try_duration;
        if (charge_ == ChargeStatus::WrongCharge)
            charge_ = step_charge(charge_, node_, ChargeEvent::CrTry, noise_, charge_rng_.uniform01());
        if (charge_ == ChargeStatus::LongOutage) {
            const Duration outage = charge_rng_.uniform_duration(c.outage_min, c.outage_max);
            if (trace_ && trace_->enabled(TraceLevel::Link))
                trace_->emit(TraceLevel::Link, t, name(), "LONG_OUTAGE", {{"duration_ns", outage.count()}});
            t += outage;
            r.wrong_charge_time += outage;
            r.long_outage = true;
            charge_ = ChargeStatus::Resonant;
        }
    }
    r.elapsed = t - start;
    if (trace_ && trace_->enabled(TraceLevel::Full))
        trace_->emit(TraceLevel::Full, t, name(), "CR_END",
                     {{"tries", r.tries}, {"zero_counts_first", r.zero_counts_first}, {"elapsed_ns", r.elapsed.count()}});
    set_phase(resume, t);
    return r;
}

void DeviceController::apply_protected_decay(SimTime now) {
    if (noise_.protected_decay_rate <= 0.0 || !reg_.live(node_)) return;
    const double dt = std::chrono::duration<double>(now - reg_.touched(node_)).count();
    if (dt > 0.0) {
        const double p = 1.0 - std::exp(-noise_.protected_decay_rate * dt);
        reg_.update(depolarize_qubit(reg_.state(), node_, std::clamp(p, 0.0, 1.0)));
    }
    reg_.touch(node_, now);
}

Outcome DeviceController::fail(SimTime now, const Command& cmd, const std::string& why) {
    if (trace_ && trace_->enabled(TraceLevel::Commands))
        trace_->emit(TraceLevel::Commands, now, name(), "OUTCOME",
                     {{"verb", to_string(cmd.verb)}, {"code", to_string(OutcomeCode::HARDWARE_FAILURE)},
                      {"code_id", static_cast<int>(OutcomeCode::HARDWARE_FAILURE)}, {"reason", why}});
    return {OutcomeCode::HARDWARE_FAILURE, Duration::zero(), std::nullopt, std::nullopt};
}

int DeviceController::measure_with_pmg(SimTime t) {
    if (!reg_.live(node_)) throw std::logic_error("measurement without a live qubit");
    DensityMatrix rho = reg_.state();
    for (const auto& r : pmg_) rho = apply_local_rotation(rho, node_, r);
    pmg_.clear();
    const auto m = measure_qubit(rho, node_, MeasBasis(Axis::Z, +1), measure_rng_.uniform01());
    reg_.update(m.state);
    const auto& ro = noise_.readout(node_);
    const int reported = apply_readout_error(m.bit, ro.f0, ro.f1, readout_rng_.uniform01());
    reg_.touch(node_, t);
    reg_.release(node_);
    set_phase(DevicePhase::AwaitCommand, t);
    return reported;
}

Outcome DeviceController::execute(const Command& cmd, SimTime now) {
    cmd.validate();
    if (trace_) {
        json j = {{"verb", to_string(cmd.verb)}, {"verb_id", static_cast<int>(cmd.verb)}};
        if (!cmd.rotations.empty()) {
            json rs = json::array();
            for (const auto& r : cmd.rotations) rs.push_back({{"axis", to_string(r.axis)}, {"steps", r.steps}});
            j["rotations"] = rs;
        }
        trace_->emit(TraceLevel::Commands, now, name(), "CMD", j);
    }
    Outcome out;
    switch (cmd.verb) {
        case Verb::INI:
            reg_.init(node_, now + phys_.ini);
            set_phase(DevicePhase::ProtectedIdle, now + phys_.ini);
            out = {OutcomeCode::SUCCESS, phys_.ini, std::nullopt, std::nullopt};
            break;
        case Verb::MSR: {
            if (!reg_.live(node_)) return fail(now, cmd, "no live qubit");
            apply_protected_decay(now);
            const int bit = measure_with_pmg(now + phys_.msr);
            out = {bit ? OutcomeCode::SUCCESS_1 : OutcomeCode::SUCCESS_0, phys_.msr, std::nullopt, bit};
            break;
        }
        case Verb::SQG: {
            if (!reg_.live(node_)) return fail(now, cmd, "no live qubit");
            const Rotation& r = cmd.rotations.front();
            if (phys_.hardware_z && r.axis == Axis::Z) return fail(now, cmd, "Z-axis gate rejected");
            apply_protected_decay(now);
            reg_.update(apply_local_rotation(reg_.state(), node_, r));
            reg_.touch(node_, now + phys_.sqg);
            out = {OutcomeCode::SUCCESS, phys_.sqg, std::nullopt, std::nullopt};
            break;
        }
        case Verb::PMG:
            pmg_ = cmd.rotations;
            out = {OutcomeCode::SUCCESS, phys_.pmg, std::nullopt, std::nullopt};
            break;
        case Verb::ENT:
        case Verb::ENM:
            throw std::logic_error("ENT/ENM are executed by the heralding protocol");
    }
    if (trace_ && trace_->enabled(TraceLevel::Commands))
        trace_->emit(TraceLevel::Commands, now + out.elapsed, name(), "OUTCOME",
                     {{"verb", to_string(cmd.verb)}, {"code", to_string(out.code)},
                      {"code_id", static_cast<int>(out.code)}});
    return out;
}

bool DeviceController::complete_batch(SimTime t) {
    const ChargeStatus before = charge_;
    charge_ = step_charge(charge_, node_, ChargeEvent::BatchCompleted, noise_, charge_rng_.uniform01());
    const bool lost = before == ChargeStatus::Resonant && charge_ != ChargeStatus::Resonant;
    if (lost && trace_) trace_->emit(TraceLevel::Full, t, name(), "CHARGE_LOST", json::object());
    return lost;
}

BatchDraw draw_batch(double p_succ, int batch_size, double u) {
    if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
    if (p_succ <= 0.0) return {false, batch_size};
    if (p_succ >= 1.0) return {true, 1};
    u = 1.0 - u;  // (0, 1]
    const double k = 1.0 + std::floor(std::log(u) / std::log1p(-p_succ));
    if (k > static_cast<double>(batch_size)) return {false, batch_size};
    return {true, static_cast<int>(k)};
}

SyncResolution resolve_sync(std::optional<SimTime> c, std::optional<SimTime> s, Duration timeout) {
    if (!c && !s) throw std::logic_error("resolve_sync with no announcing node");
    if (!c) return {false, *s + timeout, Qubit::Server};
    if (!s) return {false, *c + timeout, Qubit::Client};
    const bool client_first = *c <= *s;
    const SimTime early = client_first ? *c : *s;
    const SimTime late = client_first ? *s : *c;
    if (late - early <= timeout) return {true, late, std::nullopt};
    return {false, early + timeout, client_first ? Qubit::Client : Qubit::Server};
}

PhysicalLayer::PhysicalLayer(const PhysParams& phys, const NoiseParams& noise, RngStreams& rngs, Trace* trace)
    : phys_(phys),
      noise_(noise),
      trace_(trace),
      client_(Qubit::Client, phys_, noise_, reg_, rngs, trace),
      server_(Qubit::Server, phys_, noise_, reg_, rngs, trace),
      herald_rng_(rngs.stream("herald")) {
    phys_.validate();
    noise_.validate();
}

Outcome PhysicalLayer::execute(Qubit node, const Command& cmd, SimTime now) {
    if (cmd.verb != Verb::ENT && cmd.verb != Verb::ENM) return device(node).execute(cmd, now);
    std::optional<EntCall> call = EntCall{cmd, now};
    auto r = node == Qubit::Client ? entangle(call, std::nullopt, DeliveredModel{}, 0.0)
                                   : entangle(std::nullopt, call, DeliveredModel{}, 0.0);
    return *r.side(node);
}

EntangleResult PhysicalLayer::entangle(std::optional<EntCall> client, std::optional<EntCall> server,
                                       const DeliveredModel& model, double p_succ) {
    EntangleResult r;
    std::optional<EntCall>* calls[2] = {&client, &server};
    const Qubit nodes[2] = {Qubit::Client, Qubit::Server};

    for (int i = 0; i < 2; ++i) {
        auto& call = *calls[i];
        if (!call) continue;
        call->cmd.validate();
        if (call->cmd.verb != Verb::ENT && call->cmd.verb != Verb::ENM)
            throw std::invalid_argument("entangle expects ENT or ENM commands");
        if (trace_ && trace_->enabled(TraceLevel::Commands))
            trace_->emit(TraceLevel::Commands, call->ready, to_string(nodes[i]), "CMD",
                         {{"verb", to_string(call->cmd.verb)}, {"verb_id", static_cast<int>(call->cmd.verb)},
                          {"tag", call->cmd.tag}});
    }

    // A node still holding a live qubit cannot start a new attempt.
    bool hw_fail = false;
    for (int i = 0; i < 2; ++i) {
        auto& call = *calls[i];
        if (call && reg_.live(nodes[i])) {
            r.side(nodes[i]) = Outcome{OutcomeCode::HARDWARE_FAILURE, Duration::zero(), std::nullopt, std::nullopt};
            r.done(nodes[i]) = call->ready;
            hw_fail = true;
        }
    }
    if (hw_fail) {
        for (int i = 0; i < 2; ++i)
            if (r.side(nodes[i]) && trace_ && trace_->enabled(TraceLevel::Commands))
                trace_->emit(TraceLevel::Commands, r.done(nodes[i]), to_string(nodes[i]), "OUTCOME",
                             {{"verb", to_string((*calls[i])->cmd.verb)}, {"code", "HARDWARE_FAILURE"},
                              {"code_id", static_cast<int>(OutcomeCode::HARDWARE_FAILURE)},
                              {"reason", "live qubit present"}});
        return r;
    }

    for (int i = 0; i < 2; ++i) {
        auto& call = *calls[i];
        if (!call) continue;
        device(nodes[i]).set_phase(DevicePhase::EntSync, call->ready);
        if (trace_ && trace_->enabled(TraceLevel::Full))
            trace_->emit(TraceLevel::Full, call->ready, to_string(nodes[i]), "SYNC_READY", {{"tag", call->cmd.tag}});
    }

    const auto sync = resolve_sync(client ? std::optional<SimTime>(client->ready) : std::nullopt,
                                   server ? std::optional<SimTime>(server->ready) : std::nullopt,
                                   phys_.sync_timeout);
    if (!sync.synced) {
        const Qubit f = *sync.failed;
        r.side(f) = Outcome{OutcomeCode::ENT_SYNC_FAILURE, phys_.sync_timeout, std::nullopt, std::nullopt};
        r.done(f) = sync.at;
        device(f).set_phase(DevicePhase::AwaitCommand, sync.at);
        if (trace_ && trace_->enabled(TraceLevel::Commands)) {
            trace_->emit(TraceLevel::Full, sync.at, to_string(f), "SYNC_TIMEOUT", json::object());
            trace_->emit(TraceLevel::Commands, sync.at, to_string(f), "OUTCOME",
                         {{"verb", to_string((*calls[f == Qubit::Client ? 0 : 1])->cmd.verb)},
                          {"code", "ENT_SYNC_FAILURE"}, {"code_id", static_cast<int>(OutcomeCode::ENT_SYNC_FAILURE)}});
        }
        return r;
    }

    const std::uint64_t sync_id = ++sync_counter_;
    const SimTime handshake_end = sync.at + phys_.handshake;
    for (int i = 0; i < 2; ++i)
        if (trace_ && trace_->enabled(TraceLevel::Full))
            trace_->emit(TraceLevel::Full, handshake_end, to_string(nodes[i]), "SYNC_OK", {{"sync", sync_id}});

    auto finish = [&](OutcomeCode code_c, OutcomeCode code_s, SimTime end, std::optional<int> bit_c,
                      std::optional<int> bit_s) {
        const OutcomeCode codes[2] = {code_c, code_s};
        const std::optional<int> bits[2] = {bit_c, bit_s};
        for (int i = 0; i < 2; ++i) {
            Outcome o{codes[i], end - (*calls[i])->ready, r.heralded, bits[i]};
            if (!is_success(codes[i])) o.heralded.reset();
            r.side(nodes[i]) = o;
            r.done(nodes[i]) = end;
            if (trace_ && trace_->enabled(TraceLevel::Commands)) {
                json j = {{"verb", to_string((*calls[i])->cmd.verb)}, {"code", to_string(codes[i])},
                          {"code_id", static_cast<int>(codes[i])}, {"elapsed_ns", o.elapsed.count()}};
                if (r.batch_ran) j["batch"] = r.batch_id;
                trace_->emit(TraceLevel::Commands, end, to_string(nodes[i]), "OUTCOME", j);
            }
        }
    };

    if (phys_.mismatch_check && client->cmd.tag != server->cmd.tag) {
        client_.set_phase(DevicePhase::AwaitCommand, handshake_end);
        server_.set_phase(DevicePhase::AwaitCommand, handshake_end);
        finish(OutcomeCode::MISMATCH_FAILURE, OutcomeCode::MISMATCH_FAILURE, handshake_end, std::nullopt, std::nullopt);
        return r;
    }

    r.batch_ran = true;
    r.batch_id = ++batch_counter_;
    for (int i = 0; i < 2; ++i) {
        device(nodes[i]).set_phase(DevicePhase::EntAttempting, handshake_end);
        if (trace_ && trace_->enabled(TraceLevel::Full))
            trace_->emit(TraceLevel::Full, handshake_end, to_string(nodes[i]), "BATCH_BEGIN",
                         {{"batch", r.batch_id}, {"sync", sync_id}});
    }
    const SimTime attempts_start = handshake_end + phys_.batch_overhead;
    const BatchDraw draw = draw_batch(p_succ, phys_.batch_size, herald_rng_.uniform01());
    r.attempts = draw.attempts;
    const SimTime end = attempts_start + phys_.attempt * draw.attempts;
    const bool lost_c = client_.complete_batch(end);
    const bool lost_s = server_.complete_batch(end);
    if (trace_)
        for (int i = 0; i < 2; ++i)
            trace_->emit(TraceLevel::Full, end, to_string(nodes[i]), "BATCH_END",
                         {{"batch", r.batch_id}, {"success", draw.success}, {"attempts", draw.attempts}});

    if (!draw.success) {
        client_.set_phase(DevicePhase::AwaitCommand, end);
        server_.set_phase(DevicePhase::AwaitCommand, end);
        finish(OutcomeCode::ENT_FAILURE, OutcomeCode::ENT_FAILURE, end, std::nullopt, std::nullopt);
        return r;
    }

    const BellState heralded =
        herald_rng_.uniform01() < noise_.psi_plus_fraction ? BellState::PsiPlus : BellState::PsiMinus;
    r.heralded = heralded;
    DensityMatrix rho = delivered_state(model, heralded);
    const bool lost[2] = {lost_c, lost_s};
    for (int i = 0; i < 2; ++i) {
        if ((*calls[i])->cmd.verb == Verb::ENT) rho = depolarize_qubit(rho, nodes[i], noise_.storage_depol(nodes[i]));
        if (lost[i]) rho = replace_qubit(rho, nodes[i], Matrix2c::Identity() / 2.0);
    }
    reg_.set_pair(rho, end);

    std::optional<int> bits[2];
    for (int i = 0; i < 2; ++i) {
        if ((*calls[i])->cmd.verb == Verb::ENM)
            bits[i] = device(nodes[i]).measure_with_pmg(end);
        else
            device(nodes[i]).set_phase(DevicePhase::ProtectedIdle, end);
    }
    finish(ent_success_code(heralded, bits[0]), ent_success_code(heralded, bits[1]), end, bits[0], bits[1]);
    return r;
}

}  // namespace qlink
