#include "qlink/link.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qlink {

using json = nlohmann::json;

std::string_view to_string(DeliveryType t) {
    switch (t) {
        case DeliveryType::K: return "K";
        case DeliveryType::M: return "M";
        case DeliveryType::R: return "R";
    }
    return "?";
}

DeliveryType parse_delivery_type(std::string_view s) {
    if (s == "K") return DeliveryType::K;
    if (s == "M") return DeliveryType::M;
    if (s == "R") return DeliveryType::R;
    throw std::invalid_argument("unknown delivery type: " + std::string(s));
}

std::string EntRequest::class_key() const {
    std::ostringstream os;
    os << app_id << ':' << std::lround(min_fidelity * 1000.0);
    return os.str();
}

void EntRequest::validate() const {
    if (num_pairs < 1) throw std::invalid_argument("num_pairs must be at least 1");
    if (!(min_fidelity > kMinRequestedFidelity - 1e-12 && min_fidelity <= kMaxRequestedFidelity + 1e-12))
        throw std::invalid_argument("min_fidelity must lie in [0.25, 0.97]");
    if (timeout <= Duration::zero()) throw std::invalid_argument("timeout must be positive");
    if (type == DeliveryType::K && (meas_basis || remote_meas_basis))
        throw std::invalid_argument("K-type requests carry no measurement basis");
    if ((type == DeliveryType::M || type == DeliveryType::R) && !meas_basis)
        throw std::invalid_argument("M/R-type requests require a measurement basis");
    if (type == DeliveryType::M && !remote_meas_basis)
        throw std::invalid_argument("M-type requests require the remote measurement basis");
    if (type == DeliveryType::R && remote_meas_basis)
        throw std::invalid_argument("R-type requests keep the remote qubit unmeasured");
    if (app_id.empty()) throw std::invalid_argument("app_id must be non-empty");
}

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    if (pos + 8 > in.size()) throw std::invalid_argument("truncated request payload");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
    pos += 8;
    return v;
}

std::uint8_t get_u8(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    if (pos >= in.size()) throw std::invalid_argument("truncated request payload");
    return in[pos++];
}

void put_basis(std::vector<std::uint8_t>& out, const std::optional<MeasBasis>& b) {
    if (!b) {
        out.push_back(0xFF);
        return;
    }
    out.push_back(static_cast<std::uint8_t>(static_cast<int>(b->axis) | (b->sign < 0 ? 0x10 : 0)));
}

std::optional<MeasBasis> get_basis(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    const auto v = get_u8(in, pos);
    if (v == 0xFF) return std::nullopt;
    if ((v & 0x0F) > 2) throw std::invalid_argument("bad basis byte");
    return MeasBasis(static_cast<Axis>(v & 0x0F), (v & 0x10) ? -1 : 1);
}

}  // namespace

// Layout (little endian): id u64 | remote u8 | type u8 | min_fidelity f64 | num_pairs u64 |
// basis u8 | remote basis u8 | timeout_ns u64 | priority u64 | app_id bytes
std::vector<std::uint8_t> encode_request(std::uint64_t id, const EntRequest& r) {
    std::vector<std::uint8_t> out;
    put_u64(out, id);
    out.push_back(static_cast<std::uint8_t>(r.remote_node));
    out.push_back(static_cast<std::uint8_t>(r.type));
    put_u64(out, std::bit_cast<std::uint64_t>(r.min_fidelity));
    put_u64(out, static_cast<std::uint64_t>(r.num_pairs));
    put_basis(out, r.meas_basis);
    put_basis(out, r.remote_meas_basis);
    put_u64(out, static_cast<std::uint64_t>(r.timeout.count()));
    put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(r.priority)));
    out.insert(out.end(), r.app_id.begin(), r.app_id.end());
    return out;
}

std::pair<std::uint64_t, EntRequest> decode_request(const std::vector<std::uint8_t>& in) {
    std::size_t pos = 0;
    EntRequest r;
    const std::uint64_t id = get_u64(in, pos);
    const auto remote = get_u8(in, pos);
    if (remote > 1) throw std::invalid_argument("bad remote node byte");
    r.remote_node = static_cast<Qubit>(remote);
    const auto type = get_u8(in, pos);
    if (type > 2) throw std::invalid_argument("bad delivery type byte");
    r.type = static_cast<DeliveryType>(type);
    r.min_fidelity = std::bit_cast<double>(get_u64(in, pos));
    r.num_pairs = static_cast<int>(get_u64(in, pos));
    r.meas_basis = get_basis(in, pos);
    r.remote_meas_basis = get_basis(in, pos);
    r.timeout = Duration(static_cast<std::int64_t>(get_u64(in, pos)));
    r.priority = static_cast<int>(static_cast<std::int64_t>(get_u64(in, pos)));
    r.app_id.assign(in.begin() + static_cast<std::ptrdiff_t>(pos), in.end());
    return {id, r};
}

std::int64_t TdmaSchedule::bin_index(SimTime t) const { return ns_of(t) / bin_duration.count(); }

SimTime TdmaSchedule::bin_start(std::int64_t bin) const { return SimTime(bin * bin_duration); }

bool TdmaSchedule::assigned(std::int64_t bin, const std::string& cls) const {
    const auto& slot = assignment[static_cast<std::size_t>(bin % static_cast<std::int64_t>(assignment.size()))];
    return std::any_of(slot.begin(), slot.end(), [&](const std::string& c) { return c == "*" || c == cls; });
}

SimTime TdmaSchedule::next_eligible(SimTime t, const std::string& cls) const {
    const std::int64_t bin_ns = bin_duration.count();
    std::int64_t b = (ns_of(t) + bin_ns - 1) / bin_ns;
    for (std::size_t i = 0; i <= assignment.size(); ++i, ++b)
        if (assigned(b, cls)) return bin_start(b);
    throw std::invalid_argument("TDMA schedule never serves class " + cls);
}

SimTime TdmaSchedule::next_issue_time(SimTime t, const std::string& cls, Duration need) const {
    for (std::size_t i = 0; i <= 2 * assignment.size() + 1; ++i) {
        const std::int64_t b = bin_index(t);
        if (assigned(b, cls) && (t + need <= bin_start(b + 1) || assigned(b + 1, cls))) return t;
        t = next_eligible(bin_start(b + 1), cls);
    }
    throw std::invalid_argument("TDMA schedule cannot fit a batch for class " + cls);
}

std::int64_t TdmaSchedule::batches_per_bin(Duration attempt_window, Duration overhead) const {
    return bin_duration.count() / (attempt_window + overhead).count();
}

void TdmaSchedule::validate(Duration max_batch) const {
    if (bin_duration <= Duration::zero()) throw std::invalid_argument("TDMA bin duration must be positive");
    if (assignment.empty()) throw std::invalid_argument("TDMA assignment must contain at least one bin");
    if (bin_duration <= max_batch)
        throw std::invalid_argument("TDMA bin duration must exceed the longest single batch");
}

std::string_view to_string(SignMode m) { return m == SignMode::Physical ? "physical" : "classical"; }

SignMode parse_sign_mode(std::string_view s) {
    if (s == "physical") return SignMode::Physical;
    if (s == "classical") return SignMode::ClassicalFlip;
    throw std::invalid_argument("unknown sign mode: " + std::string(s));
}

BasisChange basis_change(const MeasBasis& basis, SignMode mode) {
    const bool neg = basis.sign < 0;
    const int sign = (neg && mode == SignMode::Physical) ? -1 : 1;
    BasisChange bc;
    bc.invert = neg && mode == SignMode::ClassicalFlip;
    switch (basis.axis) {
        case Axis::X: bc.gates.push_back(Rotation(Axis::Y, -8 * sign)); break;
        case Axis::Y: bc.gates.push_back(Rotation(Axis::X, 8 * sign)); break;
        case Axis::Z:
            if (sign < 0) bc.gates.push_back(Rotation(Axis::X, 16));
            break;
    }
    return bc;
}

Rotation pauli_correction(BellState heralded) {
    switch (heralded) {
        case BellState::PsiPlus: return Rotation(Axis::X, 16);
        case BellState::PsiMinus: return Rotation(Axis::Y, 16);
        default: throw std::invalid_argument("Pauli correction is defined for PSI_PLUS and PSI_MINUS only");
    }
}

bool classical_flip(BellState heralded, Axis axis) {
    switch (heralded) {
        case BellState::PsiPlus: return axis != Axis::X;
        case BellState::PsiMinus: return axis != Axis::Y;
        default: throw std::invalid_argument("classical flip is defined for PSI_PLUS and PSI_MINUS only");
    }
}

LatencyReport latency_report(const std::vector<LatencyBreakdown>& records, Duration cutoff) {
    LatencyReport r;
    std::int64_t sums[4] = {0, 0, 0, 0};
    for (const auto& l : records) {
        if (l.total() > cutoff) {
            ++r.excluded;
            continue;
        }
        ++r.used;
        sums[0] += l.link_layer.count();
        sums[1] += l.cr_check.count();
        sums[2] += l.ent_generation.count();
        sums[3] += l.interface.count();
    }
    if (r.used == 0) return r;
    const double n = static_cast<double>(r.used) * 1e6;
    r.link_layer_ms = static_cast<double>(sums[0]) / n;
    r.cr_check_ms = static_cast<double>(sums[1]) / n;
    r.ent_generation_ms = static_cast<double>(sums[2]) / n;
    r.interface_ms = static_cast<double>(sums[3]) / n;
    r.total_ms = r.link_layer_ms + r.cr_check_ms + r.ent_generation_ms + r.interface_ms;
    return r;
}

struct LinkLayer::Active {
    std::uint64_t id = 0;
    EntRequest req;
    Qubit origin = Qubit::Client;
    std::string tag;
    std::string cls;
    CompletionHandler done;
    SimTime submitted{};
    bool eligible = false;
    bool peer_has = false;
    bool forward_lost = false;
    bool awaiting_release = false;
    DeliveredModel model;
    double p_succ = 0.0;
    int delivered = 0;
    SimTime pair_created{};
    SimTime cursor[2]{};
    LatencyBreakdown lat[2];
    std::optional<SimTime> ready[2];
    bool present[2]{false, false};
    std::vector<std::size_t> origin_records;

    bool measures(Qubit n) const {
        if (req.type == DeliveryType::M) return true;
        return req.type == DeliveryType::R && n == origin;
    }
    std::optional<MeasBasis> basis(Qubit n) const { return n == origin ? req.meas_basis : req.remote_meas_basis; }
};

LinkLayer::LinkLayer(EventQueue& events, PhysicalLayer& phys, ClassicalChannel& channel, LinkParams params,
                     Trace* trace)
    : events_(events), phys_(phys), channel_(channel), params_(std::move(params)), trace_(trace) {
    params_.schedule.validate(phys_.params().max_batch_duration());
    if (params_.interface_round_trip < Duration::zero())
        throw std::invalid_argument("interface round trip must be non-negative");
    phys_.qubits().on_release([this](Qubit) {
        events_.schedule(events_.now(), [this]() {
            if (active_ && active_->awaiting_release) {
                if (!phys_.qubits().live(Qubit::Client) && !phys_.qubits().live(Qubit::Server)) {
                    active_->awaiting_release = false;
                    begin_pair(*active_);
                }
            } else if (waiting_release_) {
                waiting_release_ = false;
                try_start();
            }
        });
    });
}

std::uint64_t LinkLayer::submit(const EntRequest& req, CompletionHandler on_done) {
    req.validate();
    const double target = fidelity_to_phys_target(req.min_fidelity);
    const FidelityRow row = phys_.noise().fid_table.lookup(target);

    auto a = std::make_shared<Active>();
    a->id = ++next_request_id_;
    a->req = req;
    a->origin = req.origin();
    a->tag = "req-" + std::to_string(a->id);
    a->cls = req.class_key();
    a->done = std::move(on_done);
    a->submitted = events_.now();
    a->model = row.model;
    a->p_succ = phys_.noise().success_probability(target);

    if (trace_ && trace_->enabled(TraceLevel::Link))
        trace_->emit(TraceLevel::Link, a->submitted, to_string(a->origin), "CREATE",
                     {{"request", a->id}, {"type", to_string(req.type)}, {"min_fidelity", req.min_fidelity},
                      {"phys_target", target}, {"class", a->cls}, {"num_pairs", req.num_pairs}});

    Message fwd{Message::Type::ForwardCreate, encode_request(a->id, req)};
    std::weak_ptr<Active> weak = a;
    const auto arrival =
        channel_.send(static_cast<Endpoint>(a->origin), fwd, [this, weak](const Message& m) {
            auto decoded = decode_request(m.payload);
            auto sp = weak.lock();
            if (!sp || decoded.first != sp->id) return;
            sp->peer_has = true;
            if (trace_ && trace_->enabled(TraceLevel::Link))
                trace_->emit(TraceLevel::Link, events_.now(), to_string(sp->req.remote_node), "FORWARD_RECV",
                             {{"request", sp->id}});
            try_start();
        });
    a->forward_lost = !arrival.has_value();
    if (trace_ && a->forward_lost)
        trace_->emit(TraceLevel::Link, a->submitted, to_string(a->origin), "FORWARD_LOST", {{"request", a->id}});

    const SimTime eligible = params_.schedule.next_eligible(a->submitted, a->cls);
    events_.schedule(eligible, [this, weak]() {
        if (auto sp = weak.lock()) {
            sp->eligible = true;
            if (trace_ && trace_->enabled(TraceLevel::Link))
                trace_->emit(TraceLevel::Link, events_.now(), to_string(sp->origin), "ELIGIBLE", {{"request", sp->id}});
            try_start();
        }
    });
    queue_.push_back(std::move(a));
    return queue_.back()->id;
}

void LinkLayer::try_start() {
    if (active_ || queue_.empty()) return;
    auto& front = queue_.front();
    if (!front->eligible) return;
    if (!front->peer_has && !front->forward_lost) return;
    if (phys_.qubits().live(Qubit::Client) || phys_.qubits().live(Qubit::Server)) {
        waiting_release_ = true;
        return;
    }
    const SimTime now = events_.now();
    if (!params_.schedule.assigned(params_.schedule.bin_index(now), front->cls)) {
        front->eligible = false;
        std::weak_ptr<Active> weak = front;
        events_.schedule(params_.schedule.next_eligible(now, front->cls), [this, weak]() {
            if (auto sp = weak.lock()) {
                sp->eligible = true;
                try_start();
            }
        });
        return;
    }
    active_ = front;
    queue_.pop_front();
    active_->pair_created = active_->submitted;
    if (trace_ && trace_->enabled(TraceLevel::Link))
        trace_->emit(TraceLevel::Link, now, to_string(active_->origin), "START",
                     {{"request", active_->id}, {"peer_present", active_->peer_has}});
    begin_pair(*active_);
}

void LinkLayer::begin_pair(Active& a) {
    const SimTime now = events_.now();
    const Qubit peer = a.req.remote_node;
    a.present[idx(a.origin)] = true;
    a.present[idx(peer)] = a.peer_has;
    for (Qubit n : {Qubit::Client, Qubit::Server}) {
        a.cursor[idx(n)] = now;
        a.lat[idx(n)] = LatencyBreakdown{};
        a.lat[idx(n)].link_layer = now - a.pair_created;
        a.ready[idx(n)].reset();
    }
    for (Qubit n : {Qubit::Client, Qubit::Server}) {
        if (!a.present[idx(n)]) continue;
        if (a.measures(n)) issue_pmg(a, n);
        prepare_node(a, n);
    }
    run_cycle();
}

void LinkLayer::issue_pmg(Active& a, Qubit n) {
    const BasisChange bc = basis_change(*a.basis(n), params_.sign_mode);
    const Outcome out = phys_.execute(n, Command::pmg(bc.gates), a.cursor[idx(n)]);
    if (out.code != OutcomeCode::SUCCESS) throw std::logic_error("PMG command failed");
    a.lat[idx(n)].interface += params_.interface_round_trip;
    a.lat[idx(n)].ent_generation += out.elapsed;
    a.cursor[idx(n)] += params_.interface_round_trip + out.elapsed;
}

void LinkLayer::resolve_charge(Qubit n, bool zero_counts) {
    for (std::size_t i : pending_charge_[idx(n)]) {
        auto& rec = records_[idx(n)][i];
        rec.charge_flag = zero_counts;
        rec.charge_resolved = true;
        if (trace_ && zero_counts)
            trace_->emit(TraceLevel::Link, rec.delivered_at, to_string(n), "CHARGE_FLAG", {{"ent_seq", rec.ent_id.seq}});
    }
    pending_charge_[idx(n)].clear();
}

void LinkLayer::prepare_node(Active& a, Qubit n) {
    const int i = idx(n);
    const CrResult cr = phys_.device(n).cr_check(a.cursor[i]);
    resolve_charge(n, cr.zero_counts_first);
    a.lat[i].cr_check += cr.elapsed;
    a.cursor[i] += cr.elapsed;

    const SimTime issue = params_.schedule.next_issue_time(a.cursor[i], a.cls, phys_.params().max_batch_duration());
    a.lat[i].link_layer += issue - a.cursor[i];
    a.cursor[i] = issue;
    if (trace_ && trace_->enabled(TraceLevel::Commands))
        trace_->emit(TraceLevel::Commands, issue, to_string(n), "ENT_ISSUE",
                     {{"request", a.id}, {"class", a.cls}, {"bin", params_.schedule.bin_index(issue)},
                      {"verb", a.measures(n) ? "ENM" : "ENT"}});

    const Duration half = params_.interface_round_trip / 2;
    a.lat[i].interface += half;
    a.cursor[i] += half;
    a.ready[i] = a.cursor[i];
}

bool LinkLayer::timed_out(const Active& a, SimTime t) const { return t - a.submitted >= a.req.timeout; }

void LinkLayer::run_cycle() {
    Active& a = *active_;
    const Qubit origin = a.origin;
    const Duration half = params_.interface_round_trip - params_.interface_round_trip / 2;

    for (;;) {
        if (timed_out(a, a.cursor[idx(origin)])) {
            events_.schedule(a.cursor[idx(origin)], [this]() { finish(std::nullopt, true); });
            return;
        }
        std::optional<EntCall> calls[2];
        for (Qubit n : {Qubit::Client, Qubit::Server}) {
            if (!a.present[idx(n)]) continue;
            std::string tag = a.tag;
            calls[idx(n)] = EntCall{a.measures(n) ? Command::enm(tag) : Command::ent(tag), *a.ready[idx(n)]};
        }
        EntangleResult res = phys_.entangle(calls[0], calls[1], a.model, a.p_succ);

        std::optional<OutcomeCode> abort_code;
        std::vector<Qubit> resync;
        for (Qubit n : {Qubit::Client, Qubit::Server}) {
            auto& o = res.side(n);
            if (!a.present[idx(n)] || !o) continue;
            a.lat[idx(n)].ent_generation += o->elapsed;
            a.lat[idx(n)].interface += half;
            a.cursor[idx(n)] = res.done(n) + half;
            a.ready[idx(n)].reset();
            if (o->code == OutcomeCode::MISMATCH_FAILURE || o->code == OutcomeCode::HARDWARE_FAILURE)
                abort_code = o->code;
            else if (o->code == OutcomeCode::ENT_SYNC_FAILURE)
                resync.push_back(n);
        }

        if (abort_code) {
            const SimTime t = std::max(a.cursor[0], a.cursor[1]);
            const OutcomeCode code = *abort_code;
            events_.schedule(t, [this, code]() { finish(code, false); });
            return;
        }
        if (res.batch_ran) {
            const SimTime t = a.cursor[idx(origin)];
            if (res.heralded) {
                events_.schedule(t, [this, res]() { deliver(res); });
            } else {
                events_.schedule(t, [this]() {
                    Active& act = *active_;
                    if (timed_out(act, events_.now())) {
                        finish(std::nullopt, true);
                        return;
                    }
                    for (Qubit n : {Qubit::Client, Qubit::Server})
                        if (act.present[idx(n)]) prepare_node(act, n);
                    run_cycle();
                });
            }
            return;
        }
        for (Qubit n : resync) prepare_node(a, n);
    }
}

void LinkLayer::deliver(EntangleResult res) {
    Active& a = *active_;
    const SimTime now = events_.now();
    const BellState heralded = *res.heralded;
    std::size_t indices[2] = {0, 0};

    for (Qubit n : {Qubit::Client, Qubit::Server}) {
        const int i = idx(n);
        DeliveryRecord rec;
        rec.node = n;
        rec.request_id = a.id;
        rec.ent_id = EntId{params_.pair_id, ++ent_seq_[i]};
        rec.type = a.req.type;
        rec.raw_heralded = heralded;
        rec.delivered_bell = BellState::PhiPlus;
        rec.created_at = a.pair_created;
        rec.delivered_at = now;
        rec.latency = a.lat[i];
        if (rec.created_at + rec.latency.total() != rec.delivered_at)
            throw std::logic_error("latency buckets do not sum to the delivery latency");
        if (a.measures(n)) {
            const MeasBasis b = *a.basis(n);
            const auto& o = res.side(n);
            bool inv = basis_change(b, params_.sign_mode).invert;
            if (n == a.origin) inv ^= classical_flip(heralded, b.axis);
            rec.meas_basis = b;
            rec.meas_outcome = *o->bit ^ static_cast<int>(inv);
            rec.outcome_inverted = inv;
        }
        records_[i].push_back(rec);
        indices[i] = records_[i].size() - 1;
        pending_charge_[i].push_back(indices[i]);
        if (trace_ && trace_->enabled(TraceLevel::Link))
            trace_->emit(TraceLevel::Link, now, to_string(n), "DELIVER",
                         {{"request", a.id}, {"ent_seq", rec.ent_id.seq}, {"pair_id", rec.ent_id.pair_id},
                          {"heralded", to_string(heralded)}, {"latency_ns", rec.latency.total().count()}});
    }
    if (records_[0].back().ent_id != records_[1].back().ent_id)
        throw std::logic_error("nodes disagree on the entanglement ID");

    const Qubit origin = a.origin;
    const Qubit peer = a.req.remote_node;
    a.origin_records.push_back(indices[idx(origin)]);
    ++a.delivered;

    SimTime origin_ready = now;
    if (a.req.type == DeliveryType::K) {
        const Rotation fix = pauli_correction(heralded);
        const Outcome out = phys_.execute(origin, Command::sqg(fix), now);
        if (out.code != OutcomeCode::SUCCESS) throw std::logic_error("Pauli correction gate failed");
        origin_ready = now + params_.interface_round_trip + out.elapsed;
        if (trace_ && trace_->enabled(TraceLevel::Link))
            trace_->emit(TraceLevel::Link, now, to_string(origin), "CORRECTION",
                         {{"axis", to_string(fix.axis)}, {"steps", fix.steps}, {"ent_seq", ent_seq_[idx(origin)]}});
    } else if (trace_) {
        trace_->emit(TraceLevel::Link, now, to_string(origin), "CLASSICAL_CORRECTION",
                     {{"flip", records_[idx(origin)].back().outcome_inverted}, {"ent_seq", ent_seq_[idx(origin)]}});
    }

    const std::size_t peer_idx = indices[idx(peer)];
    const std::size_t origin_idx = indices[idx(origin)];
    events_.schedule(now, [this, peer, peer_idx]() {
        if (on_delivery_) on_delivery_(peer, peer_idx);
    });
    events_.schedule(origin_ready, [this, origin, origin_idx]() {
        if (on_delivery_) on_delivery_(origin, origin_idx);
        Active& act = *active_;
        if (act.delivered >= act.req.num_pairs) {
            finish(std::nullopt, false);
            return;
        }
        act.pair_created = records_[idx(origin)][origin_idx].delivered_at;
        if (phys_.qubits().live(Qubit::Client) || phys_.qubits().live(Qubit::Server))
            act.awaiting_release = true;
        else
            begin_pair(act);
    });
}

void LinkLayer::finish(std::optional<OutcomeCode> error, bool timed_out) {
    auto a = active_;
    active_.reset();
    for (Qubit n : {Qubit::Client, Qubit::Server})
        if (phys_.device(n).phase() != DevicePhase::ProtectedIdle)
            phys_.device(n).set_phase(DevicePhase::AwaitCommand, events_.now());
    RequestResult result{a->id, a->origin_records, timed_out, error};
    if (trace_) {
        json j = {{"request", a->id}, {"delivered", a->delivered}, {"timed_out", timed_out}};
        if (error) j["error"] = to_string(*error);
        trace_->emit(TraceLevel::Link, events_.now(), to_string(a->origin), "REQUEST_DONE", j);
    }
    if (a->done) a->done(result);
    events_.schedule(events_.now(), [this]() { try_start(); });
}

void LinkLayer::finalize(SimTime t) {
    for (Qubit n : {Qubit::Client, Qubit::Server}) {
        if (pending_charge_[idx(n)].empty()) continue;
        const CrResult cr = phys_.device(n).cr_check(t);
        resolve_charge(n, cr.zero_counts_first);
    }
}

}  // namespace qlink
