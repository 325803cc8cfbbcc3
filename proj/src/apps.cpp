#include "qlink/apps.hpp"

#include <deque>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace qlink {

using json = nlohmann::json;

Simulation::Simulation(const SimConfig& cfg)
    : cfg_(cfg),
      events(),
      rngs(cfg.seed),
      trace(cfg.trace_level),
      channel(events, cfg.channel, rngs.stream("channel")),
      phys(cfg_.phys, cfg_.noise, rngs, &trace),
      link(events, phys, channel, cfg_.link, &trace) {
    cfg_.phys.validate();
    cfg_.noise.validate();
    cfg_.channel.validate();
}

// ---------------------------------------------------------------- rows

void to_json(json& j, const OutcomeRow& r) {
    j = json{{"experiment", r.experiment},
             {"rep", r.rep},
             {"requested_fidelity", r.requested_fidelity},
             {"setting", r.setting_index},
             {"type", to_string(r.type)},
             {"client_basis", to_string(r.client_basis)},
             {"server_basis", to_string(r.server_basis)},
             {"client_bit", r.client_bit},
             {"server_bit", r.server_bit},
             {"client_inverted", r.client_inverted},
             {"server_inverted", r.server_inverted},
             {"client_charge_flag", r.client_charge_flag},
             {"server_charge_flag", r.server_charge_flag},
             {"heralded", to_string(r.heralded)},
             {"ent_seq", r.ent_seq},
             {"created_ns", r.created_ns},
             {"delivered_ns", r.delivered_ns},
             {"latency_ns",
              {{"link_layer", r.latency.link_layer.count()},
               {"cr_check", r.latency.cr_check.count()},
               {"ent_generation", r.latency.ent_generation.count()},
               {"interface", r.latency.interface.count()}}}};
    if (!r.client_store.empty()) j["client_store"] = r.client_store;
    if (!r.server_store.empty()) j["server_store"] = r.server_store;
}

void from_json(const json& j, OutcomeRow& r) {
    r.experiment = j.at("experiment").get<std::string>();
    r.rep = j.at("rep").get<int>();
    r.requested_fidelity = j.at("requested_fidelity").get<double>();
    r.setting_index = j.at("setting").get<std::size_t>();
    r.type = parse_delivery_type(j.at("type").get<std::string>());
    r.client_basis = parse_basis(j.at("client_basis").get<std::string>());
    r.server_basis = parse_basis(j.at("server_basis").get<std::string>());
    r.client_bit = j.at("client_bit").get<int>();
    r.server_bit = j.at("server_bit").get<int>();
    r.client_inverted = j.value("client_inverted", false);
    r.server_inverted = j.value("server_inverted", false);
    r.client_charge_flag = j.at("client_charge_flag").get<bool>();
    r.server_charge_flag = j.at("server_charge_flag").get<bool>();
    r.heralded = parse_bell_state(j.at("heralded").get<std::string>());
    r.ent_seq = j.at("ent_seq").get<std::uint64_t>();
    r.created_ns = j.at("created_ns").get<std::int64_t>();
    r.delivered_ns = j.at("delivered_ns").get<std::int64_t>();
    const auto& l = j.at("latency_ns");
    r.latency.link_layer = Duration(l.at("link_layer").get<std::int64_t>());
    r.latency.cr_check = Duration(l.at("cr_check").get<std::int64_t>());
    r.latency.ent_generation = Duration(l.at("ent_generation").get<std::int64_t>());
    r.latency.interface = Duration(l.at("interface").get<std::int64_t>());
    if (auto it = j.find("client_store"); it != j.end()) r.client_store = it->get<std::map<std::string, int>>();
    if (auto it = j.find("server_store"); it != j.end()) r.server_store = it->get<std::map<std::string, int>>();
    if ((r.client_bit != 0 && r.client_bit != 1) || (r.server_bit != 0 && r.server_bit != 1))
        throw std::invalid_argument("outcome bits must be 0 or 1");
}

void write_outcomes_jsonl(std::ostream& os, const std::vector<OutcomeRow>& rows, const json& header) {
    json h = header;
    h["schema"] = "qlink.outcomes";
    h["schema_version"] = kOutcomeSchemaVersion;
    h["rows"] = rows.size();
    os << h.dump() << '\n';
    for (const auto& r : rows) os << json(r).dump() << '\n';
}

std::vector<OutcomeRow> read_outcomes_jsonl(std::istream& is, json* header) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("outcome file is empty");
    json h = json::parse(line);
    if (h.value("schema", "") != "qlink.outcomes")
        throw std::invalid_argument("outcome file has no qlink.outcomes header");
    if (h.value("schema_version", 0) != kOutcomeSchemaVersion)
        throw std::invalid_argument("unsupported outcome schema version");
    std::vector<OutcomeRow> rows;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            rows.push_back(json::parse(line).get<OutcomeRow>());
        } catch (const std::exception& e) {
            throw std::invalid_argument("outcome line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (h.contains("rows") && h["rows"].get<std::size_t>() != rows.size())
        throw std::invalid_argument("outcome file is truncated");
    if (header) *header = std::move(h);
    return rows;
}

// ---------------------------------------------------------------- runner

struct ProgramRunner::Actor {
    Qubit node = Qubit::Client;
    const std::vector<Instruction>* code = nullptr;
    std::size_t pc = 0;
    bool waiting_recv = false;
    bool done = false;
    std::deque<std::size_t> inbox;
    std::set<std::uint64_t> own_requests;
    std::optional<int> last_bit;
    bool pending_invert = false;
    bool last_inverted = false;
    MeasBasis basis{Axis::Z, 1};
    std::map<std::string, int> store;
};

struct ProgramRunner::ShotState {
    std::size_t index = 0;
    int rep = 0;
    std::size_t fid_index = 0;
    std::size_t setting_index = 0;
    std::optional<std::size_t> last_origin_record[2];
};

ProgramRunner::ProgramRunner(Simulation& sim, AppProgram program) : sim_(sim), prog_(std::move(program)) {
    prog_.validate();
    for (Qubit q : {Qubit::Client, Qubit::Server}) {
        auto a = std::make_unique<Actor>();
        a->node = q;
        a->code = q == Qubit::Client ? &prog_.client : &prog_.server;
        actors_[static_cast<int>(q)] = std::move(a);
    }
}

ProgramRunner::~ProgramRunner() { sim_.link.set_delivery_handler({}); }

void ProgramRunner::fail(const Actor& a, const std::string& msg, std::optional<OutcomeCode> code) {
    std::ostringstream os;
    os << prog_.name << " shot " << (shot_ ? shot_->index : 0) << ", " << to_string(a.node) << " instruction "
       << a.pc << ": " << msg;
    if (code) os << " (" << to_string(*code) << ')';
    throw ProgramError(os.str(), code);
}

std::vector<OutcomeRow> ProgramRunner::run() {
    rows_.clear();
    for (auto& v : row_records_) v.clear();
    sim_.link.set_delivery_handler([this](Qubit n, std::size_t rec) { on_delivery(n, rec); });
    if (prog_.shots() > 0) sim_.events.schedule(sim_.events.now(), [this]() { start_shot(0); });
    sim_.events.run();
    if (rows_.size() != prog_.shots())
        throw std::logic_error(prog_.name + ": simulation stalled after " + std::to_string(rows_.size()) + " of " +
                               std::to_string(prog_.shots()) + " shots");
    sim_.link.finalize(sim_.events.now());
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        for (Qubit q : {Qubit::Client, Qubit::Server}) {
            bool flag = false;
            for (std::size_t rec : row_records_[static_cast<int>(q)][i])
                flag = flag || sim_.link.records(q)[rec].charge_flag;
            (q == Qubit::Client ? rows_[i].client_charge_flag : rows_[i].server_charge_flag) = flag;
        }
    }
    return std::move(rows_);
}

void ProgramRunner::start_shot(std::size_t shot) {
    const std::size_t per_rep = prog_.fidelities.size() * prog_.settings.size();
    shot_ = std::make_unique<ShotState>();
    shot_->index = shot;
    shot_->rep = static_cast<int>(shot / per_rep);
    shot_->fid_index = (shot % per_rep) / prog_.settings.size();
    shot_->setting_index = shot % prog_.settings.size();
    for (auto& v : row_records_) v.emplace_back();

    auto begin = [this]() {
        for (auto& a : actors_) {
            a->pc = 0;
            a->done = false;
            a->waiting_recv = false;
            a->last_bit.reset();
            a->pending_invert = false;
            a->last_inverted = false;
            a->basis = MeasBasis(Axis::Z, 1);
            a->store.clear();
        }
        for (auto& a : actors_) step(*a);
    };
    const Duration gap = gap_ ? gap_() : Duration::zero();
    if (gap > Duration::zero())
        sim_.events.schedule_in(gap, begin);
    else
        begin();
}

void ProgramRunner::on_delivery(Qubit node, std::size_t record) {
    Actor& a = *actors_[static_cast<int>(node)];
    const DeliveryRecord& rec = sim_.link.records(node)[record];
    if (a.own_requests.count(rec.request_id)) return;  // the originator learns via request completion
    a.inbox.push_back(record);
    if (a.waiting_recv) {
        a.waiting_recv = false;
        step(a);
    }
}

void ProgramRunner::step(Actor& a) {
    const Duration rt = sim_.link.params().interface_round_trip;
    const Setting& setting = prog_.settings[shot_->setting_index];
    const double fid = prog_.fidelities[shot_->fid_index];
    const int ni = static_cast<int>(a.node);

    while (a.pc < a.code->size()) {
        const Instruction& ins = (*a.code)[a.pc];
        const SimTime now = sim_.events.now();
        switch (ins.kind) {
            case InstrKind::CreateEnt: {
                EntRequest req;
                req.remote_node = other(a.node);
                req.min_fidelity = fid;
                req.type = ins.type;
                req.app_id = prog_.name;
                if (ins.basis) req.meas_basis = ins.basis->resolve(setting.client, setting.server);
                if (ins.remote_basis) req.remote_meas_basis = ins.remote_basis->resolve(setting.client, setting.server);
                ++a.pc;
                const std::uint64_t id = sim_.link.submit(req, [this, &a, ni](const RequestResult& r) {
                    if (r.error) fail(a, "entanglement request aborted", r.error);
                    if (r.timed_out) fail(a, "entanglement request timed out", std::nullopt);
                    const std::size_t idx = r.records.back();
                    const DeliveryRecord& rec = sim_.link.records(a.node)[idx];
                    row_records_[ni].back().push_back(idx);
                    shot_->last_origin_record[ni] = idx;
                    if (rec.meas_outcome) {
                        a.last_bit = *rec.meas_outcome;
                        a.last_inverted = rec.outcome_inverted;
                        a.basis = *rec.meas_basis;
                    }
                    sim_.events.schedule(sim_.events.now(), [this, &a]() { step(a); });
                });
                a.own_requests.insert(id);
                return;
            }
            case InstrKind::RecvEnt: {
                if (a.inbox.empty()) {
                    a.waiting_recv = true;
                    return;
                }
                const std::size_t idx = a.inbox.front();
                a.inbox.pop_front();
                const DeliveryRecord& rec = sim_.link.records(a.node)[idx];
                if (rec.type != ins.type) fail(a, "received a pair of unexpected type", std::nullopt);
                row_records_[ni].back().push_back(idx);
                if (rec.meas_outcome) {
                    a.last_bit = *rec.meas_outcome;
                    a.last_inverted = rec.outcome_inverted;
                    a.basis = *rec.meas_basis;
                }
                ++a.pc;
                break;
            }
            case InstrKind::RotateBasis: {
                const MeasBasis b = ins.basis->resolve(setting.client, setting.server);
                const BasisChange bc = basis_change(b, sim_.link.params().sign_mode);
                if (!sim_.phys.qubits().live(a.node)) fail(a, "rotate_basis without a live qubit", OutcomeCode::HARDWARE_FAILURE);
                Duration elapsed{0};
                for (const Rotation& g : bc.gates) {
                    const Outcome out = sim_.phys.execute(a.node, Command::sqg(g), now + elapsed);
                    if (out.code != OutcomeCode::SUCCESS) fail(a, "basis rotation failed", out.code);
                    elapsed += out.elapsed;
                }
                a.basis = b;
                a.pending_invert = bc.invert;
                ++a.pc;
                if (!bc.gates.empty()) {
                    sim_.events.schedule(now + rt + elapsed, [this, &a]() { step(a); });
                    return;
                }
                break;
            }
            case InstrKind::Measure: {
                const Outcome out = sim_.phys.execute(a.node, Command::msr(), now);
                if (!out.bit) fail(a, "measurement failed", out.code);
                a.last_bit = *out.bit ^ static_cast<int>(a.pending_invert);
                a.last_inverted = a.pending_invert;
                a.pending_invert = false;
                ++a.pc;
                sim_.events.schedule(now + rt + out.elapsed, [this, &a]() { step(a); });
                return;
            }
            case InstrKind::Store:
                if (!a.last_bit) fail(a, "store without a measurement outcome", std::nullopt);
                a.store[ins.tag] = *a.last_bit;
                ++a.pc;
                break;
        }
    }
    actor_done(a);
}

void ProgramRunner::actor_done(Actor& a) {
    a.done = true;
    if (!actors_[0]->done || !actors_[1]->done) return;

    const Actor& c = *actors_[0];
    const Actor& s = *actors_[1];
    OutcomeRow row;
    row.experiment = prog_.name;
    row.rep = shot_->rep;
    row.requested_fidelity = prog_.fidelities[shot_->fid_index];
    row.setting_index = shot_->setting_index;
    row.client_basis = c.basis;
    row.server_basis = s.basis;
    row.client_bit = c.last_bit.value_or(0);
    row.server_bit = s.last_bit.value_or(0);
    row.client_inverted = c.last_inverted;
    row.server_inverted = s.last_inverted;
    row.client_store = c.store;
    row.server_store = s.store;

    // Delivery metadata comes from the originator's record of the last pair in the shot.
    for (Qubit q : {Qubit::Client, Qubit::Server}) {
        const auto& idx = shot_->last_origin_record[static_cast<int>(q)];
        if (!idx) continue;
        const DeliveryRecord& rec = sim_.link.records(q)[*idx];
        row.type = rec.type;
        row.heralded = rec.raw_heralded;
        row.ent_seq = rec.ent_id.seq;
        row.created_ns = ns_of(rec.created_at);
        row.delivered_ns = ns_of(rec.delivered_at);
        row.latency = rec.latency;
    }
    rows_.push_back(std::move(row));

    const std::size_t next = shot_->index + 1;
    if (next < prog_.shots()) sim_.events.schedule(sim_.events.now(), [this, next]() { start_shot(next); });
}

// ---------------------------------------------------------------- experiments

std::vector<OutcomeRow> run_tomography(Simulation& sim, int shots_per_setting) {
    ProgramRunner r(sim, tomography_program(shots_per_setting));
    return r.run();
}

std::vector<OutcomeRow> run_fidelity_sweep(Simulation& sim, int shots_per_setting) {
    ProgramRunner r(sim, fidelity_sweep_program(shots_per_setting));
    return r.run();
}

std::vector<OutcomeRow> run_rsp(Simulation& sim, int shots_per_setting) {
    ProgramRunner r(sim, rsp_program(shots_per_setting));
    return r.run();
}

std::vector<OutcomeRow> run_latency_benchmark(Simulation& sim, int requests, double min_fidelity) {
    std::ostringstream fid;
    fid << min_fidelity;
    AppProgram p = parse_program(
        "program latency\n"
        "reps " + std::to_string(requests) + "\n"
        "fidelities " + fid.str() + "\n"
        "settings +Z/+Z\n"
        "client:\n  create_ent type=K\n  measure\n  store m\n"
        "server:\n  recv_ent type=K\n  measure\n  store m\n");
    ProgramRunner r(sim, std::move(p));
    Rng& phase = sim.rngs.stream("submit_phase");
    const Duration bin = sim.link.params().schedule.bin_duration;
    r.set_shot_gap([&phase, bin]() { return phase.uniform_duration(Duration::zero(), bin - Duration(1)); });
    return r.run();
}

}  // namespace qlink
