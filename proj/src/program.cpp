#include "qlink/program.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace qlink {

namespace {

const MeasBasis kCardinal[6] = {
    MeasBasis(Axis::X, 1), MeasBasis(Axis::X, -1), MeasBasis(Axis::Y, 1),
    MeasBasis(Axis::Y, -1), MeasBasis(Axis::Z, 1), MeasBasis(Axis::Z, -1),
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string w; is >> w;) out.push_back(w);
    return out;
}

[[noreturn]] void parse_error(int line, const std::string& msg) {
    throw std::invalid_argument("program line " + std::to_string(line) + ": " + msg);
}

BasisRef parse_basis_ref(const std::string& s, int line) {
    BasisRef r;
    if (s == "$client")
        r.setting_of = Qubit::Client;
    else if (s == "$server")
        r.setting_of = Qubit::Server;
    else {
        try {
            r.literal = parse_basis(s);
        } catch (const std::invalid_argument& e) {
            parse_error(line, e.what());
        }
    }
    return r;
}

Instruction parse_instruction(const std::vector<std::string>& words, int line) {
    Instruction ins;
    const std::string& op = words[0];
    std::vector<std::pair<std::string, std::string>> kv;
    std::vector<std::string> positional;
    for (std::size_t i = 1; i < words.size(); ++i) {
        const auto eq = words[i].find('=');
        if (eq == std::string::npos)
            positional.push_back(words[i]);
        else
            kv.emplace_back(words[i].substr(0, eq), words[i].substr(eq + 1));
    }

    if (op == "create_ent" || op == "recv_ent") {
        ins.kind = op == "create_ent" ? InstrKind::CreateEnt : InstrKind::RecvEnt;
        bool have_type = false;
        for (const auto& [k, v] : kv) {
            if (k == "type") {
                try {
                    ins.type = parse_delivery_type(v);
                } catch (const std::invalid_argument& e) {
                    parse_error(line, e.what());
                }
                have_type = true;
            } else if (k == "basis" && ins.kind == InstrKind::CreateEnt) {
                ins.basis = parse_basis_ref(v, line);
            } else if (k == "remote_basis" && ins.kind == InstrKind::CreateEnt) {
                ins.remote_basis = parse_basis_ref(v, line);
            } else {
                parse_error(line, "unknown argument '" + k + "' for " + op);
            }
        }
        if (!have_type) parse_error(line, op + " requires type=K|M|R");
        if (!positional.empty()) parse_error(line, "unexpected operand '" + positional[0] + "'");
    } else if (op == "rotate_basis") {
        ins.kind = InstrKind::RotateBasis;
        if (!kv.empty() || positional.size() != 1) parse_error(line, "rotate_basis takes one basis operand");
        ins.basis = parse_basis_ref(positional[0], line);
    } else if (op == "measure") {
        ins.kind = InstrKind::Measure;
        if (!kv.empty() || !positional.empty()) parse_error(line, "measure takes no operands");
    } else if (op == "store") {
        ins.kind = InstrKind::Store;
        if (!kv.empty() || positional.size() != 1) parse_error(line, "store takes one tag");
        ins.tag = positional[0];
    } else {
        parse_error(line, "unknown instruction '" + op + "'");
    }
    return ins;
}

std::string fmt_fid(double f) {
    std::ostringstream os;
    os << std::setprecision(6) << f;
    return os.str();
}

}  // namespace

std::string_view to_string(InstrKind k) {
    switch (k) {
        case InstrKind::CreateEnt: return "create_ent";
        case InstrKind::RecvEnt: return "recv_ent";
        case InstrKind::RotateBasis: return "rotate_basis";
        case InstrKind::Measure: return "measure";
        case InstrKind::Store: return "store";
    }
    return "?";
}

MeasBasis BasisRef::resolve(const MeasBasis& client_setting, const MeasBasis& server_setting) const {
    if (literal) return *literal;
    if (setting_of) return *setting_of == Qubit::Client ? client_setting : server_setting;
    throw std::logic_error("empty basis reference");
}

std::string BasisRef::str() const {
    if (literal) return to_string(*literal);
    if (setting_of) return *setting_of == Qubit::Client ? "$client" : "$server";
    return "?";
}

std::vector<Setting> tomography36() {
    std::vector<Setting> out;
    for (const auto& c : kCardinal)
        for (const auto& s : kCardinal) out.push_back({c, s});
    return out;
}

std::vector<Setting> sweep12() {
    std::vector<Setting> out;
    for (Axis a : {Axis::X, Axis::Y, Axis::Z})
        for (int sc : {1, -1})
            for (int ss : {1, -1}) out.push_back({MeasBasis(a, sc), MeasBasis(a, ss)});
    return out;
}

std::vector<double> sweep_fidelities() {
    std::vector<double> out;
    for (int k = 0; k < 7; ++k) out.push_back(std::round((0.50 + 0.05 * k) * 100.0) / 100.0);
    return out;
}

void AppProgram::validate() const {
    if (name.empty()) throw std::invalid_argument("program needs a name");
    if (reps < 1) throw std::invalid_argument("reps must be at least 1");
    if (fidelities.empty()) throw std::invalid_argument("program needs at least one fidelity");
    for (double f : fidelities)
        if (!(f >= kMinRequestedFidelity && f <= kMaxRequestedFidelity))
            throw std::invalid_argument("fidelity " + fmt_fid(f) + " outside [0.25, 0.97]");
    if (settings.empty()) throw std::invalid_argument("program needs at least one setting");

    auto creates = [](const std::vector<Instruction>& v) {
        std::vector<DeliveryType> out;
        for (const auto& i : v)
            if (i.kind == InstrKind::CreateEnt) out.push_back(i.type);
        return out;
    };
    auto recvs = [](const std::vector<Instruction>& v) {
        std::vector<DeliveryType> out;
        for (const auto& i : v)
            if (i.kind == InstrKind::RecvEnt) out.push_back(i.type);
        return out;
    };
    if (creates(client) != recvs(server) || creates(server) != recvs(client))
        throw std::invalid_argument("every create_ent must pair with a recv_ent of the same type on the other node");
    if (creates(client).empty() && creates(server).empty())
        throw std::invalid_argument("program creates no entanglement");

    for (const auto* side : {&client, &server}) {
        bool live = false;  // node holds an unmeasured qubit
        for (const auto& i : *side) {
            switch (i.kind) {
                case InstrKind::CreateEnt:
                    if (live) throw std::invalid_argument("create_ent while a qubit is still unmeasured");
                    if (i.type == DeliveryType::K && (i.basis || i.remote_basis))
                        throw std::invalid_argument("K-type create_ent takes no basis; use rotate_basis + measure");
                    if (i.type != DeliveryType::K && !i.basis)
                        throw std::invalid_argument("M/R-type create_ent must embed the basis");
                    if (i.type == DeliveryType::M && !i.remote_basis)
                        throw std::invalid_argument("M-type create_ent needs remote_basis");
                    if (i.type == DeliveryType::R && i.remote_basis)
                        throw std::invalid_argument("R-type create_ent takes no remote_basis");
                    live = i.type == DeliveryType::K;
                    break;
                case InstrKind::RecvEnt:
                    if (live) throw std::invalid_argument("recv_ent while a qubit is still unmeasured");
                    live = i.type != DeliveryType::M;
                    break;
                case InstrKind::RotateBasis:
                    if (!live) throw std::invalid_argument("rotate_basis without a live qubit");
                    break;
                case InstrKind::Measure:
                    if (!live) throw std::invalid_argument("measure without a live qubit");
                    live = false;
                    break;
                case InstrKind::Store:
                    break;
            }
        }
        if (live) throw std::invalid_argument("program leaves a qubit unmeasured");
    }
}

AppProgram parse_program(std::string_view text) {
    AppProgram p;
    std::vector<Instruction>* section = nullptr;
    bool have_settings = false;
    std::istringstream is{std::string(text)};
    int line_no = 0;
    for (std::string raw; std::getline(is, raw);) {
        ++line_no;
        if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        if (line == "client:") {
            section = &p.client;
            continue;
        }
        if (line == "server:") {
            section = &p.server;
            continue;
        }
        const auto words = split_ws(line);
        const std::string& key = words[0];
        if (key == "program") {
            if (words.size() != 2) parse_error(line_no, "program takes one name");
            p.name = words[1];
        } else if (key == "reps") {
            if (words.size() != 2) parse_error(line_no, "reps takes one integer");
            try {
                p.reps = std::stoi(words[1]);
            } catch (const std::exception&) {
                parse_error(line_no, "reps must be an integer");
            }
        } else if (key == "fidelities") {
            p.fidelities.clear();
            for (std::size_t i = 1; i < words.size(); ++i) {
                try {
                    p.fidelities.push_back(std::stod(words[i]));
                } catch (const std::exception&) {
                    parse_error(line_no, "bad fidelity '" + words[i] + "'");
                }
            }
        } else if (key == "settings") {
            have_settings = true;
            for (std::size_t i = 1; i < words.size(); ++i) {
                const auto& w = words[i];
                if (w == "@tomography36") {
                    auto s = tomography36();
                    p.settings.insert(p.settings.end(), s.begin(), s.end());
                } else if (w == "@sweep12") {
                    auto s = sweep12();
                    p.settings.insert(p.settings.end(), s.begin(), s.end());
                } else {
                    const auto slash = w.find('/');
                    if (slash == std::string::npos) parse_error(line_no, "setting must look like +X/-Z");
                    try {
                        p.settings.push_back({parse_basis(w.substr(0, slash)), parse_basis(w.substr(slash + 1))});
                    } catch (const std::invalid_argument& e) {
                        parse_error(line_no, e.what());
                    }
                }
            }
        } else {
            if (!section) parse_error(line_no, "instruction outside a client:/server: section");
            section->push_back(parse_instruction(words, line_no));
        }
    }
    if (!have_settings) throw std::invalid_argument("program has no settings line");
    p.validate();
    return p;
}

std::string format_program(const AppProgram& p) {
    std::ostringstream os;
    os << "program " << p.name << "\nreps " << p.reps << "\nfidelities";
    for (double f : p.fidelities) os << ' ' << fmt_fid(f);
    os << "\nsettings";
    for (const auto& s : p.settings) os << ' ' << to_string(s.client) << '/' << to_string(s.server);
    os << '\n';
    auto emit = [&](const char* head, const std::vector<Instruction>& v) {
        os << head << '\n';
        for (const auto& i : v) {
            os << "  " << to_string(i.kind);
            if (i.kind == InstrKind::CreateEnt || i.kind == InstrKind::RecvEnt) os << " type=" << to_string(i.type);
            if (i.kind == InstrKind::CreateEnt && i.basis) os << " basis=" << i.basis->str();
            if (i.kind == InstrKind::CreateEnt && i.remote_basis) os << " remote_basis=" << i.remote_basis->str();
            if (i.kind == InstrKind::RotateBasis) os << ' ' << i.basis->str();
            if (i.kind == InstrKind::Store) os << ' ' << i.tag;
            os << '\n';
        }
    };
    emit("client:", p.client);
    emit("server:", p.server);
    return os.str();
}

AppProgram tomography_program(int reps) {
    return parse_program(
        "program tomography\n"
        "reps " + std::to_string(reps) + "\n"
        "fidelities 0.80\n"
        "settings @tomography36\n"
        "client:\n"
        "  create_ent type=K\n"
        "  rotate_basis $client\n"
        "  measure\n"
        "  store m\n"
        "server:\n"
        "  recv_ent type=K\n"
        "  rotate_basis $server\n"
        "  measure\n"
        "  store m\n");
}

AppProgram fidelity_sweep_program(int reps) {
    return parse_program(
        "program fidelity_sweep\n"
        "reps " + std::to_string(reps) + "\n"
        "fidelities 0.50 0.55 0.60 0.65 0.70 0.75 0.80\n"
        "settings @sweep12\n"
        "client:\n"
        "  create_ent type=K\n"
        "  rotate_basis $client\n"
        "  measure\n"
        "  store m\n"
        "server:\n"
        "  recv_ent type=K\n"
        "  rotate_basis $server\n"
        "  measure\n"
        "  store m\n");
}

AppProgram rsp_program(int reps) {
    return parse_program(
        "program rsp\n"
        "reps " + std::to_string(reps) + "\n"
        "fidelities 0.80\n"
        "settings @tomography36\n"
        "client:\n"
        "  create_ent type=R basis=$client\n"
        "  store m\n"
        "server:\n"
        "  recv_ent type=R\n"
        "  rotate_basis $server\n"
        "  measure\n"
        "  store m\n");
}

}  // namespace qlink
