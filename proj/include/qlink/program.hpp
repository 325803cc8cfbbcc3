#pragma once

// Minimal declarative application programs (see docs/program_format.md).

#include "qlink/link.hpp"
#include "qlink/qstate.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qlink {

enum class InstrKind : std::uint8_t { CreateEnt, RecvEnt, RotateBasis, Measure, Store };
std::string_view to_string(InstrKind k);

/// A basis operand: either a literal ("+X") or a reference to the current setting
/// ("$client" or "$server").
struct BasisRef {
    std::optional<MeasBasis> literal;
    std::optional<Qubit> setting_of;

    MeasBasis resolve(const MeasBasis& client_setting, const MeasBasis& server_setting) const;
    std::string str() const;
};

struct Instruction {
    InstrKind kind = InstrKind::Measure;
    DeliveryType type = DeliveryType::K;  // CREATE_ENT / RECV_ENT
    std::optional<BasisRef> basis;        // CREATE_ENT (M/R) and ROTATE_BASIS
    std::optional<BasisRef> remote_basis; // CREATE_ENT (M)
    std::string tag;                      // STORE
};

struct Setting {
    MeasBasis client;
    MeasBasis server;
};

struct AppProgram {
    std::string name;
    int reps = 1;
    std::vector<double> fidelities{0.8};
    std::vector<Setting> settings;
    std::vector<Instruction> client;
    std::vector<Instruction> server;

    /// Throws std::invalid_argument describing the first violated rule.
    void validate() const;
    std::size_t shots() const { return static_cast<std::size_t>(reps) * fidelities.size() * settings.size(); }
};

/// All 36 pairs of signed bases, client-major in the order +X -X +Y -Y +Z -Z.
std::vector<Setting> tomography36();
/// XX, YY, ZZ with their four sign variants.
std::vector<Setting> sweep12();

AppProgram parse_program(std::string_view text);
std::string format_program(const AppProgram& p);

AppProgram tomography_program(int reps = 125);
AppProgram fidelity_sweep_program(int reps = 125);
AppProgram rsp_program(int reps = 125);

/// The seven requested fidelities of the sweep: 0.50, 0.55, ..., 0.80.
std::vector<double> sweep_fidelities();

}  // namespace qlink
