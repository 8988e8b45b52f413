#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "droopgrid/netgraph.hpp"

namespace droopgrid {

enum class BusKind { inverter, load };

/// Bus data. Injections are net reference values P0_G - P0_L and Q0_G - Q0_L;
/// an empty optional marks a reference that still has to be calibrated.
struct Bus {
    int id = 0; ///< 1-based, contiguous
    BusKind kind = BusKind::load;
    std::optional<double> p0_net;
    std::optional<double> q0_net;
    double d1 = 0.0; ///< inverse P droop gain, p.u./(rad/s); inverters only
    double d2 = 0.0; ///< inverse Q droop gain, p.u./p.u.; inverters only
    double t1 = 0.0; ///< angle-channel filter time constant (s)
    double t2 = 0.0; ///< voltage-channel filter time constant (s)
    double v0 = 1.0; ///< nominal voltage (p.u.)
    std::optional<double> alpha_override; ///< rad

    bool is_inverter() const { return kind == BusKind::inverter; }
    friend bool operator==(const Bus&, const Bus&) = default;
};

/// Singular-perturbation constants for non-inverter buses.
struct Epsilons {
    double e1 = 1e-4; ///< load-bus inertia, on the order of e2^2
    double e2 = 1e-2; ///< load-bus damping
    double e3 = 1e-2; ///< load-bus voltage time scale

    friend bool operator==(const Epsilons&, const Epsilons&) = default;
};

struct Case {
    std::string name;
    std::optional<double> base_mva;
    std::vector<Bus> buses;
    std::vector<Line> lines;
    double omega0 = 0.0;
    Epsilons eps;
    std::vector<std::string> warnings; ///< carried in meta.warnings; not part of equality

    int size() const { return static_cast<int>(buses.size()); }
    bool calibrated() const;
    /// Index of the lowest-id inverter bus (angle reference).
    int reference_bus() const;

    friend bool operator==(const Case& a, const Case& b)
    {
        return a.name == b.name && a.base_mva == b.base_mva && a.buses == b.buses && a.lines == b.lines
            && a.omega0 == b.omega0 && a.eps == b.eps;
    }
};

/// Enforces every Case invariant (ids, droop parameters, lines, connectivity).
/// Messages carry a field path such as `buses[3].d1`.
void validate_case(const Case& c);

/// Soft checks that do not make the case unusable (e.g. e1 far from e2^2).
std::vector<std::string> case_advisories(const Case& c);

Case parse_case(std::string_view json_text);
Case load_case_file(const std::string& path);
/// Pretty-printed JSON, numbers at 12 significant digits.
std::string serialize_case(const Case& c);

inline constexpr std::string_view kIeee9Name = "ieee9-lossy-radial";

Case builtin_case(std::string_view name);

/// Published operating point bundled with a builtin case.
struct ReferenceState {
    VectorXd theta; ///< rad
    VectorXd v;     ///< p.u.
};

ReferenceState builtin_reference_state(std::string_view name);

/// Resolves `name_or_path` as a builtin name first, then as a case file.
Case resolve_case(const std::string& name_or_path);

/// Copy of `base` with R = X * r on every line, r ~ N(rx_mean, rx_std^2)
/// truncated to r > 0. Deterministic for a given seed (see rng.hpp).
Case gen_lossy_variant(const Case& base, double rx_mean, double rx_std, std::uint64_t seed);

/// FNV-1a of the serialized case, hex encoded.
std::string case_hash(const Case& c);

} // namespace droopgrid
