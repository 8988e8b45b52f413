#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "droopgrid/case.hpp"
#include "droopgrid/dynamics.hpp"
#include "droopgrid/error.hpp"

namespace droopgrid {

/// Operating point: every bus turns at the common frequency deviation omega_s.
struct Equilibrium {
    VectorXd theta; ///< rad, reference bus pinned at 0 by the solver
    VectorXd v;     ///< p.u.
    double omega_s = 0.0;
    double residual_norm = 0.0;
    int iterations = 0;

    State state() const { return {theta, VectorXd::Constant(theta.size(), omega_s), v}; }
};

/// Stacked [f_P; f_Q] of the vector model with theta' = omega_s, theta'' = 0, V' = 0.
VectorXd equilibrium_residual(const ModelMatrices& model, const VectorXd& theta, const VectorXd& v, double omega_s);

struct SolveOptions {
    double tolerance = 1e-8; ///< on the max-norm of the residual
    int max_iterations = 50;
    bool finite_difference_jacobian = false;
};

/// Raised when Newton fails; carries the last iterate and the residual history.
class SolveError : public NumericalError {
public:
    SolveError(const std::string& what, Equilibrium last, std::vector<double> trace, bool singular)
        : NumericalError(what), last_iterate(std::move(last)), residual_trace(std::move(trace)), singular(singular)
    {
    }

    Equilibrium last_iterate;
    std::vector<double> residual_trace;
    bool singular = false;
};

/// Newton on z = [theta without the reference bus; V; omega_s]. Starts flat
/// (theta = 0, V = V0 on inverters and 1 on loads, omega_s = 0) unless a guess is given.
Equilibrium solve_equilibrium(const ModelMatrices& model, const std::optional<Equilibrium>& guess = std::nullopt,
                              const SolveOptions& options = {});

Equilibrium solve_equilibrium(const Case& c, const VectorXd& alpha,
                              const std::optional<Equilibrium>& guess = std::nullopt,
                              const SolveOptions& options = {});

/// Fills uncalibrated references so the target (theta, V, omega_s = 0) is an
/// equilibrium for the given alpha. Specified references are compared against
/// the required value and an InputError lists every bus off by more than `tolerance`.
Case calibrate_references(const Case& c, const ReferenceState& target, const VectorXd& alpha,
                          double tolerance = 1e-3);

/// Same, with alpha from the automatic policy plus case overrides.
Case calibrate_references(const Case& c, const ReferenceState& target, double tolerance = 1e-3);

/// The bundled operating point of a builtin case is rounded to 4 decimals,
/// which leaves up to 1.3e-3 p.u. of mismatch against specified references.
inline constexpr double kBundledCalibrationTolerance = 2e-3;

/// An uncalibrated builtin case calibrated against its bundled operating
/// point; any other case is returned unchanged.
Case calibrate_bundled(const Case& c, const VectorXd& alpha);

struct LineAngleDiff {
    double degrees = 0.0;
    int line = -1; ///< index into the line list
    int from = -1;
    int to = -1;
};

LineAngleDiff max_line_angle_diff(const VectorXd& theta, std::span<const Line> lines);

/// `{theta_deg: [...], v: [...], omega_s, residual_norm}`
std::string equilibrium_json(const Equilibrium& eq);
Equilibrium parse_equilibrium_json(std::string_view text);

} // namespace droopgrid
