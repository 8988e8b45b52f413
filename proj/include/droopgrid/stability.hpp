#pragma once

#include <complex>
#include <string>
#include <vector>

#include "droopgrid/case.hpp"
#include "droopgrid/equilibrium.hpp"
#include "droopgrid/netgraph.hpp"
#include "droopgrid/smallsignal.hpp"

namespace droopgrid {

using Spectrum = std::vector<std::complex<double>>;

/// All eigenvalues of a dense real matrix, sorted by real part (descending),
/// ties by imaginary part (descending). Every eigenpair is checked for
/// ||M v - lambda v|| <= 1e-8 ||M||_F; a failed check or a non-converging
/// QR iteration raises NumericalError.
Spectrum spectrum(const MatrixXd& m);

/// Eigenvalues with |lambda| <= tol.
int count_zero(const Spectrum& s, double tol);

/// Exactly one eigenvalue within tol of zero, every other with Re < 0.
bool stable_with_single_zero(const Spectrum& s, double tol);

/// Zero tolerance used throughout the report: 1e-8 ||M||_F.
double zero_tolerance(const MatrixXd& m);

struct AssumptionThresholds {
    double max_angle_diff_deg = 15.0;
    double phi_spread_rad = 0.05;
    double alpha_conformity = 1e-6;
};

struct AssumptionReport {
    AssumptionThresholds thresholds;
    LineAngleDiff max_angle;
    double phi0 = 0.0;
    double phi_spread = 0.0;
    double alpha_conformity = 0.0; ///< max_i |alpha_i - (pi - phi0)|
    bool angle_ok = false;
    bool spread_ok = false;
    bool alpha_ok = false;
    std::vector<std::string> notes;

    bool all() const { return angle_ok && spread_ok && alpha_ok; }
};

AssumptionReport check_assumptions(const Case& c, const Equilibrium& eq, const VectorXd& alpha,
                                   const AssumptionThresholds& thresholds = {});

struct Theorem1Report {
    bool edge_weights_positive = false; ///< V_i V_k Y_ik cos(theta_i - theta_k) > 0 on every line
    double min_edge_weight = 0.0;
    bool connected = false;
    bool certificate = false;       ///< both structural conditions hold
    bool l1_psd_simple_zero = false; ///< spectral: L1 has one zero eigenvalue, the rest Re > 0
    Spectrum l1_spectrum;
    Spectrum j_a_spectrum;
    bool j_a_stable = false; ///< spectral: one zero, the rest Re < 0
    std::string verdict;     ///< "stable" when certified, else "withheld"
};

struct Theorem2Report {
    double l_lp_min_eig = 0.0; ///< smallest eigenvalue of (L_lp + L_lp^T) / 2
    bool certificate = false;
    Spectrum j_v_spectrum;
    bool j_v_hurwitz = false;
    std::string verdict;
};

struct StabilityReport {
    AssumptionReport assumptions;
    Theorem1Report theorem1;
    Theorem2Report theorem2;
    Spectrum full_spectrum;
    double zero_tolerance = 0.0;
    int zero_modes = 0;
    int fast_modes = 0; ///< Re(lambda) below the load-bus time-scale threshold
    double fast_threshold = 0.0;
    bool full_stable = false;
    CouplingMeasure coupling;
    std::vector<std::string> disagreements;

    bool certified() const { return theorem1.certificate && theorem2.certificate; }
};

/// Structural certificates plus the spectral evidence they are compared with.
StabilityReport certify(const SmallSignal& ss, const Equilibrium& eq, const IncidenceSet& inc);

/// certify() with the assumption check and the fast-mode count filled in.
StabilityReport analyze_stability(const Case& c, const ModelMatrices& model, const Equilibrium& eq,
                                  const AssumptionThresholds& thresholds = {});

std::string stability_report_json(const StabilityReport& r);

/// Human-readable summary for the terminal.
std::string stability_report_text(const StabilityReport& r);

} // namespace droopgrid
