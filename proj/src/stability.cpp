#include "droopgrid/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "droopgrid/io.hpp"

namespace droopgrid {

Spectrum spectrum(const MatrixXd& m)
{
    if (m.rows() != m.cols())
        throw InputError("spectrum needs a square matrix");
    if (!m.allFinite())
        throw NumericalError("spectrum: matrix has non-finite entries");
    if (m.rows() == 0)
        return {};

    Eigen::EigenSolver<MatrixXd> es(m, true);
    if (es.info() != Eigen::Success)
        throw NumericalError("spectrum: eigenvalue iteration did not converge");

    const Eigen::VectorXcd values = es.eigenvalues();
    const Eigen::MatrixXcd vectors = es.eigenvectors();
    const Eigen::MatrixXcd mc = m.cast<std::complex<double>>();
    const double bound = 1e-8 * std::max(m.norm(), 1e-300);
    for (Index k = 0; k < values.size(); ++k) {
        const Eigen::VectorXcd v = vectors.col(k).normalized();
        const double res = (mc * v - values(k) * v).norm();
        if (!(res <= bound))
            throw NumericalError("spectrum: eigenpair " + std::to_string(k) + " has residual " + format_number(res)
                                 + " above " + format_number(bound));
    }

    Spectrum out(values.data(), values.data() + values.size());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.real() != b.real())
            return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return out;
}

int count_zero(const Spectrum& s, double tol)
{
    return static_cast<int>(std::count_if(s.begin(), s.end(), [&](const auto& l) { return std::abs(l) <= tol; }));
}

bool stable_with_single_zero(const Spectrum& s, double tol)
{
    int zeros = 0;
    for (const auto& l : s) {
        if (std::abs(l) <= tol)
            ++zeros;
        else if (!(l.real() < 0.0))
            return false;
    }
    return zeros == 1;
}

double zero_tolerance(const MatrixXd& m) { return 1e-8 * m.norm(); }

AssumptionReport check_assumptions(const Case& c, const Equilibrium& eq, const VectorXd& alpha,
                                   const AssumptionThresholds& thresholds)
{
    AssumptionReport r;
    r.thresholds = thresholds;
    r.max_angle = max_line_angle_diff(eq.theta, c.lines);
    const auto stats = phi_stats(build_ybus(c.size(), c.lines));
    r.phi0 = stats.phi0;
    r.phi_spread = stats.spread;
    r.alpha_conformity = alpha.size() ? (alpha.array() - (kPi - stats.phi0)).abs().maxCoeff() : 0.0;

    r.angle_ok = r.max_angle.degrees <= thresholds.max_angle_diff_deg;
    r.spread_ok = r.phi_spread <= thresholds.phi_spread_rad;
    r.alpha_ok = r.alpha_conformity <= thresholds.alpha_conformity;

    if (!r.angle_ok)
        r.notes.push_back("line angle difference " + format_number(r.max_angle.degrees)
                          + " deg exceeds the small-angle threshold; the linearized weights are far from cos(0)");
    if (!r.spread_ok)
        r.notes.push_back("admittance angles spread by " + format_number(r.phi_spread)
                          + " rad; no single alpha decouples every line");
    if (!r.alpha_ok)
        r.notes.push_back("alpha differs from pi - phi0 by " + format_number(r.alpha_conformity)
                          + " rad; the decoupled Laplacian form of the Jacobian does not hold and the certificates "
                            "are indicative only");
    return r;
}

StabilityReport certify(const SmallSignal& ss, const Equilibrium& eq, const IncidenceSet& inc)
{
    const Index n = ss.l1.rows();
    StabilityReport r;

    auto& t1 = r.theorem1;
    std::vector<Line> topology;
    t1.edge_weights_positive = true;
    t1.min_edge_weight = inc.edges.empty() ? 0.0 : std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < inc.edges.size(); m += 2) {
        const auto& ed = inc.edges[m];
        const double w = ss.u(static_cast<Index>(m)) * std::cos(eq.theta(ed.from) - eq.theta(ed.to));
        t1.min_edge_weight = std::min(t1.min_edge_weight, w);
        if (!(w > 0.0))
            t1.edge_weights_positive = false;
        topology.push_back({ed.from, ed.to, 0.0, 1.0});
    }
    t1.connected = is_connected(static_cast<int>(n), topology);
    t1.certificate = t1.edge_weights_positive && t1.connected;
    t1.verdict = t1.certificate ? "stable" : "withheld";

    t1.l1_spectrum = spectrum(ss.l1);
    {
        const double tol = zero_tolerance(ss.l1);
        int zeros = 0;
        bool rest_positive = true;
        for (const auto& l : t1.l1_spectrum) {
            if (std::abs(l) <= tol)
                ++zeros;
            else if (!(l.real() > 0.0))
                rest_positive = false;
        }
        t1.l1_psd_simple_zero = zeros == 1 && rest_positive;
    }
    t1.j_a_spectrum = spectrum(ss.j_a);
    t1.j_a_stable = stable_with_single_zero(t1.j_a_spectrum, zero_tolerance(ss.j_a));

    auto& t2 = r.theorem2;
    const MatrixXd sym = 0.5 * (ss.l_lp + ss.l_lp.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> sa(sym, Eigen::EigenvaluesOnly);
    if (sa.info() != Eigen::Success)
        throw NumericalError("symmetric eigenvalue iteration did not converge");
    t2.l_lp_min_eig = n > 0 ? sa.eigenvalues().minCoeff() : 0.0;
    t2.certificate = t2.l_lp_min_eig > 0.0;
    t2.verdict = t2.certificate ? "stable" : "withheld";
    t2.j_v_spectrum = spectrum(ss.j_v);
    t2.j_v_hurwitz = std::all_of(t2.j_v_spectrum.begin(), t2.j_v_spectrum.end(),
                                 [](const auto& l) { return l.real() < 0.0; });

    r.full_spectrum = spectrum(ss.j);
    r.zero_tolerance = zero_tolerance(ss.j);
    r.zero_modes = count_zero(r.full_spectrum, r.zero_tolerance);
    r.full_stable = stable_with_single_zero(r.full_spectrum, r.zero_tolerance);
    r.coupling = coupling_measure(ss);

    if (t1.certificate && !t1.j_a_stable)
        r.disagreements.push_back("angle certificate issued but the J_A spectrum is not stable");
    if (t1.certificate && !t1.l1_psd_simple_zero)
        r.disagreements.push_back("angle certificate issued but L1 lacks a simple zero with positive remainder");
    if (t2.certificate && !t2.j_v_hurwitz)
        r.disagreements.push_back("voltage certificate issued but J_V is not Hurwitz");
    if (r.certified() && !r.full_stable)
        r.disagreements.push_back("both certificates issued but the full Jacobian is not stable; the coupling terms "
                                  "are not negligible");
    if (!r.certified() && r.full_stable)
        r.disagreements.push_back("a certificate is withheld although the full Jacobian is stable; the conditions are "
                                  "sufficient, not necessary");
    return r;
}

StabilityReport analyze_stability(const Case& c, const ModelMatrices& model, const Equilibrium& eq,
                                  const AssumptionThresholds& thresholds)
{
    const auto ss = assemble_jacobian(model, eq);
    auto r = certify(ss, eq, incidence(c.lines, c.size()));
    r.assumptions = check_assumptions(c, eq, model.alpha, thresholds);
    // Load-bus modes scale as -e2/e1 (angle) and -1/e3 (voltage).
    r.fast_threshold = -0.1 * std::min(c.eps.e2 / c.eps.e1, 1.0 / c.eps.e3);
    r.fast_modes = static_cast<int>(std::count_if(r.full_spectrum.begin(), r.full_spectrum.end(),
                                                  [&](const auto& l) { return l.real() < r.fast_threshold; }));
    return r;
}

namespace {

nlohmann::json spectrum_json(const Spectrum& s)
{
    auto a = nlohmann::json::array();
    for (const auto& l : s)
        a.push_back({round12(l.real()), round12(l.imag())});
    return a;
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }

} // namespace

std::string stability_report_json(const StabilityReport& r)
{
    using nlohmann::json;
    const auto& a = r.assumptions;
    json doc;
    doc["assumptions"] = {
        {"max_angle_diff_deg", round12(a.max_angle.degrees)},
        {"max_angle_line", {a.max_angle.from + 1, a.max_angle.to + 1}},
        {"phi0_rad", round12(a.phi0)},
        {"phi_spread_rad", round12(a.phi_spread)},
        {"alpha_conformity", round12(a.alpha_conformity)},
        {"angle_ok", a.angle_ok},
        {"spread_ok", a.spread_ok},
        {"alpha_ok", a.alpha_ok},
        {"thresholds",
         {{"max_angle_diff_deg", a.thresholds.max_angle_diff_deg},
          {"phi_spread_rad", a.thresholds.phi_spread_rad},
          {"alpha_conformity", a.thresholds.alpha_conformity}}},
        {"notes", a.notes},
    };
    const auto& t1 = r.theorem1;
    doc["theorem1"] = {
        {"edge_weights_positive", t1.edge_weights_positive},
        {"min_edge_weight", round12(t1.min_edge_weight)},
        {"connected", t1.connected},
        {"certificate", t1.certificate},
        {"L1_psd_simple_zero", t1.l1_psd_simple_zero},
        {"L1_spectrum", spectrum_json(t1.l1_spectrum)},
        {"J_A_spectrum", spectrum_json(t1.j_a_spectrum)},
        {"J_A_stable", t1.j_a_stable},
        {"verdict", t1.verdict},
    };
    const auto& t2 = r.theorem2;
    doc["theorem2"] = {
        {"L_lp_min_eig", round12(t2.l_lp_min_eig)},
        {"certificate", t2.certificate},
        {"J_V_spectrum", spectrum_json(t2.j_v_spectrum)},
        {"J_V_hurwitz", t2.j_v_hurwitz},
        {"verdict", t2.verdict},
    };
    doc["full_spectrum"] = spectrum_json(r.full_spectrum);
    doc["zero_tolerance"] = round12(r.zero_tolerance);
    doc["zero_modes"] = r.zero_modes;
    doc["fast_modes"] = r.fast_modes;
    doc["fast_threshold"] = round12(r.fast_threshold);
    doc["full_stable"] = r.full_stable;
    doc["coupling"] = {{"w2_max", round12(r.coupling.w2_max)}, {"offblock_ratio", round12(r.coupling.offblock_ratio)}};
    doc["disagreements"] = r.disagreements;
    return doc.dump(2) + "\n";
}

std::string stability_report_text(const StabilityReport& r)
{
    const auto& a = r.assumptions;
    const auto& t1 = r.theorem1;
    const auto& t2 = r.theorem2;
    std::string s;
    s += "assumptions\n";
    s += "  max line angle diff  " + format_number(a.max_angle.degrees) + " deg on line ("
        + std::to_string(a.max_angle.from + 1) + "," + std::to_string(a.max_angle.to + 1) + ")  ok=" + yes_no(a.angle_ok)
        + "\n";
    s += "  phi spread           " + format_number(a.phi_spread) + " rad  ok=" + yes_no(a.spread_ok) + "\n";
    s += "  alpha conformity     " + format_number(a.alpha_conformity) + " rad  ok=" + yes_no(a.alpha_ok) + "\n";
    for (const auto& note : a.notes)
        s += "  note: " + note + "\n";
    s += "angle dynamics (J_A)\n";
    s += "  edge weights > 0     " + yes_no(t1.edge_weights_positive) + " (min " + format_number(t1.min_edge_weight)
        + ")\n";
    s += "  connected            " + yes_no(t1.connected) + "\n";
    s += "  L1 simple zero       " + yes_no(t1.l1_psd_simple_zero) + "\n";
    s += "  J_A spectrum stable  " + yes_no(t1.j_a_stable) + "\n";
    s += "  verdict              " + t1.verdict + "\n";
    s += "voltage dynamics (J_V)\n";
    s += "  min eig sym(L_lp)    " + format_number(t2.l_lp_min_eig) + "\n";
    s += "  J_V Hurwitz          " + yes_no(t2.j_v_hurwitz) + "\n";
    s += "  verdict              " + t2.verdict + "\n";
    s += "full Jacobian\n";
    s += "  zero modes           " + std::to_string(r.zero_modes) + " (tol " + format_number(r.zero_tolerance) + ")\n";
    s += "  fast modes           " + std::to_string(r.fast_modes) + "\n";
    s += "  stable               " + yes_no(r.full_stable) + "\n";
    s += "  offblock ratio       " + format_number(r.coupling.offblock_ratio) + "\n";
    s += "  w2 max               " + format_number(r.coupling.w2_max) + "\n";
    for (const auto& d : r.disagreements)
        s += "flag: " + d + "\n";
    return s;
}

} // namespace droopgrid
