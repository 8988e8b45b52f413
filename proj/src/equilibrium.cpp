#include "droopgrid/equilibrium.hpp"

#include <cmath>
#include <cstdlib>

#include <json.hpp>

#include "droopgrid/io.hpp"
#include "droopgrid/smallsignal.hpp"

namespace droopgrid {

VectorXd equilibrium_residual(const ModelMatrices& model, const VectorXd& theta, const VectorXd& v, double omega_s)
{
    const Index n = model.size();
    VectorXd f_p, f_q;
    network_forces(model, theta, VectorXd::Constant(n, omega_s).eval(), v, f_p, f_q);
    VectorXd r(2 * n);
    r << f_p, f_q;
    return r;
}

namespace {

struct Unknowns {
    const ModelMatrices& model;

    Index n() const { return model.size(); }
    int ref() const { return model.reference_bus; }

    VectorXd pack(const Equilibrium& eq) const
    {
        VectorXd z(2 * n());
        Index k = 0;
        for (Index i = 0; i < n(); ++i)
            if (i != ref())
                z(k++) = eq.theta(i) - eq.theta(ref());
        z.segment(k, n()) = eq.v;
        z(2 * n() - 1) = eq.omega_s;
        return z;
    }

    Equilibrium unpack(const VectorXd& z) const
    {
        Equilibrium eq;
        eq.theta = VectorXd::Zero(n());
        Index k = 0;
        for (Index i = 0; i < n(); ++i)
            if (i != ref())
                eq.theta(i) = z(k++);
        eq.v = z.segment(k, n());
        eq.omega_s = z(2 * n() - 1);
        return eq;
    }

    VectorXd residual(const VectorXd& z) const
    {
        const auto eq = unpack(z);
        return equilibrium_residual(model, eq.theta, eq.v, eq.omega_s);
    }

    MatrixXd jacobian(const VectorXd& z) const
    {
        const auto eq = unpack(z);
        const MatrixXd df = force_jacobian(model, eq.theta, eq.v);
        MatrixXd jac(2 * n(), 2 * n());
        Index k = 0;
        for (Index i = 0; i < n(); ++i)
            if (i != ref())
                jac.col(k++) = df.col(i);
        jac.middleCols(k, n()) = df.rightCols(n());
        jac.col(2 * n() - 1) << -model.d_p, VectorXd::Zero(n());
        return jac;
    }
};

double max_norm(const VectorXd& r) { return r.size() ? r.cwiseAbs().maxCoeff() : 0.0; }

} // namespace

Equilibrium solve_equilibrium(const ModelMatrices& model, const std::optional<Equilibrium>& guess,
                              const SolveOptions& options)
{
    const Index n = model.size();
    const Unknowns u{model};

    Equilibrium start;
    if (guess) {
        start = *guess;
        if (start.theta.size() != n || start.v.size() != n)
            throw InputError("equilibrium guess has the wrong dimension");
    } else {
        start.theta = VectorXd::Zero(n);
        start.v = VectorXd::Ones(n);
        start.omega_s = 0.0;
    }

    VectorXd z = u.pack(start);
    VectorXd r = u.residual(z);
    double norm = max_norm(r);
    std::vector<double> trace{norm};

    for (int it = 0; it < options.max_iterations && norm > options.tolerance; ++it) {
        const MatrixXd jac = options.finite_difference_jacobian
            ? finite_difference_jacobian([&](const VectorXd& x) { return u.residual(x); }, z, 1e-7)
            : u.jacobian(z);
        Eigen::PartialPivLU<MatrixXd> lu(jac);
        if (!(lu.rcond() > 1e-14)) {
            auto last = u.unpack(z);
            last.residual_norm = norm;
            last.iterations = it;
            throw SolveError("equilibrium Newton matrix is singular; the operating point is degenerate",
                             std::move(last), trace, true);
        }
        const VectorXd step = lu.solve(-r);

        double lambda = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 30; ++halving, lambda *= 0.5) {
            const VectorXd trial = z + lambda * step;
            const auto trial_eq = u.unpack(trial);
            if ((trial_eq.v.array() <= 0.0).any())
                continue;
            const VectorXd trial_r = u.residual(trial);
            const double trial_norm = max_norm(trial_r);
            if (std::isfinite(trial_norm) && trial_norm < norm) {
                z = trial;
                r = trial_r;
                norm = trial_norm;
                accepted = true;
                break;
            }
        }
        trace.push_back(norm);
        if (!accepted)
            break;
    }

    auto eq = u.unpack(z);
    eq.residual_norm = max_norm(equilibrium_residual(model, eq.theta, eq.v, eq.omega_s));
    eq.iterations = static_cast<int>(trace.size()) - 1;
    if (!(eq.residual_norm <= options.tolerance))
        throw SolveError("equilibrium Newton did not converge (residual " + format_number(eq.residual_norm) + " after "
                             + std::to_string(eq.iterations) + " iterations)",
                         eq, trace, false);
    return eq;
}

Equilibrium solve_equilibrium(const Case& c, const VectorXd& alpha, const std::optional<Equilibrium>& guess,
                              const SolveOptions& options)
{
    const auto model = build_model(c, alpha);
    if (guess)
        return solve_equilibrium(model, guess, options);
    Equilibrium flat;
    flat.theta = VectorXd::Zero(c.size());
    flat.v = VectorXd::Ones(c.size());
    for (int i = 0; i < c.size(); ++i)
        if (c.buses[static_cast<std::size_t>(i)].is_inverter())
            flat.v(i) = c.buses[static_cast<std::size_t>(i)].v0;
    return solve_equilibrium(model, flat, options);
}

Case calibrate_references(const Case& c, const ReferenceState& target, const VectorXd& alpha, double tolerance)
{
    const int n = c.size();
    if (target.theta.size() != n || target.v.size() != n)
        throw InputError("calibration target has " + std::to_string(target.theta.size()) + " buses, case has "
                         + std::to_string(n));
    if (alpha.size() != n)
        throw InputError("alpha dimension does not match the case");

    const auto ybus = build_ybus(n, c.lines);
    const auto edges = directed_edges(c.lines);
    VectorXd p, q;
    power_injections(ybus, edges, target.theta, target.v, p, q);

    Case out = c;
    std::string mismatches;
    for (int i = 0; i < n; ++i) {
        auto& b = out.buses[static_cast<std::size_t>(i)];
        double p_req = p(i);
        double q_req = q(i);
        if (b.is_inverter()) {
            // Droop offsets at omega_s = 0: rotated power deviation equals
            // (D1 omega0, D2 (V0 - V)).
            const double a = b.d1 * c.omega0;
            const double d = b.d2 * (b.v0 - target.v(i));
            const double s = std::sin(alpha(i));
            const double co = std::cos(alpha(i));
            p_req -= a * s + d * co;
            q_req -= -a * co + d * s;
        }
        auto settle = [&](std::optional<double>& ref, double required, const char* what) {
            if (!ref) {
                ref = required;
            } else if (std::abs(*ref - required) > tolerance) {
                mismatches += " bus " + std::to_string(b.id) + " " + what + " (specified " + format_number(*ref)
                    + ", target needs " + format_number(required) + ");";
            }
        };
        settle(b.p0_net, p_req, "p0_net");
        settle(b.q0_net, q_req, "q0_net");
    }
    if (!mismatches.empty())
        throw InputError("references inconsistent with the calibration target:" + mismatches);
    return out;
}

Case calibrate_references(const Case& c, const ReferenceState& target, double tolerance)
{
    const auto ybus = build_ybus(c.size(), c.lines);
    return calibrate_references(c, target, case_alpha(c, ybus, AlphaPolicy{}), tolerance);
}

Case calibrate_bundled(const Case& c, const VectorXd& alpha)
{
    if (c.calibrated() || c.name != kIeee9Name || !(c == builtin_case(kIeee9Name)))
        return c;
    return calibrate_references(c, builtin_reference_state(kIeee9Name), alpha, kBundledCalibrationTolerance);
}

LineAngleDiff max_line_angle_diff(const VectorXd& theta, std::span<const Line> lines)
{
    LineAngleDiff best;
    for (std::size_t j = 0; j < lines.size(); ++j) {
        const double d = rad2deg(std::abs(theta(lines[j].from) - theta(lines[j].to)));
        if (best.line < 0 || d > best.degrees) {
            best.degrees = d;
            best.line = static_cast<int>(j);
            best.from = lines[j].from;
            best.to = lines[j].to;
        }
    }
    if (best.line < 0)
        best.degrees = 0.0;
    return best;
}

std::string equilibrium_json(const Equilibrium& eq)
{
    nlohmann::json doc;
    doc["theta_deg"] = nlohmann::json::array();
    doc["v"] = nlohmann::json::array();
    for (Index i = 0; i < eq.theta.size(); ++i) {
        doc["theta_deg"].push_back(round12(rad2deg(eq.theta(i))));
        doc["v"].push_back(round12(eq.v(i)));
    }
    doc["omega_s"] = round12(eq.omega_s);
    doc["residual_norm"] = round12(eq.residual_norm);
    return doc.dump(2) + "\n";
}

Equilibrium parse_equilibrium_json(std::string_view text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(std::string("equilibrium document is not valid JSON: ") + e.what());
    }
    auto array = [&](const char* key) {
        if (!doc.is_object() || !doc.contains(key) || !doc.at(key).is_array())
            throw InputError(std::string(key) + ": expected an array");
        const auto& a = doc.at(key);
        VectorXd out(static_cast<Index>(a.size()));
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].is_number())
                throw InputError(std::string(key) + "[" + std::to_string(i) + "]: expected a number");
            out(static_cast<Index>(i)) = a[i].get<double>();
        }
        return out;
    };
    Equilibrium eq;
    eq.theta = array("theta_deg").unaryExpr([](double d) { return deg2rad(d); });
    eq.v = array("v");
    if (eq.theta.size() != eq.v.size())
        throw InputError("theta_deg and v have different lengths");
    if (doc.contains("omega_s") && doc.at("omega_s").is_number())
        eq.omega_s = doc.at("omega_s").get<double>();
    if (doc.contains("residual_norm") && doc.at("residual_norm").is_number())
        eq.residual_norm = doc.at("residual_norm").get<double>();
    return eq;
}

} // namespace droopgrid
