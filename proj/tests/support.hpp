#pragma once

#include <complex>

#include "droopgrid/case.hpp"
#include "droopgrid/dynamics.hpp"
#include "droopgrid/equilibrium.hpp"
#include "droopgrid/rng.hpp"

namespace droopgrid::testing {

struct Prepared {
    Case c;
    VectorXd alpha;
    ModelMatrices model;
    Equilibrium eq;
};

inline Prepared prepare(const Case& base, const AlphaPolicy& policy = {})
{
    Prepared p;
    const auto ybus = build_ybus(base.size(), base.lines);
    p.alpha = case_alpha(base, ybus, policy);
    p.c = calibrate_bundled(base, p.alpha);
    p.model = build_model(p.c, p.alpha);
    p.eq = solve_equilibrium(p.c, p.alpha);
    return p;
}

inline Prepared ieee9(const AlphaPolicy& policy = {}) { return prepare(builtin_case(kIeee9Name), policy); }

/// Random connected case (spanning tree plus up to two chords) whose every
/// reference is calibrated to a random small-angle operating point, so that
/// point is an equilibrium with omega_s = 0.
struct RandomCase {
    Case c;
    ReferenceState target;
};

inline RandomCase random_case(Rng& rng, int n, double rx_mean = 0.7, double rx_jitter = 0.05)
{
    RandomCase out;
    auto& c = out.c;
    c.name = "random-" + std::to_string(n);
    const int inverters = std::max(1, n / 3);
    for (int i = 0; i < n; ++i) {
        Bus b;
        b.id = i + 1;
        if (i < inverters) {
            b.kind = BusKind::inverter;
            b.d1 = rng.uniform(1.0, 20.0);
            b.d2 = rng.uniform(1.0, 20.0);
            b.t1 = rng.uniform(0.01, 1.0);
            b.t2 = rng.uniform(0.1, 10.0);
            b.v0 = 1.0;
        }
        c.buses.push_back(b);
    }
    auto add_line = [&](int a, int b) {
        for (const auto& l : c.lines)
            if ((l.from == a && l.to == b) || (l.from == b && l.to == a))
                return;
        const double x = rng.uniform(0.05, 0.2);
        c.lines.push_back({a, b, x * rx_mean * (1.0 + rng.uniform(-rx_jitter, rx_jitter)), x});
    };
    for (int i = 1; i < n; ++i)
        add_line(static_cast<int>(rng.uniform() * i), i);
    for (int k = 0; k < 2 && n > 3; ++k) {
        const int a = static_cast<int>(rng.uniform() * n);
        const int b = static_cast<int>(rng.uniform() * n);
        if (a != b)
            add_line(a, b);
    }

    out.target.theta = VectorXd::Zero(n);
    out.target.v = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        out.target.theta(i) = i == 0 ? 0.0 : rng.uniform(-0.05, 0.05);
        out.target.v(i) = rng.uniform(0.96, 1.04);
    }
    const auto ybus = build_ybus(n, c.lines);
    c = calibrate_references(c, out.target, case_alpha(c, ybus, AlphaPolicy{}));
    return out;
}

/// Complex bus admittance matrix assembled straight from the line list.
inline Eigen::MatrixXcd complex_ybus(int n, std::span<const Line> lines)
{
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& l : lines) {
        const std::complex<double> yl = 1.0 / std::complex<double>(l.r, l.x);
        y(l.from, l.from) += yl;
        y(l.to, l.to) += yl;
        y(l.from, l.to) -= yl;
        y(l.to, l.from) -= yl;
    }
    return y;
}

/// Complex power S_i = V_i conj(sum_k Y_ik V_k) injected at every bus.
inline Eigen::VectorXcd complex_injection(const Eigen::MatrixXcd& y, const VectorXd& theta, const VectorXd& v)
{
    Eigen::VectorXcd phasor(theta.size());
    for (Index i = 0; i < theta.size(); ++i)
        phasor(i) = std::polar(v(i), theta(i));
    const Eigen::VectorXcd current = y * phasor;
    return phasor.cwiseProduct(current.conjugate());
}

/// Conventional P-omega / Q-V droop with first-order filters, loads as
/// singularly perturbed power balances.
inline State conventional_droop_rhs(const Case& c, const State& x)
{
    const int n = c.size();
    const auto s = complex_injection(complex_ybus(n, c.lines), x.theta, x.v);
    State dx{x.omega, VectorXd(n), VectorXd(n)};
    for (int i = 0; i < n; ++i) {
        const auto& b = c.buses[static_cast<std::size_t>(i)];
        const double p = s(i).real();
        const double q = s(i).imag();
        if (b.is_inverter()) {
            dx.omega(i) = (*b.p0_net - p + b.d1 * (c.omega0 - x.omega(i))) / (b.d1 * b.t1);
            dx.v(i) = (*b.q0_net - q + b.d2 * (b.v0 - x.v(i))) / (b.d2 * b.t2);
        } else {
            dx.omega(i) = (*b.p0_net - p - c.eps.e2 * x.omega(i)) / c.eps.e1;
            dx.v(i) = (*b.q0_net - q) / c.eps.e3;
        }
    }
    return dx;
}

/// D1, D2 ~ U(1, 20) and T1, T2 ~ U(0.01, 10) on every inverter.
inline void draw_droop(Rng& rng, Case& c)
{
    for (auto& b : c.buses)
        if (b.is_inverter()) {
            b.d1 = rng.uniform(1.0, 20.0);
            b.d2 = rng.uniform(1.0, 20.0);
            b.t1 = rng.uniform(0.01, 10.0);
            b.t2 = rng.uniform(0.01, 10.0);
        }
}

/// The builtin network with every reference recalibrated so bus 5 sits at a
/// depressed voltage, which takes a large reactive draw there.
inline Prepared heavy_reactive_load(double v5)
{
    Prepared p;
    p.c = builtin_case(kIeee9Name);
    for (auto& b : p.c.buses) {
        b.p0_net.reset();
        b.q0_net.reset();
    }
    auto target = builtin_reference_state(kIeee9Name);
    target.v(4) = v5;
    p.alpha = case_alpha(p.c, build_ybus(9, p.c.lines), {});
    p.c = calibrate_references(p.c, target, p.alpha);
    p.model = build_model(p.c, p.alpha);
    p.eq.theta = target.theta;
    p.eq.v = target.v;
    p.eq.residual_norm = equilibrium_residual(p.model, target.theta, target.v, 0.0).cwiseAbs().maxCoeff();
    return p;
}

inline State random_state(Rng& rng, int n)
{
    State x{VectorXd(n), VectorXd(n), VectorXd(n)};
    for (int i = 0; i < n; ++i) {
        x.theta(i) = rng.uniform(-0.5, 0.5);
        x.omega(i) = rng.uniform(-0.1, 0.1);
        x.v(i) = rng.uniform(0.8, 1.2);
    }
    return x;
}

inline double rel_err(const MatrixXd& a, const MatrixXd& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

} // namespace droopgrid::testing
