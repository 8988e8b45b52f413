#pragma once

#include <algorithm>
#include <cmath>

#include "droopgrid/types.hpp"

namespace droopgrid {

/// One classical fourth-order Runge-Kutta step of x' = f(x).
template <typename Scalar, typename F>
VectorX<Scalar> rk4_step(F&& f, const VectorX<Scalar>& x, Scalar h)
{
    const VectorX<Scalar> k1 = f(x);
    const VectorX<Scalar> k2 = f((x + (h / 2) * k1).eval());
    const VectorX<Scalar> k3 = f((x + (h / 2) * k2).eval());
    const VectorX<Scalar> k4 = f((x + h * k3).eval());
    return x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

/// Dormand-Prince 5(4) step. Returns the fifth-order solution and writes the
/// difference to the embedded fourth-order solution into `err`.
template <typename Scalar, typename F>
VectorX<Scalar> dopri5_step(F&& f, const VectorX<Scalar>& x, Scalar h, VectorX<Scalar>& err)
{
    const VectorX<Scalar> k1 = f(x);
    const VectorX<Scalar> k2 = f((x + h * (Scalar(1) / 5 * k1)).eval());
    const VectorX<Scalar> k3 = f((x + h * (Scalar(3) / 40 * k1 + Scalar(9) / 40 * k2)).eval());
    const VectorX<Scalar> k4 =
        f((x + h * (Scalar(44) / 45 * k1 - Scalar(56) / 15 * k2 + Scalar(32) / 9 * k3)).eval());
    const VectorX<Scalar> k5 = f((x + h * (Scalar(19372) / 6561 * k1 - Scalar(25360) / 2187 * k2
                                           + Scalar(64448) / 6561 * k3 - Scalar(212) / 729 * k4))
                                     .eval());
    const VectorX<Scalar> k6 = f((x + h * (Scalar(9017) / 3168 * k1 - Scalar(355) / 33 * k2
                                           + Scalar(46732) / 5247 * k3 + Scalar(49) / 176 * k4
                                           - Scalar(5103) / 18656 * k5))
                                     .eval());
    const VectorX<Scalar> x5 = x + h * (Scalar(35) / 384 * k1 + Scalar(500) / 1113 * k3 + Scalar(125) / 192 * k4
                                        - Scalar(2187) / 6784 * k5 + Scalar(11) / 84 * k6);
    const VectorX<Scalar> k7 = f(x5);
    err = h * (Scalar(71) / 57600 * k1 - Scalar(71) / 16695 * k3 + Scalar(71) / 1920 * k4
               - Scalar(17253) / 339200 * k5 + Scalar(22) / 525 * k6 - Scalar(1) / 40 * k7);
    return x5;
}

struct AdaptiveControl {
    double rtol = 1e-8;
    double atol = 1e-8;
    double h_min = 1e-12;
    int max_steps = 10000000;
};

/// Advances x from t0 to t1 with error-controlled Dormand-Prince steps, the
/// last one clipped to land on t1. `h` carries the step size between calls.
/// Returns false if the step size collapses below h_min.
template <typename F>
bool dopri5_advance(F&& f, VectorXd& x, double t0, double t1, double& h, const AdaptiveControl& ctl)
{
    double t = t0;
    VectorXd err;
    int steps = 0;
    while (t < t1) {
        const double span = t1 - t;
        const bool last = h >= span * (1.0 - 1e-12);
        const double step = last ? span : h;
        const VectorXd trial = dopri5_step<double>(f, x, step, err);
        const double scale_err =
            (err.array().abs() / (ctl.atol + ctl.rtol * x.array().abs().max(trial.array().abs()))).maxCoeff();
        if (!std::isfinite(scale_err))
            return false;
        if (scale_err <= 1.0) {
            x = trial;
            t = last ? t1 : t + step;
        }
        const double factor = scale_err > 0.0 ? 0.9 * std::pow(scale_err, -0.2) : 5.0;
        const double next = step * std::clamp(factor, 0.2, 5.0);
        // A clipped final step must not shrink the carried step size.
        if (!(last && scale_err <= 1.0))
            h = next;
        if (h < ctl.h_min || ++steps > ctl.max_steps)
            return false;
    }
    return true;
}

} // namespace droopgrid
