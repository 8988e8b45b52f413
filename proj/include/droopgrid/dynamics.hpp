#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "droopgrid/case.hpp"
#include "droopgrid/error.hpp"
#include "droopgrid/netgraph.hpp"
#include "droopgrid/types.hpp"

namespace droopgrid {

struct Network {
    YBus ybus;
    IncidenceSet inc;
};

Network make_network(const Case& c);

/// Coefficients of the structure-preserving model
///
///   M_P theta'' = P0 - D_P theta' - V.^2 .* Ghat - C (U .* cos(E^T theta - phi + pi/2 - alpha_e))
///   M_Q V'      = Q0 - D_Q V      + V.^2 .* Bhat - C (U .* sin(E^T theta - phi + pi/2 - alpha_e))
///
/// with U_m = V_i V_k Y_ik on directed edge m = (i, k) and alpha_e lifted from
/// the per-bus alpha by source bus. Diagonal matrices are stored as vectors.
template <typename Scalar>
struct ModelMatricesT {
    VectorX<Scalar> m_p, d_p, m_q, d_q;
    VectorX<Scalar> p0, q0;
    VectorX<Scalar> g_hat, b_hat;
    VectorX<Scalar> alpha;      ///< per bus (rad)
    VectorX<Scalar> alpha_edge; ///< per directed edge, alpha of the source bus
    VectorX<Scalar> y_edge;     ///< |Y_ik| per directed edge
    VectorX<Scalar> phi_edge;   ///< arg(Y_ik) per directed edge
    std::vector<DirectedEdge> edges;
    std::vector<bool> inverter;
    int reference_bus = 0;

    Index size() const { return p0.size(); }
    Index edge_count() const { return static_cast<Index>(edges.size()); }

    template <typename Other>
    ModelMatricesT<Other> cast() const
    {
        ModelMatricesT<Other> out;
        out.m_p = m_p.template cast<Other>();
        out.d_p = d_p.template cast<Other>();
        out.m_q = m_q.template cast<Other>();
        out.d_q = d_q.template cast<Other>();
        out.p0 = p0.template cast<Other>();
        out.q0 = q0.template cast<Other>();
        out.g_hat = g_hat.template cast<Other>();
        out.b_hat = b_hat.template cast<Other>();
        out.alpha = alpha.template cast<Other>();
        out.alpha_edge = alpha_edge.template cast<Other>();
        out.y_edge = y_edge.template cast<Other>();
        out.phi_edge = phi_edge.template cast<Other>();
        out.edges = edges;
        out.inverter = inverter;
        out.reference_bus = reference_bus;
        return out;
    }
};

using ModelMatrices = ModelMatricesT<double>;

/// x = [theta; omega; V], omega = theta'.
template <typename Scalar>
struct StateT {
    VectorX<Scalar> theta;
    VectorX<Scalar> omega;
    VectorX<Scalar> v;

    Index size() const { return theta.size(); }

    VectorX<Scalar> flat() const
    {
        VectorX<Scalar> x(3 * size());
        x << theta, omega, v;
        return x;
    }

    static StateT from_flat(const VectorX<Scalar>& x)
    {
        const Index n = x.size() / 3;
        return {x.head(n), x.segment(n, n), x.tail(n)};
    }
};

using State = StateT<double>;

/// Checks the alpha range and that every reference is calibrated.
ModelMatrices build_model(const Case& c, const YBus& ybus, const IncidenceSet& inc, const VectorXd& alpha);
ModelMatrices build_model(const Case& c, const VectorXd& alpha);

/// Per-directed-edge phase argument E^T theta - phi + pi/2 - alpha_e.
template <typename Scalar>
VectorX<Scalar> edge_argument(const ModelMatricesT<Scalar>& m, const VectorX<Scalar>& theta)
{
    VectorX<Scalar> arg(m.edge_count());
    for (Index e = 0; e < m.edge_count(); ++e) {
        const auto& ed = m.edges[static_cast<std::size_t>(e)];
        arg(e) = theta(ed.from) - theta(ed.to) - m.phi_edge(e) + Scalar(kPi / 2) - m.alpha_edge(e);
    }
    return arg;
}

/// Right-hand sides of the two vector equations before division by M_P / M_Q.
template <typename Scalar>
void network_forces(const ModelMatricesT<Scalar>& m, const VectorX<Scalar>& theta, const VectorX<Scalar>& omega,
                    const VectorX<Scalar>& v, VectorX<Scalar>& f_p, VectorX<Scalar>& f_q)
{
    using std::cos;
    using std::sin;
    f_p = m.p0 - m.d_p.cwiseProduct(omega) - v.cwiseAbs2().cwiseProduct(m.g_hat);
    f_q = m.q0 - m.d_q.cwiseProduct(v) + v.cwiseAbs2().cwiseProduct(m.b_hat);
    for (Index e = 0; e < m.edge_count(); ++e) {
        const auto& ed = m.edges[static_cast<std::size_t>(e)];
        const Scalar u = v(ed.from) * v(ed.to) * m.y_edge(e);
        const Scalar arg = theta(ed.from) - theta(ed.to) - m.phi_edge(e) + Scalar(kPi / 2) - m.alpha_edge(e);
        f_p(ed.from) -= u * cos(arg);
        f_q(ed.from) -= u * sin(arg);
    }
}

/// Time derivative of the state. Throws InputError for non-positive voltages.
template <typename Scalar>
StateT<Scalar> rhs(const ModelMatricesT<Scalar>& m, const StateT<Scalar>& x)
{
    if ((x.v.array() <= Scalar(0)).any())
        throw InputError("state has a non-positive bus voltage; the model is undefined there");
    VectorX<Scalar> f_p, f_q;
    network_forces(m, x.theta, x.omega, x.v, f_p, f_q);
    return {x.omega, f_p.cwiseQuotient(m.m_p), f_q.cwiseQuotient(m.m_q)};
}

template <typename Scalar>
VectorX<Scalar> rhs(const ModelMatricesT<Scalar>& m, const VectorX<Scalar>& x)
{
    return rhs(m, StateT<Scalar>::from_flat(x)).flat();
}

/// Untransformed algebraic equations of the load buses: first every load
/// bus's active-power residual (bus order), then every reactive residual.
VectorXd dae_residual(const Case& c, const YBus& ybus, const State& x);

/// Network active/reactive injections V_i^2 G_ii + sum ..., -V_i^2 B_ii + sum ...
void power_injections(const YBus& ybus, std::span<const DirectedEdge> edges, const VectorXd& theta,
                      const VectorXd& v, VectorXd& p, VectorXd& q);

struct AlphaPolicy {
    enum class Kind { automatic, traditional, fixed };
    Kind kind = Kind::automatic;
    double value = 0.0; ///< rad, used by Kind::fixed

    static AlphaPolicy parse(const std::string& text);
    std::string describe() const;
};

/// auto: pi - phi0 at every bus; traditional: pi/2; fixed: constant.
VectorXd select_alpha(const YBus& ybus, int n, const AlphaPolicy& policy);

/// select_alpha followed by per-bus alpha_override values from the case.
VectorXd case_alpha(const Case& c, const YBus& ybus, const AlphaPolicy& policy);

} // namespace droopgrid
