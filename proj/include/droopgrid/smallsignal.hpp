#pragma once

#include <utility>

#include "droopgrid/dynamics.hpp"
#include "droopgrid/equilibrium.hpp"

namespace droopgrid {

/// Weighted directed Laplacian C diag(w) E^T.
template <typename DerivedC, typename DerivedW, typename DerivedE>
MatrixXd directed_laplacian(const Eigen::MatrixBase<DerivedC>& c, const Eigen::MatrixBase<DerivedW>& w,
                            const Eigen::MatrixBase<DerivedE>& e)
{
    return c * w.asDiagonal() * e.transpose();
}

/// Same Laplacian built straight from the edge list.
MatrixXd directed_laplacian(std::span<const DirectedEdge> edges, const VectorXd& w, Index n);

struct EdgeWeights {
    VectorXd u;  ///< V_i V_k Y_ik
    VectorXd w1; ///< -U sin(arg), weights of the active power flow graph
    VectorXd w2; ///< U cos(arg)
};

EdgeWeights edge_weights(const ModelMatrices& model, const VectorXd& theta, const VectorXd& v);
EdgeWeights edge_weights(const ModelMatrices& model, const Equilibrium& eq);

/// P_hat_i = V_i^2 Ghat_i + sum_k U cos(arg), Q_hat_i = -V_i^2 Bhat_i + sum_k U sin(arg).
std::pair<VectorXd, VectorXd> injection_hats(const ModelMatrices& model, const VectorXd& theta, const VectorXd& v);

/// Partial derivatives of [f_P; f_Q] with respect to [theta; V] (2n x 2n),
/// valid at any state. Newton and the Jacobian assembly share it.
MatrixXd force_jacobian(const ModelMatrices& model, const VectorXd& theta, const VectorXd& v);

struct SmallSignal {
    MatrixXd j; ///< 3n x 3n, state order [theta; omega; V]
    VectorXd u, w1, w2;
    MatrixXd l1, l2, l_lp;
    VectorXd p_hat, q_hat;
    MatrixXd j_a; ///< 2n x 2n decoupled angle block
    MatrixXd j_v; ///< n x n decoupled voltage block
};

SmallSignal assemble_jacobian(const ModelMatrices& model, const Equilibrium& eq);

struct DecoupledBlocks {
    MatrixXd j_a;
    MatrixXd j_v;
};

DecoupledBlocks decoupled_blocks(const SmallSignal& ss, const ModelMatrices& model, const Equilibrium& eq);

struct CouplingMeasure {
    double w2_max = 0.0;         ///< max_m |W2_m|
    double offblock_ratio = 0.0; ///< ||angle<->voltage blocks of J||_F / ||J||_F
};

CouplingMeasure coupling_measure(const SmallSignal& ss);

/// Central differences, one column per perturbed coordinate.
template <typename F>
MatrixXd finite_difference_jacobian(F&& f, const VectorXd& x, double h)
{
    const Index dim = x.size();
    MatrixXd jac(f(x).size(), dim);
    VectorXd xp = x;
    VectorXd xm = x;
    for (Index j = 0; j < dim; ++j) {
        xp(j) = x(j) + h;
        xm(j) = x(j) - h;
        jac.col(j) = (f(xp) - f(xm)) / (2.0 * h);
        xp(j) = x(j);
        xm(j) = x(j);
    }
    return jac;
}

MatrixXd finite_difference_jacobian(const ModelMatrices& model, const State& x, double h = 1e-6);

} // namespace droopgrid
