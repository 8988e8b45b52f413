#include "droopgrid/smallsignal.hpp"

namespace droopgrid {

MatrixXd directed_laplacian(std::span<const DirectedEdge> edges, const VectorXd& w, Index n)
{
    MatrixXd l = MatrixXd::Zero(n, n);
    for (std::size_t m = 0; m < edges.size(); ++m) {
        const auto& ed = edges[m];
        l(ed.from, ed.from) += w(static_cast<Index>(m));
        l(ed.from, ed.to) -= w(static_cast<Index>(m));
    }
    return l;
}

EdgeWeights edge_weights(const ModelMatrices& model, const VectorXd& theta, const VectorXd& v)
{
    const VectorXd arg = edge_argument(model, theta);
    EdgeWeights w;
    w.u.resize(model.edge_count());
    for (Index e = 0; e < model.edge_count(); ++e) {
        const auto& ed = model.edges[static_cast<std::size_t>(e)];
        w.u(e) = v(ed.from) * v(ed.to) * model.y_edge(e);
    }
    w.w1 = -w.u.cwiseProduct(arg.array().sin().matrix());
    w.w2 = w.u.cwiseProduct(arg.array().cos().matrix());
    return w;
}

EdgeWeights edge_weights(const ModelMatrices& model, const Equilibrium& eq)
{
    return edge_weights(model, eq.theta, eq.v);
}

std::pair<VectorXd, VectorXd> injection_hats(const ModelMatrices& model, const VectorXd& theta, const VectorXd& v)
{
    VectorXd p_hat = v.cwiseAbs2().cwiseProduct(model.g_hat);
    VectorXd q_hat = -v.cwiseAbs2().cwiseProduct(model.b_hat);
    const VectorXd arg = edge_argument(model, theta);
    for (Index e = 0; e < model.edge_count(); ++e) {
        const auto& ed = model.edges[static_cast<std::size_t>(e)];
        const double u = v(ed.from) * v(ed.to) * model.y_edge(e);
        p_hat(ed.from) += u * std::cos(arg(e));
        q_hat(ed.from) += u * std::sin(arg(e));
    }
    return {p_hat, q_hat};
}

MatrixXd force_jacobian(const ModelMatrices& model, const VectorXd& theta, const VectorXd& v)
{
    const Index n = model.size();
    const auto w = edge_weights(model, theta, v);
    const MatrixXd l1 = directed_laplacian(model.edges, w.w1, n);
    const MatrixXd l2 = directed_laplacian(model.edges, w.w2, n);
    const auto [p_hat, q_hat] = injection_hats(model, theta, v);
    const VectorXd v_inv = v.cwiseInverse();

    MatrixXd df(2 * n, 2 * n);
    df.topLeftCorner(n, n) = -l1;
    df.topRightCorner(n, n) = (l2 - MatrixXd(2.0 * p_hat.asDiagonal())) * v_inv.asDiagonal();
    df.bottomLeftCorner(n, n) = -l2;
    MatrixXd vv = l1;
    vv.diagonal() += 2.0 * q_hat + model.d_q.cwiseProduct(v);
    df.bottomRightCorner(n, n) = -vv * v_inv.asDiagonal();
    return df;
}

SmallSignal assemble_jacobian(const ModelMatrices& model, const Equilibrium& eq)
{
    const Index n = model.size();
    if (eq.theta.size() != n || eq.v.size() != n)
        throw InputError("equilibrium dimension does not match the model");

    SmallSignal ss;
    const auto w = edge_weights(model, eq);
    ss.u = w.u;
    ss.w1 = w.w1;
    ss.w2 = w.w2;
    ss.l1 = directed_laplacian(model.edges, w.w1, n);
    ss.l2 = directed_laplacian(model.edges, w.w2, n);
    std::tie(ss.p_hat, ss.q_hat) = injection_hats(model, eq.theta, eq.v);
    ss.l_lp = ss.l1;
    ss.l_lp.diagonal() += 2.0 * ss.q_hat;

    const MatrixXd df = force_jacobian(model, eq.theta, eq.v);
    const VectorXd mp_inv = model.m_p.cwiseInverse();
    const VectorXd mq_inv = model.m_q.cwiseInverse();

    ss.j = MatrixXd::Zero(3 * n, 3 * n);
    ss.j.block(0, n, n, n).setIdentity();
    ss.j.block(n, 0, n, n) = mp_inv.asDiagonal() * df.topLeftCorner(n, n);
    ss.j.block(n, n, n, n) = (-mp_inv.cwiseProduct(model.d_p)).asDiagonal();
    ss.j.block(n, 2 * n, n, n) = mp_inv.asDiagonal() * df.topRightCorner(n, n);
    ss.j.block(2 * n, 0, n, n) = mq_inv.asDiagonal() * df.bottomLeftCorner(n, n);
    ss.j.block(2 * n, 2 * n, n, n) = mq_inv.asDiagonal() * df.bottomRightCorner(n, n);

    auto blocks = decoupled_blocks(ss, model, eq);
    ss.j_a = std::move(blocks.j_a);
    ss.j_v = std::move(blocks.j_v);
    return ss;
}

DecoupledBlocks decoupled_blocks(const SmallSignal& ss, const ModelMatrices& model, const Equilibrium& eq)
{
    const Index n = model.size();
    const VectorXd mp_inv = model.m_p.cwiseInverse();
    DecoupledBlocks out;
    out.j_a = MatrixXd::Zero(2 * n, 2 * n);
    out.j_a.topRightCorner(n, n).setIdentity();
    out.j_a.bottomLeftCorner(n, n) = -(mp_inv.asDiagonal() * ss.l1);
    out.j_a.bottomRightCorner(n, n) = (-mp_inv.cwiseProduct(model.d_p)).asDiagonal();

    MatrixXd vv = ss.l_lp;
    vv.diagonal() += model.d_q.cwiseProduct(eq.v);
    out.j_v = -(model.m_q.cwiseInverse().asDiagonal() * vv * eq.v.cwiseInverse().asDiagonal());
    return out;
}

CouplingMeasure coupling_measure(const SmallSignal& ss)
{
    const Index n = ss.j.rows() / 3;
    CouplingMeasure c;
    c.w2_max = ss.w2.size() > 0 ? ss.w2.cwiseAbs().maxCoeff() : 0.0;
    const double total = ss.j.norm();
    if (total > 0.0) {
        const double upper = ss.j.topRightCorner(2 * n, n).squaredNorm();
        const double lower = ss.j.bottomLeftCorner(n, 2 * n).squaredNorm();
        c.offblock_ratio = std::sqrt(upper + lower) / total;
    }
    return c;
}

MatrixXd finite_difference_jacobian(const ModelMatrices& model, const State& x, double h)
{
    return finite_difference_jacobian([&](const VectorXd& z) { return rhs(model, z); }, x.flat(), h);
}

} // namespace droopgrid
