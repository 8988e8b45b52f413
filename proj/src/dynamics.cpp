#include "droopgrid/dynamics.hpp"

#include <cstdlib>

#include "droopgrid/io.hpp"

namespace droopgrid {

Network make_network(const Case& c)
{
    return {build_ybus(c.size(), c.lines), incidence(c.lines, c.size())};
}

ModelMatrices build_model(const Case& c, const YBus& ybus, const IncidenceSet& inc, const VectorXd& alpha)
{
    const Index n = c.size();
    if (alpha.size() != n)
        throw InputError("alpha has " + std::to_string(alpha.size()) + " entries, expected " + std::to_string(n));
    for (Index i = 0; i < n; ++i)
        if (!(alpha(i) >= 0.0 && alpha(i) <= kPi / 2))
            throw InputError("alpha at bus " + std::to_string(i + 1) + " is outside [0, pi/2]");

    ModelMatrices m;
    m.m_p.resize(n);
    m.d_p.resize(n);
    m.m_q.resize(n);
    m.d_q.resize(n);
    m.p0.resize(n);
    m.q0.resize(n);
    m.alpha = alpha;
    m.inverter.resize(static_cast<std::size_t>(n));

    for (Index i = 0; i < n; ++i) {
        const auto& b = c.buses[static_cast<std::size_t>(i)];
        if (!b.p0_net || !b.q0_net)
            throw InputError("bus " + std::to_string(b.id) + " has uncalibrated references");
        const double s = std::sin(alpha(i));
        const double co = std::cos(alpha(i));
        m.p0(i) = *b.p0_net * s - *b.q0_net * co;
        m.q0(i) = *b.p0_net * co + *b.q0_net * s;
        m.inverter[static_cast<std::size_t>(i)] = b.is_inverter();
        if (b.is_inverter()) {
            m.m_p(i) = b.d1 * b.t1;
            m.d_p(i) = b.d1;
            m.m_q(i) = b.d2 * b.t2;
            m.d_q(i) = b.d2;
            m.p0(i) += b.d1 * c.omega0;
            m.q0(i) += b.d2 * b.v0;
        } else {
            m.m_p(i) = c.eps.e1;
            m.d_p(i) = c.eps.e2;
            m.m_q(i) = c.eps.e3;
            m.d_q(i) = 0.0;
        }
    }

    const VectorXd g_diag = ybus.g.diagonal();
    const VectorXd b_diag = ybus.b.diagonal();
    const VectorXd sin_a = alpha.array().sin();
    const VectorXd cos_a = alpha.array().cos();
    m.g_hat = g_diag.cwiseProduct(sin_a) + b_diag.cwiseProduct(cos_a);
    m.b_hat = -g_diag.cwiseProduct(cos_a) + b_diag.cwiseProduct(sin_a);

    m.edges = inc.edges;
    m.y_edge = ybus.y;
    m.phi_edge = ybus.phi;
    m.alpha_edge.resize(m.edge_count());
    for (Index e = 0; e < m.edge_count(); ++e)
        m.alpha_edge(e) = alpha(m.edges[static_cast<std::size_t>(e)].from);
    m.reference_bus = c.reference_bus();
    return m;
}

ModelMatrices build_model(const Case& c, const VectorXd& alpha)
{
    const auto net = make_network(c);
    return build_model(c, net.ybus, net.inc, alpha);
}

void power_injections(const YBus& ybus, std::span<const DirectedEdge> edges, const VectorXd& theta,
                      const VectorXd& v, VectorXd& p, VectorXd& q)
{
    p = v.cwiseAbs2().cwiseProduct(ybus.g.diagonal());
    q = -v.cwiseAbs2().cwiseProduct(ybus.b.diagonal());
    for (std::size_t m = 0; m < edges.size(); ++m) {
        const auto& ed = edges[m];
        const auto e = static_cast<Index>(m);
        const double u = v(ed.from) * v(ed.to) * ybus.y(e);
        const double arg = theta(ed.from) - theta(ed.to) - ybus.phi(e);
        p(ed.from) += u * std::cos(arg);
        q(ed.from) += u * std::sin(arg);
    }
}

VectorXd dae_residual(const Case& c, const YBus& ybus, const State& x)
{
    std::vector<int> loads;
    for (int i = 0; i < c.size(); ++i)
        if (!c.buses[static_cast<std::size_t>(i)].is_inverter())
            loads.push_back(i);

    const auto edges = directed_edges(c.lines);
    VectorXd p, q;
    power_injections(ybus, edges, x.theta, x.v, p, q);

    const auto nb = static_cast<Index>(loads.size());
    VectorXd r(2 * nb);
    for (Index j = 0; j < nb; ++j) {
        const auto& b = c.buses[static_cast<std::size_t>(loads[static_cast<std::size_t>(j)])];
        if (!b.p0_net || !b.q0_net)
            throw InputError("bus " + std::to_string(b.id) + " has uncalibrated references");
        // 0 = -P0_L - V^2 G_ii - sum(...), with P0_L = -p0_net; likewise for Q.
        r(j) = *b.p0_net - p(loads[static_cast<std::size_t>(j)]);
        r(nb + j) = *b.q0_net - q(loads[static_cast<std::size_t>(j)]);
    }
    return r;
}

AlphaPolicy AlphaPolicy::parse(const std::string& text)
{
    if (text == "auto")
        return {Kind::automatic, 0.0};
    if (text == "traditional")
        return {Kind::traditional, kPi / 2};
    char* end = nullptr;
    const double value = std::strtod(text.c_str(), &end);
    if (end == text.c_str() || *end != '\0')
        throw InputError("alpha must be auto, traditional or an angle in radians (got '" + text + "')");
    if (!(value >= 0.0 && value <= kPi / 2))
        throw InputError("fixed alpha " + text + " is outside [0, pi/2]");
    return {Kind::fixed, value};
}

std::string AlphaPolicy::describe() const
{
    switch (kind) {
    case Kind::automatic:
        return "auto";
    case Kind::traditional:
        return "traditional";
    case Kind::fixed:
        break;
    }
    return "fixed(" + format_number(value) + ")";
}

VectorXd select_alpha(const YBus& ybus, int n, const AlphaPolicy& policy)
{
    switch (policy.kind) {
    case AlphaPolicy::Kind::automatic:
        if (ybus.edge_count() == 0)
            return VectorXd::Constant(n, kPi / 2);
        return VectorXd::Constant(n, kPi - phi_stats(ybus).phi0);
    case AlphaPolicy::Kind::traditional:
        return VectorXd::Constant(n, kPi / 2);
    case AlphaPolicy::Kind::fixed:
        if (!(policy.value >= 0.0 && policy.value <= kPi / 2))
            throw InputError("fixed alpha is outside [0, pi/2]");
        return VectorXd::Constant(n, policy.value);
    }
    return {};
}

VectorXd case_alpha(const Case& c, const YBus& ybus, const AlphaPolicy& policy)
{
    VectorXd alpha = select_alpha(ybus, c.size(), policy);
    for (int i = 0; i < c.size(); ++i)
        if (const auto& ov = c.buses[static_cast<std::size_t>(i)].alpha_override)
            alpha(i) = *ov;
    return alpha;
}

} // namespace droopgrid
