#include "droopgrid/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <set>
#include <string>

#include "droopgrid/error.hpp"

namespace droopgrid {

namespace {

std::vector<int> sorted_line_order(std::span<const Line> lines)
{
    std::vector<int> order(lines.size());
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](int j) {
        const auto& ln = lines[static_cast<std::size_t>(j)];
        return std::pair{std::min(ln.from, ln.to), std::max(ln.from, ln.to)};
    };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
    return order;
}

std::string line_label(const Line& ln)
{
    return "line (" + std::to_string(ln.from + 1) + "," + std::to_string(ln.to + 1) + ")";
}

} // namespace

std::vector<DirectedEdge> directed_edges(std::span<const Line> lines)
{
    std::vector<DirectedEdge> edges;
    edges.reserve(2 * lines.size());
    for (int j : sorted_line_order(lines)) {
        const auto& ln = lines[static_cast<std::size_t>(j)];
        const int lo = std::min(ln.from, ln.to);
        const int hi = std::max(ln.from, ln.to);
        edges.push_back({lo, hi, j});
        edges.push_back({hi, lo, j});
    }
    return edges;
}

void validate_lines(int n, std::span<const Line> lines)
{
    std::set<std::pair<int, int>> seen;
    for (const auto& ln : lines) {
        if (ln.from < 0 || ln.from >= n || ln.to < 0 || ln.to >= n)
            throw InputError(line_label(ln) + ": bus index out of range 1.." + std::to_string(n));
        if (ln.from == ln.to)
            throw InputError(line_label(ln) + ": from and to buses coincide");
        if (!(ln.x > 0.0) || !std::isfinite(ln.x))
            throw InputError(line_label(ln) + ": reactance x must be positive");
        if (!(ln.r >= 0.0) || !std::isfinite(ln.r))
            throw InputError(line_label(ln) + ": resistance r must be non-negative");
        if (!seen.insert({std::min(ln.from, ln.to), std::max(ln.from, ln.to)}).second)
            throw InputError(line_label(ln) + ": duplicate line between the same buses");
    }
}

bool is_connected(int n, std::span<const Line> lines)
{
    if (n <= 1)
        return n == 1;
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
        while (parent[a] != a)
            a = parent[a] = parent[parent[a]];
        return a;
    };
    int components = n;
    for (const auto& ln : lines) {
        const int a = find(ln.from);
        const int b = find(ln.to);
        if (a != b) {
            parent[a] = b;
            --components;
        }
    }
    return components == 1;
}

YBus build_ybus(int n, std::span<const Line> lines)
{
    validate_lines(n, lines);
    const auto edges = directed_edges(lines);

    YBus yb;
    yb.g = MatrixXd::Zero(n, n);
    yb.b = MatrixXd::Zero(n, n);
    yb.y.resize(static_cast<Index>(edges.size()));
    yb.phi.resize(static_cast<Index>(edges.size()));

    for (const auto& ln : lines) {
        const std::complex<double> series = 1.0 / std::complex<double>(ln.r, ln.x);
        yb.g(ln.from, ln.from) += series.real();
        yb.b(ln.from, ln.from) += series.imag();
        yb.g(ln.to, ln.to) += series.real();
        yb.b(ln.to, ln.to) += series.imag();
        yb.g(ln.from, ln.to) -= series.real();
        yb.b(ln.from, ln.to) -= series.imag();
        yb.g(ln.to, ln.from) -= series.real();
        yb.b(ln.to, ln.from) -= series.imag();
    }
    for (std::size_t m = 0; m < edges.size(); ++m) {
        const std::complex<double> entry(yb.g(edges[m].from, edges[m].to), yb.b(edges[m].from, edges[m].to));
        yb.y(static_cast<Index>(m)) = std::abs(entry);
        yb.phi(static_cast<Index>(m)) = std::arg(entry);
    }
    return yb;
}

IncidenceSet incidence(std::span<const Line> lines, int n)
{
    validate_lines(n, lines);
    if (!is_connected(n, lines))
        throw InputError("network is not connected");

    IncidenceSet inc;
    inc.edges = directed_edges(lines);
    inc.line_order = sorted_line_order(lines);
    const auto two_l = static_cast<Index>(inc.edges.size());
    const auto l = static_cast<Index>(lines.size());
    inc.e = MatrixXd::Zero(n, two_l);
    inc.c = MatrixXd::Zero(n, two_l);
    inc.e_u = MatrixXd::Zero(n, l);
    for (Index m = 0; m < two_l; ++m) {
        const auto& ed = inc.edges[static_cast<std::size_t>(m)];
        inc.e(ed.from, m) = 1.0;
        inc.e(ed.to, m) = -1.0;
        inc.c(ed.from, m) = 1.0;
    }
    for (Index j = 0; j < l; ++j) {
        const auto& ed = inc.edges[static_cast<std::size_t>(2 * j)];
        inc.e_u(ed.from, j) = 1.0;
        inc.e_u(ed.to, j) = -1.0;
    }
    return inc;
}

PhiStats phi_stats(const YBus& ybus)
{
    const Index lines = ybus.edge_count() / 2;
    PhiStats s;
    if (lines == 0)
        return s;
    for (Index j = 0; j < lines; ++j)
        s.phi0 += ybus.phi(2 * j);
    s.phi0 /= static_cast<double>(lines);
    for (Index j = 0; j < lines; ++j)
        s.spread = std::max(s.spread, std::abs(ybus.phi(2 * j) - s.phi0));
    return s;
}

} // namespace droopgrid
