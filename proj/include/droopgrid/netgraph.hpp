#pragma once

#include <span>
#include <utility>
#include <vector>

#include "droopgrid/types.hpp"

namespace droopgrid {

/// Series branch between two buses. Bus indices are zero-based.
struct Line {
    int from = 0;
    int to = 0;
    double r = 0.0; ///< series resistance (p.u.)
    double x = 0.0; ///< series reactance (p.u.)

    friend bool operator==(const Line&, const Line&) = default;
};

/// One orientation of a line. `line` indexes the caller's line list.
struct DirectedEdge {
    int from = 0;
    int to = 0;
    int line = 0;
};

/// Canonical directed-edge order: lines sorted by (min, max) bus pair, each
/// emitted as (min -> max) followed by (max -> min). Every matrix indexed by
/// edge in this library uses this order.
std::vector<DirectedEdge> directed_edges(std::span<const Line> lines);

/// Throws InputError on out-of-range buses, self loops, duplicate pairs,
/// negative R or non-positive X.
void validate_lines(int n, std::span<const Line> lines);

bool is_connected(int n, std::span<const Line> lines);

/// Bus admittance matrix and per-directed-edge polar form of its off-diagonal entries.
struct YBus {
    MatrixXd g;   ///< conductance, n x n
    MatrixXd b;   ///< susceptance, n x n
    VectorXd y;   ///< |Y_ik| per directed edge (canonical order)
    VectorXd phi; ///< arg(Y_ik) per directed edge, in [pi/2, pi]

    Index size() const { return g.rows(); }
    Index edge_count() const { return y.size(); }
};

YBus build_ybus(int n, std::span<const Line> lines);

struct IncidenceSet {
    MatrixXd e;   ///< n x 2l signed incidence (+1 at source, -1 at sink)
    MatrixXd c;   ///< n x 2l orientation (1 at source)
    MatrixXd e_u; ///< n x l undirected incidence, column j oriented min -> max
    std::vector<DirectedEdge> edges; ///< edge m -> (from, to, line)
    std::vector<int> line_order;     ///< column j of e_u -> index into the line list
};

/// Throws InputError when the network is not connected.
IncidenceSet incidence(std::span<const Line> lines, int n);

struct PhiStats {
    double phi0 = 0.0;   ///< mean admittance angle over lines (rad)
    double spread = 0.0; ///< max |phi_line - phi0| (rad)
};

/// One angle per undirected line; assumes the canonical paired edge order.
PhiStats phi_stats(const YBus& ybus);

} // namespace droopgrid
