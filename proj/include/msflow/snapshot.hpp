#pragma once

// Local snapshot spaces attached to interior coarse edges.
//
// A region is cut into two halves by the line carrying the coarse edge.  For
// every fine edge e_j on that line a mixed problem is solved in each half
// with normal velocity delta_j on the line, no flow on the rest of the half
// boundary and a constant divergence making the half problem solvable.  The
// two half solutions share the line data and glue into one RT0 field.

#include "msflow/mixedfem.hpp"

#include <Eigen/SVD>

namespace msflow {

enum class region_kind : std::uint8_t { standard, oversampled };

/// Velocity fields supported in a rectangular region, stored densely over
/// the region's closure edges.
struct local_functions
{
    cell_rect region;
    std::vector<index_t> edges; ///< global ids of the region closure edges
    matrix_t values;            ///< edges x functions

    index_t size() const { return values.cols(); }

    /// Scatter column k into a global edge vector.
    vector_t global(const grid_hierarchy& g, index_t k) const
    {
        vector_t v = vector_t::Zero(g.num_edges());
        for (std::size_t e = 0; e < edges.size(); ++e)
            v[edges[e]] = values(index_t(e), k);
        return v;
    }

    /// Gather a global edge vector onto the region closure.
    vector_t gather(const vector_t& global) const
    {
        vector_t v(index_t(edges.size()));
        for (std::size_t e = 0; e < edges.size(); ++e)
            v[index_t(e)] = global[edges[e]];
        return v;
    }

    /// All columns as a sparse global matrix (drops exact zeros).
    sparse_t to_sparse(const grid_hierarchy& g) const
    {
        std::vector<triplet_t> t;
        for (index_t k = 0; k < values.cols(); ++k)
            for (std::size_t e = 0; e < edges.size(); ++e)
                if (values(index_t(e), k) != 0.0)
                    t.emplace_back(edges[e], k, values(index_t(e), k));
        sparse_t s(g.num_edges(), values.cols());
        s.setFromTriplets(t.begin(), t.end());
        return s;
    }
};

struct snapshot_space
{
    index_t edge_id = -1;
    region_kind kind = region_kind::standard;
    std::array<cell_rect, 2> halves;
    std::vector<index_t> line_edges; ///< fine edges carrying delta_j (E_i or E_i^+)
    std::vector<index_t> edge_fine_edges; ///< fine edges of E_i
    local_functions functions;
    std::vector<index_t> coarse_cells; ///< coarse elements of the region
    /// Constant divergence of each function on each coarse element
    /// (rows follow coarse_cells).
    matrix_t divergences;

    index_t size() const { return functions.size(); }
};

namespace detail {

inline index_t
closure_index(const cell_rect& r, const fine_edge_info& e)
{
    const block_layout lay(r);
    return e.normal == axis::x ? lay.x_edge(e.i, e.j) : lay.y_edge(e.i, e.j);
}

} // namespace detail

/// Solve the two half problems for each column of `trace` (normal velocity
/// along +n on the line edges) and glue.  Returns the glued fields and, per
/// column, the constant divergence in each half.
inline std::pair<local_functions, matrix_t>
glued_local_solve(const grid_hierarchy& g, std::span<const double> field, const std::array<cell_rect, 2>& halves,
                  const std::vector<index_t>& line_edges, const matrix_t& trace)
{
    detail::require(trace.rows() == index_t(line_edges.size()), "local solve: trace size mismatch");
    const cell_rect region{std::min(halves[0].i0, halves[1].i0), std::min(halves[0].j0, halves[1].j0),
                           std::max(halves[0].i1, halves[1].i1), std::max(halves[0].j1, halves[1].j1)};
    const index_t m = trace.cols();
    local_functions out{region, g.edges_in(region), matrix_t::Zero(index_t(g.edges_in(region).size()), m)};
    matrix_t div(2, m);

    vector_t line_flux(m);
    for (index_t k = 0; k < m; ++k) {
        double s = 0;
        for (std::size_t e = 0; e < line_edges.size(); ++e)
            s += trace(index_t(e), k) * g.edge_length(line_edges[e]);
        line_flux[k] = s;
    }

    for (int h = 0; h < 2; ++h) {
        const cell_rect& r = halves[std::size_t(h)];
        block_solver solver(g, r);
        solver.factorize(field);
        const auto& forms = solver.forms();
        const index_t ne = index_t(forms.edges.size()), nc = index_t(forms.cells.size());
        matrix_t gb = matrix_t::Zero(ne, m);
        for (std::size_t e = 0; e < line_edges.size(); ++e)
            gb.row(detail::closure_index(r, g.edge(line_edges[e]))) = trace.row(index_t(e));
        // Minus half: the line is on its +n side (outflow); plus half: inflow.
        const double sign = h == 0 ? 1.0 : -1.0;
        const double area = double(r.size()) * g.cell_area();
        matrix_t src(nc, m);
        for (index_t k = 0; k < m; ++k) {
            div(h, k) = sign * line_flux[k] / area;
            src.col(k).setConstant(div(h, k) * g.cell_area());
        }
        const auto [vel, p] = solver.solve(gb, src);
        for (index_t e = 0; e < ne; ++e)
            out.values.row(detail::closure_index(region, g.edge(forms.edges[std::size_t(e)]))) = vel.row(e);
    }
    return {std::move(out), std::move(div)};
}

namespace detail {

inline snapshot_space
snapshots_on(const grid_hierarchy& g, std::span<const double> field, index_t edge_id, region_kind kind,
             const std::array<cell_rect, 2>& halves, std::vector<index_t> line, std::vector<index_t> core_edge)
{
    snapshot_space s;
    s.edge_id = edge_id;
    s.kind = kind;
    s.halves = halves;
    s.line_edges = std::move(line);
    s.edge_fine_edges = std::move(core_edge);
    const index_t L = index_t(s.line_edges.size());
    auto [fn, div] = glued_local_solve(g, field, halves, s.line_edges, matrix_t::Identity(L, L));
    s.functions = std::move(fn);

    for (index_t cj = 0; cj < g.coarse_ny(); ++cj)
        for (index_t ci = 0; ci < g.coarse_nx(); ++ci) {
            const index_t k = g.coarse_cell_id(ci, cj);
            if (s.functions.region.contains(g.coarse_cell_rect(k)))
                s.coarse_cells.push_back(k);
        }
    s.divergences.resize(index_t(s.coarse_cells.size()), L);
    for (std::size_t r = 0; r < s.coarse_cells.size(); ++r) {
        const int h = halves[0].contains(g.coarse_cell_rect(s.coarse_cells[r])) ? 0 : 1;
        s.divergences.row(index_t(r)) = div.row(h);
    }
    return s;
}

} // namespace detail

inline snapshot_space
build_edge_snapshots(const grid_hierarchy& g, std::span<const double> field, index_t edge_id)
{
    const auto n = make_neighborhood(g, edge_id);
    return detail::snapshots_on(g, field, edge_id, region_kind::standard, n.halves, n.edge_fine_edges,
                                n.edge_fine_edges);
}

inline snapshot_space
build_oversampled_snapshots(const grid_hierarchy& g, std::span<const double> field, index_t edge_id,
                            index_t layers)
{
    const auto n = make_oversampled(g, edge_id, layers);
    return detail::snapshots_on(g, field, edge_id, layers == 0 ? region_kind::standard : region_kind::oversampled,
                                n.halves, n.extended_edge, n.edge_fine_edges);
}

/// Orthonormal basis (in snapshot-coefficient space) of the combinations
/// whose divergence vanishes on every coarse element of the region.
inline matrix_t
nullspace(const matrix_t& M, double rel_tol = 1e-10)
{
    const index_t n = M.cols();
    if (n == 0)
        return matrix_t(0, 0);
    if (M.rows() == 0)
        return matrix_t::Identity(n, n);
    Eigen::JacobiSVD<matrix_t> svd(M, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() ? sv[0] : 0.0;
    index_t rank = 0;
    for (index_t i = 0; i < sv.size(); ++i)
        if (sv[i] > rel_tol * smax)
            ++rank;
    return svd.matrixV().rightCols(n - rank);
}

inline matrix_t
divergence_free_subspace(const snapshot_space& s)
{
    return nullspace(s.divergences);
}

} // namespace msflow
