#pragma once

// Offline stage I: per-edge spectral reduction of the snapshot space with
//   a(v,u) = int_{E_i} kappa^{-1} (v.n)(u.n)
//   s(v,u) = (1/H) ( int_{D_i} kappa^{-1} v.u + int_{D_i} div v div u ).

#include "msflow/snapshot.hpp"

#include <Eigen/Eigenvalues>

namespace msflow {

struct edge_spectral_result
{
    index_t edge_id = -1;
    vector_t eigenvalues;  ///< ascending
    matrix_t eigenvectors; ///< snapshot coefficients, s-orthonormal columns
    index_t selected = 0;
    matrix_t A_snap, S_snap;
};

/// Edge-trace inverse permeability from the two adjacent cells (harmonic mean).
inline double
edge_inverse_kappa(const grid_hierarchy& g, std::span<const double> field, index_t edge)
{
    const auto e = g.edge(edge);
    double s = 0;
    int n = 0;
    for (index_t c : {e.minus_cell, e.plus_cell})
        if (c >= 0) {
            s += 1.0 / field[std::size_t(c)];
            ++n;
        }
    return s / double(n);
}

/// Spectral matrices of a standard snapshot space.
inline std::pair<matrix_t, matrix_t>
spectral_forms(const grid_hierarchy& g, std::span<const double> field, const snapshot_space& space)
{
    detail::require(space.kind == region_kind::standard, "spectral: needs a standard snapshot space");
    const index_t L = space.size();
    const auto& fn = space.functions;

    // Edge-trace form over the line edges of E_i.
    matrix_t A = matrix_t::Zero(L, L);
    std::vector<index_t> line_pos;
    for (index_t e : space.line_edges)
        line_pos.push_back(detail::closure_index(fn.region, g.edge(e)));
    for (std::size_t a = 0; a < space.line_edges.size(); ++a) {
        const double w = edge_inverse_kappa(g, field, space.line_edges[a]) * g.edge_length(space.line_edges[a]);
        const auto row = fn.values.row(line_pos[a]);
        A.noalias() += w * row.transpose() * row;
    }

    const auto forms = assemble_block(g, fn.region, field);
    matrix_t S = fn.values.transpose() * (forms.A * fn.values);
    // Divergences are constant per coarse element.
    const double cell_area = g.coarse_hx() * g.coarse_hy();
    S.noalias() += cell_area * space.divergences.transpose() * space.divergences;
    const double H = g.coarse_edge_length(space.edge_id);
    S /= H;
    return {A, S};
}

inline edge_spectral_result
edge_spectral_problem(const grid_hierarchy& g, std::span<const double> field, const snapshot_space& space)
{
    auto [A, S] = spectral_forms(g, field, space);
    Eigen::LLT<matrix_t> llt(S);
    if (llt.info() != Eigen::Success)
        throw numerical_error("spectral: s-form is not positive definite (degenerate snapshots) on edge " +
                              std::to_string(space.edge_id));
    Eigen::GeneralizedSelfAdjointEigenSolver<matrix_t> es(A, S);
    if (es.info() != Eigen::Success)
        throw numerical_error("spectral: generalized eigensolver failed on edge " + std::to_string(space.edge_id));
    edge_spectral_result r;
    r.edge_id = space.edge_id;
    r.eigenvalues = es.eigenvalues();
    r.eigenvectors = es.eigenvectors();
    r.A_snap = std::move(A);
    r.S_snap = std::move(S);
    return r;
}

} // namespace msflow
