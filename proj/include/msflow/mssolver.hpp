#pragma once

// Multiscale velocity spaces (frozen after training) and the reduced coarse
// saddle-point solve for any test coefficient and source.

#include "msflow/pool.hpp"
#include "msflow/spectral.hpp"

#include <map>

namespace msflow {

enum class basis_stage : std::uint8_t { offline = 1, residual = 2 };

/// Velocity basis U (global fine edges x columns) with per-column ownership.
struct multiscale_space
{
    sparse_t U;
    std::vector<index_t> owner;      ///< coarse edge of each column
    std::vector<basis_stage> stage;  ///< stage of each column
    std::array<index_t, 2> stage_counts{0, 0}; ///< the "A+B" naming
    std::map<std::string, std::string> metadata;

    index_t size() const { return U.cols(); }

    index_t count(basis_stage s) const { return index_t(std::count(stage.begin(), stage.end(), s)); }

    void append(const sparse_t& cols, index_t owner_edge, basis_stage s)
    {
        if (U.rows() == 0 && U.cols() == 0)
            U.resize(cols.rows(), 0);
        detail::require(cols.rows() == U.rows(), "space: row count mismatch");
        sparse_t merged(U.rows(), U.cols() + cols.cols());
        merged.reserve(U.nonZeros() + cols.nonZeros());
        for (index_t k = 0; k < U.cols(); ++k) {
            merged.startVec(k);
            for (sparse_t::InnerIterator it(U, k); it; ++it)
                merged.insertBack(it.row(), k) = it.value();
        }
        for (index_t k = 0; k < cols.cols(); ++k) {
            merged.startVec(U.cols() + k);
            for (sparse_t::InnerIterator it(cols, k); it; ++it)
                merged.insertBack(it.row(), U.cols() + k) = it.value();
            owner.push_back(owner_edge);
            stage.push_back(s);
        }
        merged.finalize();
        U = std::move(merged);
    }
};

inline multiscale_space
empty_space(const grid_hierarchy& g)
{
    multiscale_space s;
    s.U.resize(g.num_edges(), 0);
    return s;
}

/// Standard snapshots and spectral problems for every interior coarse edge.
struct offline_stage
{
    std::vector<snapshot_space> snapshots;
    std::vector<edge_spectral_result> spectra;
};

inline offline_stage
compute_offline_stage(const grid_hierarchy& g, std::span<const double> field, unsigned jobs = 1)
{
    const std::size_t n = std::size_t(g.num_coarse_edges());
    offline_stage s;
    s.snapshots.resize(n);
    s.spectra.resize(n);
    parallel_for(n, jobs, [&](std::size_t i) {
        s.snapshots[i] = build_edge_snapshots(g, field, index_t(i));
        s.spectra[i] = edge_spectral_problem(g, field, s.snapshots[i]);
    });
    return s;
}

/// V_ms,0: for each edge, the eigenfunctions of the l_i smallest eigenvalues
/// mapped back to fine velocities.
inline multiscale_space
build_offline_space(const grid_hierarchy& g, const std::vector<snapshot_space>& snapshots,
                    const std::vector<edge_spectral_result>& results, const std::vector<index_t>& counts)
{
    detail::require(snapshots.size() == results.size() && counts.size() == results.size(),
                     "offline space: one snapshot space, spectral result and count per edge");
    multiscale_space s = empty_space(g);
    for (std::size_t i = 0; i < results.size(); ++i) {
        const index_t l = counts[i];
        if (l < 0 || l > results[i].eigenvalues.size())
            throw config_error("offline space: l_i = " + std::to_string(l) + " exceeds L_i = " +
                               std::to_string(results[i].eigenvalues.size()) + " on edge " +
                               std::to_string(results[i].edge_id));
        if (l == 0)
            continue;
        local_functions f = snapshots[i].functions;
        f.values = snapshots[i].functions.values * results[i].eigenvectors.leftCols(l);
        s.append(f.to_sparse(g), results[i].edge_id, basis_stage::offline);
    }
    return s;
}

inline multiscale_space
build_offline_space(const grid_hierarchy& g, const std::vector<snapshot_space>& snapshots,
                    const std::vector<edge_spectral_result>& results, index_t uniform_count)
{
    multiscale_space s =
        build_offline_space(g, snapshots, results, std::vector<index_t>(results.size(), uniform_count));
    s.stage_counts = {uniform_count, 0};
    return s;
}

/// Piecewise-constant coarse pressures embedded in the fine cells.
struct coarse_pressure_space
{
    sparse_t Mc; ///< fine cells x coarse cells
};

inline coarse_pressure_space
make_pressure_space(const grid_hierarchy& g)
{
    std::vector<triplet_t> t;
    t.reserve(std::size_t(g.num_cells()));
    for (index_t c = 0; c < g.num_cells(); ++c)
        t.emplace_back(c, g.coarse_cell_of(c), 1.0);
    coarse_pressure_space p;
    p.Mc.resize(g.num_cells(), g.num_coarse_cells());
    p.Mc.setFromTriplets(t.begin(), t.end());
    return p;
}

/// Orthonormal basis Q (sparse, global fine edges x rank) of the space.
///
/// Every column owned by an edge is fixed by its normal trace on that edge
/// and no other column has flux there, so dependence can only occur inside
/// an owner group.  Each group is orthonormalized by a column-pivoted QR of
/// its normalized columns; pivots below `drop_tol` mark dropped columns.
struct orthonormal_basis
{
    sparse_t Q;
    std::vector<index_t> kept;    ///< space columns carried by Q
    std::vector<index_t> dropped; ///< space columns found dependent

    index_t rank() const { return Q.cols(); }
};

inline orthonormal_basis
orthonormalize(const multiscale_space& space, double drop_tol = 1e-10)
{
    orthonormal_basis ob;
    const index_t n = space.size();
    std::map<index_t, std::vector<index_t>> groups;
    for (index_t k = 0; k < n; ++k)
        groups[space.owner[std::size_t(k)]].push_back(k);

    std::vector<triplet_t> t;
    index_t col = 0;
    for (const auto& [owner, cols] : groups) {
        std::vector<index_t> rows;
        for (index_t k : cols)
            for (sparse_t::InnerIterator it(space.U, k); it; ++it)
                rows.push_back(it.row());
        std::sort(rows.begin(), rows.end());
        rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
        const index_t m = index_t(rows.size()), ng = index_t(cols.size());

        matrix_t M = matrix_t::Zero(m, ng);
        for (index_t c = 0; c < ng; ++c)
            for (sparse_t::InnerIterator it(space.U, cols[std::size_t(c)]); it; ++it)
                M(std::lower_bound(rows.begin(), rows.end(), it.row()) - rows.begin(), c) = it.value();
        for (index_t c = 0; c < ng; ++c) {
            const double nc = M.col(c).norm();
            if (nc > 0)
                M.col(c) /= nc;
        }
        Eigen::ColPivHouseholderQR<matrix_t> qr(M);
        qr.setThreshold(drop_tol);
        const index_t r = m > 0 ? qr.rank() : 0;
        const auto& perm = qr.colsPermutation().indices();
        std::vector<char> keep(std::size_t(ng), 0);
        for (index_t k = 0; k < r; ++k)
            keep[std::size_t(perm[k])] = 1;
        for (index_t c = 0; c < ng; ++c)
            (keep[std::size_t(c)] ? ob.kept : ob.dropped).push_back(cols[std::size_t(c)]);

        const matrix_t Qg = qr.householderQ() * matrix_t::Identity(m, r);
        for (index_t c = 0; c < r; ++c, ++col)
            for (index_t i = 0; i < m; ++i)
                if (Qg(i, c) != 0.0)
                    t.emplace_back(rows[std::size_t(i)], col, Qg(i, c));
    }
    std::sort(ob.kept.begin(), ob.kept.end());
    std::sort(ob.dropped.begin(), ob.dropped.end());
    ob.Q.resize(space.U.rows(), col);
    ob.Q.setFromTriplets(t.begin(), t.end());
    return ob;
}

struct reduced_system
{
    sparse_t A; ///< Q^T A_f Q
    sparse_t B; ///< M_c^T B_f Q
    vector_t F; ///< M_c^T F_f
    vector_t G; ///< velocity load, empty for zero
    index_t gauge = 0;

    index_t num_unknowns() const { return A.rows() + B.rows(); }
};

inline reduced_system
assemble_reduced(const orthonormal_basis& basis, const coarse_pressure_space& P, const saddle_system& fine)
{
    detail::require(basis.Q.rows() == fine.A.rows() && P.Mc.rows() == fine.B.rows(),
                    "reduced: basis / pressure space do not match the fine system");
    reduced_system r;
    const sparse_t AQ = fine.A * basis.Q;
    r.A = basis.Q.transpose() * AQ;
    const sparse_t McB = P.Mc.transpose() * fine.B;
    r.B = McB * basis.Q;
    r.F = P.Mc.transpose() * fine.rhs;
    return r;
}

struct coarse_solution
{
    vector_t velocity; ///< coefficients w.r.t. the orthonormal basis
    vector_t pressure; ///< per coarse cell
};

/// Solve of [A -B^T; -B 0] with the gauge coarse cell pinned, through the
/// sparse Cholesky factor of A and the dense pressure Schur complement.
inline coarse_solution
solve_multiscale(const reduced_system& r)
{
    const index_t nv = r.A.rows(), np = r.B.rows();
    if (nv == 0)
        throw numerical_error("multiscale solve: empty velocity space");
    Eigen::SimplicialLLT<sparse_t> llt(r.A);
    if (llt.info() != Eigen::Success)
        throw numerical_error("multiscale solve: reduced mass matrix is not positive definite");
    const matrix_t B = matrix_t(r.B);
    matrix_t B0(np - 1, nv);
    vector_t F0(np - 1);
    for (index_t c = 0, k = 0; c < np; ++c) {
        if (c == r.gauge)
            continue;
        B0.row(k) = B.row(c);
        F0[k++] = r.F[c];
    }
    // A u = B0^T p + G,  B0 u = F0  ->  (B0 A^{-1} B0^T) p = F0 - B0 A^{-1} G.
    const vector_t G = r.G.size() ? r.G : vector_t::Zero(nv);
    const matrix_t AinvBt = llt.solve(matrix_t(B0.transpose()));
    const vector_t AinvG = llt.solve(G);
    const matrix_t S = B0 * AinvBt;
    Eigen::LDLT<matrix_t> ldlt(S);
    const vector_t p0 = ldlt.solve(vector_t(F0 - B0 * AinvG));
    const vector_t u = AinvBt * p0 + AinvG;

    const vector_t Au = r.A * u;
    const double res = (B0 * u - F0).norm() + (Au - B0.transpose() * p0 - G).norm();
    const double scale = F0.norm() + Au.norm() + G.norm();
    if (!std::isfinite(res) || ldlt.info() != Eigen::Success || res > 1e-10 * scale)
        throw numerical_error("multiscale solve: singular reduced system (empty or rank-deficient space)");

    coarse_solution s;
    s.velocity = u;
    s.pressure = vector_t::Zero(np);
    for (index_t c = 0, k = 0; c < np; ++c)
        if (c != r.gauge)
            s.pressure[c] = p0[k++];
    return s;
}

inline flow_solution
prolongate(const orthonormal_basis& basis, const coarse_pressure_space& P, const coarse_solution& c)
{
    detail::require(c.velocity.size() == basis.rank() && c.pressure.size() == P.Mc.cols(),
                    "prolongate: coefficient sizes do not match the spaces");
    flow_solution s;
    s.velocity = basis.Q * c.velocity;
    s.pressure = P.Mc * c.pressure;
    shift_to_zero_mean(s.pressure);
    s.tag = resolution::multiscale;
    return s;
}

/// Frozen-basis solver: reassembles the fine forms for every test coefficient
/// and contracts them with the trained basis.
class ms_solver
{
public:
    ms_solver(const grid_hierarchy& g, const multiscale_space& space)
      : grid_(&g), basis_(orthonormalize(space)), pressure_(make_pressure_space(g))
    {
    }

    const orthonormal_basis& basis() const { return basis_; }
    const coarse_pressure_space& pressure_space() const { return pressure_; }
    index_t num_unknowns() const { return basis_.rank() + grid_->num_coarse_cells(); }

    reduced_system assemble(const vector_t& field_eff, const source_field& f) const
    {
        return assemble_reduced(basis_, pressure_, assemble_saddle(*grid_, field_eff, f));
    }

    flow_solution solve(const vector_t& field_eff, const source_field& f) const
    {
        if (!f.compatible(*grid_))
            throw numerical_error("multiscale solve: source is not compatible with the no-flow boundary");
        return prolongate(basis_, pressure_, solve_multiscale(assemble(field_eff, f)));
    }

    /// Solve for v = w + Q u with a fixed lifting w of the fine edges.
    flow_solution solve(const vector_t& field_eff, const source_field& f, const vector_t& lifting) const
    {
        if (!f.compatible(*grid_))
            throw numerical_error("multiscale solve: source is not compatible with the no-flow boundary");
        detail::require(lifting.size() == grid_->num_edges(), "multiscale solve: lifting size mismatch");
        const saddle_system fine = assemble_saddle(*grid_, field_eff, f);
        reduced_system r = assemble_reduced(basis_, pressure_, fine);
        r.G = -(basis_.Q.transpose() * (fine.A * lifting));
        r.F -= pressure_.Mc.transpose() * (fine.B * lifting);
        flow_solution s = prolongate(basis_, pressure_, solve_multiscale(r));
        s.velocity += lifting;
        return s;
    }

private:
    const grid_hierarchy* grid_;
    orthonormal_basis basis_;
    coarse_pressure_space pressure_;
};

} // namespace msflow
