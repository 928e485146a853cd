#pragma once

// Lowest-order Raviart-Thomas / piecewise-constant mixed discretization of
//   kappa^{-1} v + grad p = 0,  div v = f,  v.n = 0 on the boundary
// on Cartesian blocks of the fine grid.
//
// Velocity coefficients are normal velocities (v.n on the edge, normal fixed
// along +x or +y), so the flux through edge e is coef*|e|.  Every velocity
// vector handed across module boundaries is indexed by global fine edge id
// (boundary entries included, and zero for admissible fields).

#include "msflow/grid.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <memory>
#include <span>

namespace msflow {

enum class resolution : std::uint8_t { fine, multiscale };

struct flow_solution
{
    vector_t velocity; ///< per global fine edge
    vector_t pressure; ///< per fine cell
    resolution tag = resolution::fine;
};

/// Per-fine-cell source density f.
struct source_field
{
    vector_t values;

    double total_integral(const grid_hierarchy& g) const { return values.sum() * g.cell_area(); }
    double abs_integral(const grid_hierarchy& g) const { return values.cwiseAbs().sum() * g.cell_area(); }
    bool compatible(const grid_hierarchy& g) const
    {
        return std::abs(total_integral(g)) <= 1e-12 * (abs_integral(g) + 1.0);
    }
};

enum class source_kind : std::uint8_t { two_point, five_point, custom };

/// Corner cells zeta_1..zeta_4 and the center cell zeta_5.  For even counts
/// the center cell is the one whose lower-left corner is the domain center.
inline std::array<index_t, 5>
source_cells(const grid_hierarchy& g)
{
    const index_t nx = g.nx(), ny = g.ny();
    return {g.cell_id(0, 0), g.cell_id(nx - 1, 0), g.cell_id(0, ny - 1), g.cell_id(nx - 1, ny - 1),
            g.cell_id(nx / 2, ny / 2)};
}

inline source_field
make_source(const grid_hierarchy& g, source_kind kind,
            std::span<const std::pair<index_t, double>> custom = {})
{
    source_field f{vector_t::Zero(g.num_cells())};
    const auto z = source_cells(g);
    switch (kind) {
    case source_kind::two_point:
        f.values[z[0]] += 1.0;
        f.values[z[3]] -= 1.0;
        break;
    case source_kind::five_point:
        for (int k = 0; k < 4; ++k)
            f.values[z[std::size_t(k)]] += 1.0;
        f.values[z[4]] -= 4.0;
        break;
    case source_kind::custom:
        for (const auto& [cell, value] : custom) {
            detail::require(cell >= 0 && cell < g.num_cells(), "source: custom cell out of range");
            f.values[cell] += value;
        }
        break;
    }
    detail::require(f.compatible(g), "source: not compatible with the no-flow boundary (integral != 0)");
    return f;
}

/// Per-cell inverse-permeability weighted RT0 mass and divergence forms of a
/// block, over the block's closure edges in local numbering.
struct block_forms
{
    cell_rect rect;
    std::vector<index_t> edges;  ///< local -> global edge id
    std::vector<index_t> cells;  ///< local -> global cell id
    std::vector<char> boundary;  ///< per local edge: lies on the block boundary
    sparse_t A;                  ///< edges x edges
    sparse_t B;                  ///< cells x edges, B[c,e] = int_c div(psi_e)
};

namespace detail {

// Local edge numbering inside a rectangle, matching grid_hierarchy::edges_in.
struct block_layout
{
    cell_rect r;
    index_t nxe; // number of x-edges in closure
    index_t x_edge(index_t i, index_t j) const { return (j - r.j0) * (r.width() + 1) + (i - r.i0); }
    index_t y_edge(index_t i, index_t j) const { return nxe + (j - r.j0) * r.width() + (i - r.i0); }
    index_t cell(index_t i, index_t j) const { return (j - r.j0) * r.width() + (i - r.i0); }
    explicit block_layout(cell_rect rr) : r(rr), nxe((rr.width() + 1) * rr.height()) {}
};

} // namespace detail

inline block_forms
assemble_block(const grid_hierarchy& g, const cell_rect& r, std::span<const double> coefficient)
{
    detail::require(index_t(coefficient.size()) == g.num_cells(), "assemble: coefficient size mismatch");
    detail::require(r.i0 >= 0 && r.j0 >= 0 && r.i1 <= g.nx() && r.j1 <= g.ny() && r.size() > 0,
                    "assemble: block outside grid");
    const detail::block_layout lay(r);
    block_forms f;
    f.rect = r;
    f.edges = g.edges_in(r);
    f.cells = g.cells_in(r);
    const index_t ne = index_t(f.edges.size()), nc = index_t(f.cells.size());
    f.boundary.assign(std::size_t(ne), 0);
    for (index_t j = r.j0; j < r.j1; ++j) {
        f.boundary[std::size_t(lay.x_edge(r.i0, j))] = 1;
        f.boundary[std::size_t(lay.x_edge(r.i1, j))] = 1;
    }
    for (index_t i = r.i0; i < r.i1; ++i) {
        f.boundary[std::size_t(lay.y_edge(i, r.j0))] = 1;
        f.boundary[std::size_t(lay.y_edge(i, r.j1))] = 1;
    }

    const double hx = g.hx(), hy = g.hy();
    std::vector<triplet_t> ta, tb;
    ta.reserve(std::size_t(nc) * 8);
    tb.reserve(std::size_t(nc) * 4);
    for (index_t j = r.j0; j < r.j1; ++j) {
        for (index_t i = r.i0; i < r.i1; ++i) {
            const double k = coefficient[std::size_t(g.cell_id(i, j))];
            if (!(k > 0.0) || !std::isfinite(k))
                throw config_error("assemble: coefficient must be positive and finite");
            const double m = hx * hy / k;
            const index_t c = lay.cell(i, j);
            const index_t el = lay.x_edge(i, j), er = lay.x_edge(i + 1, j);
            const index_t eb = lay.y_edge(i, j), et = lay.y_edge(i, j + 1);
            for (auto [a, b] : {std::pair{el, er}, std::pair{eb, et}}) {
                ta.emplace_back(a, a, m / 3.0);
                ta.emplace_back(b, b, m / 3.0);
                ta.emplace_back(a, b, m / 6.0);
                ta.emplace_back(b, a, m / 6.0);
            }
            tb.emplace_back(c, el, -hy);
            tb.emplace_back(c, er, hy);
            tb.emplace_back(c, eb, -hx);
            tb.emplace_back(c, et, hx);
        }
    }
    f.A.resize(ne, ne);
    f.A.setFromTriplets(ta.begin(), ta.end());
    f.B.resize(nc, ne);
    f.B.setFromTriplets(tb.begin(), tb.end());
    return f;
}

/// Fine-grid saddle system over all fine edges.  Boundary edges carry no
/// unknowns; A and B keep their columns so any global velocity vector can be
/// contracted directly.
struct saddle_system
{
    sparse_t A;
    sparse_t B;
    vector_t rhs; ///< F[c] = int_c f
    index_t pressure_gauge = 0;
};

inline saddle_system
assemble_saddle(const grid_hierarchy& g, std::span<const double> field_eff, const source_field& f)
{
    detail::require(f.values.size() == g.num_cells(), "assemble: source size mismatch");
    auto forms = assemble_block(g, cell_rect{0, 0, g.nx(), g.ny()}, field_eff);
    return {std::move(forms.A), std::move(forms.B), f.values * g.cell_area(), 0};
}

inline saddle_system
assemble_saddle(const grid_hierarchy& g, const vector_t& field_eff, const source_field& f)
{
    return assemble_saddle(g, std::span<const double>(field_eff.data(), std::size_t(field_eff.size())), f);
}

/// Direct solver for the mixed system on one block with prescribed normal
/// velocities on the block boundary.  The sparsity pattern is analysed once;
/// factorize() can be called again for a new coefficient on the same block.
///
/// The saddle matrix [A -B^T; -B 0] (gauge cell removed) is factored as the
/// quasi-definite matrix [A -B^T; -B -eps*I], which admits an LDL^T
/// factorization in any symmetric ordering, and the exact system is then
/// recovered by iterative refinement.  If refinement stalls, a sparse LU of
/// the exact matrix is used instead.
class block_solver
{
public:
    block_solver(const grid_hierarchy& g, cell_rect r) : grid_(&g), rect_(r) {}

    void factorize(std::span<const double> coefficient)
    {
        forms_ = assemble_block(*grid_, rect_, coefficient);
        const index_t ne = index_t(forms_.edges.size()), nc = index_t(forms_.cells.size());
        unknown_of_.assign(std::size_t(ne), -1);
        n_vel_ = 0;
        for (index_t e = 0; e < ne; ++e)
            if (!forms_.boundary[std::size_t(e)])
                unknown_of_[std::size_t(e)] = n_vel_++;
        // Pressure of local cell 0 is pinned: its row and column are dropped.
        const index_t n = n_vel_ + nc - 1;

        std::vector<triplet_t> t;
        t.reserve(std::size_t(forms_.A.nonZeros() + 2 * forms_.B.nonZeros()));
        for (index_t col = 0; col < ne; ++col) {
            const index_t uc = unknown_of_[std::size_t(col)];
            if (uc < 0)
                continue;
            for (sparse_t::InnerIterator it(forms_.A, col); it; ++it) {
                const index_t ur = unknown_of_[std::size_t(it.row())];
                if (ur >= 0)
                    t.emplace_back(ur, uc, it.value());
            }
            for (sparse_t::InnerIterator it(forms_.B, col); it; ++it) {
                if (it.row() == 0)
                    continue;
                const index_t pr = n_vel_ + it.row() - 1;
                t.emplace_back(pr, uc, -it.value());
                t.emplace_back(uc, pr, -it.value());
            }
        }
        K_.resize(n, n);
        K_.setFromTriplets(t.begin(), t.end());
        K_.makeCompressed();

        double kmin = std::numeric_limits<double>::infinity();
        for (index_t c : forms_.cells)
            kmin = std::min(kmin, coefficient[std::size_t(c)]);
        const double eps = 1e-10 * kmin;
        std::vector<triplet_t> reg;
        reg.reserve(std::size_t(nc));
        for (index_t c = 1; c < nc; ++c)
            reg.emplace_back(n_vel_ + c - 1, n_vel_ + c - 1, -eps);
        sparse_t R(n, n);
        R.setFromTriplets(reg.begin(), reg.end());
        K_reg_ = K_ + R;
        K_reg_.makeCompressed();
        if (!analysed_) {
            ldlt_.analyzePattern(K_reg_);
            analysed_ = true;
        }
        ldlt_.factorize(K_reg_);
        use_lu_ = ldlt_.info() != Eigen::Success;
        if (use_lu_)
            factorize_lu();
    }

    const block_forms& forms() const { return forms_; }
    index_t num_unknowns() const { return n_vel_ + index_t(forms_.cells.size()); }

    /// Solve with boundary normal velocities g_b (local closure numbering,
    /// only boundary entries read) and integrated cell sources F (per local
    /// cell).  Multiple right-hand sides are given as columns.
    /// Returns closure velocities (rows: local edges) and pressures.
    std::pair<matrix_t, matrix_t> solve(const matrix_t& boundary_velocity, const matrix_t& cell_source) const
    {
        const index_t ne = index_t(forms_.edges.size()), nc = index_t(forms_.cells.size());
        const index_t nrhs = boundary_velocity.cols();
        detail::require(boundary_velocity.rows() == ne && cell_source.rows() == nc &&
                            cell_source.cols() == nrhs,
                        "mixed solve: right-hand side shape mismatch");
        matrix_t gb = matrix_t::Zero(ne, nrhs);
        for (index_t e = 0; e < ne; ++e)
            if (forms_.boundary[std::size_t(e)])
                gb.row(e) = boundary_velocity.row(e);

        // Net outflow must balance the sources.
        const matrix_t net = forms_.B * gb;
        for (index_t k = 0; k < nrhs; ++k) {
            const double imbalance = net.col(k).sum() - cell_source.col(k).sum();
            const double scale = cell_source.col(k).cwiseAbs().sum() + net.col(k).cwiseAbs().sum() + 1e-300;
            if (std::abs(imbalance) > 1e-10 * scale)
                throw numerical_error("mixed solve: incompatible boundary flux and source");
        }

        const matrix_t Ag = forms_.A * gb;
        matrix_t rhs = matrix_t::Zero(n_vel_ + nc - 1, nrhs);
        for (index_t e = 0; e < ne; ++e) {
            const index_t u = unknown_of_[std::size_t(e)];
            if (u >= 0)
                rhs.row(u) = -Ag.row(e);
        }
        for (index_t c = 1; c < nc; ++c)
            rhs.row(n_vel_ + c - 1) = -(cell_source.row(c) - net.row(c));

        const matrix_t x = solve_system(rhs);

        matrix_t vel = gb;
        for (index_t e = 0; e < ne; ++e) {
            const index_t u = unknown_of_[std::size_t(e)];
            if (u >= 0)
                vel.row(e) = x.row(u);
        }
        matrix_t p = matrix_t::Zero(nc, nrhs);
        for (index_t c = 1; c < nc; ++c)
            p.row(c) = x.row(n_vel_ + c - 1);
        return {std::move(vel), std::move(p)};
    }

private:
    static constexpr double refine_tol = 1e-13;
    static constexpr int max_refine = 30;

    void factorize_lu() const
    {
        lu_ = std::make_unique<Eigen::SparseLU<sparse_t, Eigen::COLAMDOrdering<int>>>();
        lu_->compute(K_);
        if (lu_->info() != Eigen::Success)
            throw numerical_error("mixed solve: factorization failed (singular system)");
    }

    matrix_t solve_system(const matrix_t& rhs) const
    {
        if (!use_lu_) {
            matrix_t x = ldlt_.solve(rhs);
            const double bnorm = rhs.norm();
            double last = std::numeric_limits<double>::infinity();
            for (int it = 0; it < max_refine; ++it) {
                const matrix_t r = rhs - K_ * x;
                const double rn = r.norm();
                if (rn <= refine_tol * bnorm || rn == 0.0)
                    return x;
                if (rn > 0.5 * last)
                    break;
                last = rn;
                x += ldlt_.solve(r);
            }
            if ((rhs - K_ * x).norm() <= 1e-10 * bnorm)
                return x;
            use_lu_ = true;
            factorize_lu();
        }
        matrix_t x = lu_->solve(rhs);
        if (lu_->info() != Eigen::Success)
            throw numerical_error("mixed solve: back substitution failed");
        return x;
    }

    const grid_hierarchy* grid_;
    cell_rect rect_;
    block_forms forms_;
    std::vector<index_t> unknown_of_;
    index_t n_vel_ = 0;
    sparse_t K_, K_reg_;
    Eigen::SimplicialLDLT<sparse_t, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    mutable std::unique_ptr<Eigen::SparseLU<sparse_t, Eigen::COLAMDOrdering<int>>> lu_;
    mutable bool use_lu_ = false;
    bool analysed_ = false;
};

inline void
shift_to_zero_mean(vector_t& p)
{
    if (p.size() > 0)
        p.array() -= p.mean();
}

/// Whole-domain solver with pattern reuse across coefficients, as used for
/// Monte-Carlo samples and IMPES steps.
class fine_solver
{
public:
    explicit fine_solver(const grid_hierarchy& g) : grid_(&g), block_(g, cell_rect{0, 0, g.nx(), g.ny()}) {}

    void update(std::span<const double> field_eff) { block_.factorize(field_eff); }
    void update(const vector_t& field_eff)
    {
        update(std::span<const double>(field_eff.data(), std::size_t(field_eff.size())));
    }

    const sparse_t& A() const { return block_.forms().A; }
    const sparse_t& B() const { return block_.forms().B; }

    flow_solution solve(const source_field& f) const
    {
        detail::require(f.values.size() == grid_->num_cells(), "solve: source size mismatch");
        if (!f.compatible(*grid_))
            throw numerical_error("solve: source is not compatible with the no-flow boundary");
        const index_t ne = grid_->num_edges();
        auto [v, p] = block_.solve(matrix_t::Zero(ne, 1), matrix_t(f.values * grid_->cell_area()));
        flow_solution s{v.col(0), p.col(0), resolution::fine};
        shift_to_zero_mean(s.pressure);
        return s;
    }

private:
    const grid_hierarchy* grid_;
    block_solver block_;
};

inline flow_solution
solve_fine(const grid_hierarchy& g, const vector_t& field_eff, const source_field& f)
{
    fine_solver s(g);
    s.update(field_eff);
    return s.solve(f);
}

/// (sum of outward fluxes) / |cell| for every fine cell.
inline vector_t
cell_divergence(const grid_hierarchy& g, const vector_t& velocity)
{
    detail::require(velocity.size() == g.num_edges(), "divergence: velocity size mismatch");
    vector_t d(g.num_cells());
    for (index_t c = 0; c < g.num_cells(); ++c) {
        const auto e = g.cell_edges(c);
        d[c] = ((velocity[e[1]] - velocity[e[0]]) * g.hy() + (velocity[e[3]] - velocity[e[2]]) * g.hx()) /
               g.cell_area();
    }
    return d;
}

/// int_K div(v) for every coarse cell K.
inline vector_t
coarse_divergence_integral(const grid_hierarchy& g, const vector_t& velocity)
{
    const vector_t d = cell_divergence(g, velocity) * g.cell_area();
    vector_t out = vector_t::Zero(g.num_coarse_cells());
    for (index_t c = 0; c < g.num_cells(); ++c)
        out[g.coarse_cell_of(c)] += d[c];
    return out;
}

/// int kappa^{-1} |v|^2 via the assembled mass form.
inline double
weighted_energy(const sparse_t& A, const vector_t& v)
{
    return v.dot(A * v);
}

} // namespace msflow
