#pragma once

// Offline stage II: residual-driven enrichment of a stage-I space.
//
// Each iteration solves the coarse problem, measures the Galerkin residual
// on divergence-free snapshot test functions, and for every region of the
// current partition adds one local basis whose trace on E_i follows the
// residual representer computed on the oversampled region D_i^+.

#include "msflow/metrics.hpp"

#include <atomic>

#include <limits>
#include <optional>

namespace msflow {

enum class partition_strategy : std::uint8_t { alternating, all_edges };

struct enrichment_config
{
    double tau = 1e-3;      ///< relative: stop when ||R_Omega|| <= tau * ||v_ms||_a
    index_t max_iters = 4;
    index_t layers = 1;
    partition_strategy strategy = partition_strategy::alternating;
    unsigned jobs = 1;

    void validate() const
    {
        detail::require(tau > 0, "enrichment: tau must be positive");
        detail::require(max_iters >= 0, "enrichment: max_iters must be >= 0");
        detail::require(layers >= 0, "enrichment: layers must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// partitions

/// Disjoint neighborhood tilings.  Vertical tilings pair coarse columns
/// (0,1),(2,3),... or (1,2),(3,4),...; horizontal ones pair rows likewise.
/// Order: V0, H0, V1, H1, empty tilings skipped.  Together the tilings touch
/// every interior coarse edge exactly once.
inline std::vector<std::vector<index_t>>
alternating_tilings(const grid_hierarchy& g)
{
    std::vector<std::vector<index_t>> out;
    for (index_t offset : {0, 1})
        for (axis a : {axis::x, axis::y}) {
            std::vector<index_t> t;
            if (a == axis::x) {
                for (index_t cj = 0; cj < g.coarse_ny(); ++cj)
                    for (index_t ci = offset; ci + 1 < g.coarse_nx(); ci += 2)
                        t.push_back(g.coarse_x_edge(ci, cj));
            } else {
                for (index_t cj = offset; cj + 1 < g.coarse_ny(); cj += 2)
                    for (index_t ci = 0; ci < g.coarse_nx(); ++ci)
                        t.push_back(g.coarse_y_edge(ci, cj));
            }
            if (!t.empty())
                out.push_back(std::move(t));
        }
    return out;
}

inline std::vector<index_t>
partition_for_iteration(const grid_hierarchy& g, partition_strategy s, index_t k)
{
    if (s == partition_strategy::all_edges) {
        std::vector<index_t> all(std::size_t(g.num_coarse_edges()));
        std::iota(all.begin(), all.end(), index_t(0));
        return all;
    }
    const auto t = alternating_tilings(g);
    if (t.empty())
        return {};
    return t[std::size_t(k) % t.size()];
}

/// Iterations needed so that every interior edge receives `per_edge`
/// residual bases.
inline index_t
iterations_for(const grid_hierarchy& g, partition_strategy s, index_t per_edge)
{
    if (s == partition_strategy::all_edges)
        return per_edge;
    return per_edge * index_t(alternating_tilings(g).size());
}

/// True when the neighborhoods of `edges` are pairwise disjoint and cover
/// the domain.
inline bool
is_tiling(const grid_hierarchy& g, const std::vector<index_t>& edges)
{
    std::vector<int> hits(std::size_t(g.num_coarse_cells()), 0);
    for (index_t e : edges)
        for (index_t k : g.coarse_edge(e).cells)
            ++hits[std::size_t(k)];
    return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

// ---------------------------------------------------------------------------
// residual on oversampled regions

/// Oversampled snapshots of one edge with their divergence-free subspace
/// and the region mass form.
struct oversampled_region
{
    snapshot_space snapshots;
    matrix_t free_basis; ///< closure edges x d, divergence-free snapshot combinations
    sparse_t A;          ///< closure mass form on D_i^+
};

inline oversampled_region
make_oversampled_region(const grid_hierarchy& g, std::span<const double> field, index_t edge, index_t layers)
{
    oversampled_region r;
    r.snapshots = build_oversampled_snapshots(g, field, edge, layers);
    r.free_basis = r.snapshots.functions.values * divergence_free_subspace(r.snapshots);
    r.A = assemble_block(g, r.snapshots.functions.region, field).A;
    return r;
}

/// Oversampled regions kept across enrichment calls.  An entry is rebuilt
/// when the coefficient on its region changed by more than `rel_tol`.
class region_cache
{
public:
    explicit region_cache(double rel_tol = 1e-6) : tol_(rel_tol) {}

    /// Safe to call concurrently for distinct edges.
    const oversampled_region& get(const grid_hierarchy& g, std::span<const double> field, index_t edge,
                                  index_t layers)
    {
        entry& en = slot(g, edge);
        if (en.region && en.layers == layers && same_coefficient(en, field))
            return *en.region;
        en.region = make_oversampled_region(g, field, edge, layers);
        en.layers = layers;
        const auto cells = g.cells_in(en.region->snapshots.functions.region);
        en.coef.resize(index_t(cells.size()));
        for (std::size_t i = 0; i < cells.size(); ++i)
            en.coef[index_t(i)] = field[std::size_t(cells[i])];
        en.cells = cells;
        ++builds_;
        return *en.region;
    }

    /// Make room for every coarse edge; call before concurrent get().
    void reserve(const grid_hierarchy& g) { entries_.resize(std::size_t(g.num_coarse_edges())); }
    std::size_t builds() const { return builds_; }

private:
    struct entry
    {
        std::optional<oversampled_region> region;
        index_t layers = 0;
        std::vector<index_t> cells;
        vector_t coef;
    };

    entry& slot(const grid_hierarchy& g, index_t edge)
    {
        detail::require(entries_.size() == std::size_t(g.num_coarse_edges()), "region cache: grid mismatch");
        return entries_[std::size_t(edge)];
    }

    bool same_coefficient(const entry& en, std::span<const double> field) const
    {
        for (std::size_t i = 0; i < en.cells.size(); ++i) {
            const double a = en.coef[index_t(i)], b = field[std::size_t(en.cells[i])];
            if (std::abs(a - b) > tol_ * std::abs(a))
                return false;
        }
        return true;
    }

    double tol_;
    std::vector<entry> entries_;
    std::atomic<std::size_t> builds_{0};
};

struct riesz_result
{
    vector_t representer; ///< over the region closure edges
    double norm = 0;
};

/// Representer of u -> int kappa^{-1} v_ms . u on the divergence-free
/// oversampled snapshots.
inline riesz_result
residual_riesz(const oversampled_region& region, const vector_t& v_ms)
{
    riesz_result out;
    const auto& W = region.free_basis;
    out.representer = vector_t::Zero(W.rows());
    if (W.cols() == 0)
        return out;
    const vector_t local = region.snapshots.functions.gather(v_ms);
    const matrix_t AW = region.A * W;
    const matrix_t G = W.transpose() * AW;
    const vector_t r = AW.transpose() * local;
    Eigen::LDLT<matrix_t> ldlt(G);
    if (ldlt.info() != Eigen::Success)
        throw numerical_error("residual: Gram matrix of oversampled snapshots is singular on edge " +
                              std::to_string(region.snapshots.edge_id));
    const vector_t c = ldlt.solve(r);
    out.representer = W * c;
    out.norm = std::sqrt(std::max(0.0, c.dot(r)));
    return out;
}

/// Local basis on D_i with the normalized representer trace on E_i.
/// Returns nothing when the trace vanishes.
inline std::optional<local_functions>
residual_driven_basis(const grid_hierarchy& g, std::span<const double> field, const oversampled_region& region,
                      const vector_t& representer)
{
    const auto& core = region.snapshots.edge_fine_edges;
    const cell_rect& R = region.snapshots.functions.region;
    matrix_t z(index_t(core.size()), 1);
    double nz = 0;
    for (std::size_t e = 0; e < core.size(); ++e) {
        z(index_t(e), 0) = representer[detail::closure_index(R, g.edge(core[e]))];
        nz += z(index_t(e), 0) * z(index_t(e), 0) * g.edge_length(core[e]);
    }
    const double scale = representer.cwiseAbs().maxCoeff();
    if (!(nz > 0) || std::sqrt(nz) <= 1e-12 * scale * std::sqrt(g.coarse_edge_length(region.snapshots.edge_id)))
        return std::nullopt;
    z /= std::sqrt(nz);
    const auto n = make_neighborhood(g, region.snapshots.edge_id);
    return glued_local_solve(g, field, n.halves, n.edge_fine_edges, z).first;
}

// ---------------------------------------------------------------------------
// global indicator

/// ||R_Omega|| as the dual norm over the divergence-free subspace of the
/// full standard snapshot space, in the kappa^{-1} inner product.
class residual_estimator
{
public:
    residual_estimator(const grid_hierarchy& g, std::span<const double> field, const offline_stage& stage)
    {
        std::vector<triplet_t> t;
        index_t col = 0;
        for (const auto& s : stage.snapshots) {
            const auto& fn = s.functions;
            for (index_t k = 0; k < fn.size(); ++k, ++col)
                for (std::size_t e = 0; e < fn.edges.size(); ++e)
                    if (fn.values(index_t(e), k) != 0.0)
                        t.emplace_back(fn.edges[e], col, fn.values(index_t(e), k));
        }
        V_.resize(g.num_edges(), col);
        V_.setFromTriplets(t.begin(), t.end());

        const auto forms = assemble_block(g, cell_rect{0, 0, g.nx(), g.ny()}, field);
        A_ = forms.A;
        const sparse_t McB = make_pressure_space(g).Mc.transpose() * forms.B;
        const matrix_t D = matrix_t(sparse_t(McB * V_));

        Eigen::ColPivHouseholderQR<matrix_t> qr(D.transpose());
        qr.setThreshold(1e-10);
        const index_t rank = qr.rank();
        const matrix_t Q = qr.householderQ();
        N_ = Q.rightCols(col - rank);
        AV_ = A_ * V_;
        const matrix_t VtAV = matrix_t(sparse_t(V_.transpose() * AV_));
        const matrix_t G = N_.transpose() * VtAV * N_;
        gram_.compute(G);
        if (gram_.info() != Eigen::Success)
            throw numerical_error("residual: divergence-free snapshot Gram matrix is singular");
    }

    double norm(const vector_t& v_ms) const
    {
        const vector_t r = N_.transpose() * (AV_.transpose() * v_ms);
        return std::sqrt(std::max(0.0, r.dot(gram_.solve(r))));
    }

    index_t dimension() const { return N_.cols(); }
    const sparse_t& A() const { return A_; }

private:
    sparse_t V_, A_, AV_;
    matrix_t N_;
    Eigen::LDLT<matrix_t> gram_;
};

// ---------------------------------------------------------------------------
// enrichment loop

struct residual_report
{
    index_t iteration = 0;
    double global_norm = 0;   ///< ||R_Omega||
    double relative_norm = 0; ///< ||R_Omega|| / ||v_ms||_a
    double regional_rss = 0;  ///< root-sum-square of the regional norms
    std::vector<std::pair<index_t, double>> regional; ///< (edge, ||R_{D_i^+}||) over the partition
    bool overlapping = false; ///< partition regions overlap (all_edges)
    double training_error = 0; ///< e_v of the training problem
    index_t basis_size = 0;
    index_t added = 0;

    double min_regional() const
    {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& r : regional)
            m = std::min(m, r.second);
        return regional.empty() ? 0.0 : m;
    }
    double max_regional() const
    {
        double m = 0;
        for (const auto& r : regional)
            m = std::max(m, r.second);
        return m;
    }
};

struct enrichment_result
{
    multiscale_space space;
    std::vector<residual_report> reports;
    std::vector<index_t> skipped_edges; ///< zero representer trace
};

/// Fewest stage-II bases owned by any interior edge.
inline index_t
min_residual_per_edge(const grid_hierarchy& g, const multiscale_space& s)
{
    std::vector<index_t> c(std::size_t(g.num_coarse_edges()), 0);
    for (index_t k = 0; k < s.size(); ++k)
        if (s.stage[std::size_t(k)] == basis_stage::residual)
            ++c[std::size_t(s.owner[std::size_t(k)])];
    return c.empty() ? 0 : *std::min_element(c.begin(), c.end());
}

inline enrichment_result
enrich(const grid_hierarchy& g, std::span<const double> field, const source_field& f,
       const multiscale_space& stage1, const enrichment_config& cfg, const residual_estimator& estimator,
       const vector_t* lifting = nullptr, region_cache* cache = nullptr)
{
    cfg.validate();
    detail::require(stage1.size() > 0, "enrichment: stage-I space is empty");
    const vector_t kappa = Eigen::Map<const vector_t>(field.data(), index_t(field.size()));
    fine_solver fs(g);
    fs.update(field);
    const vector_t v_f = fs.solve(f).velocity;

    enrichment_result out;
    out.space = stage1;
    region_cache local_cache;
    region_cache& regions = cache ? *cache : local_cache;
    regions.reserve(g);

    for (index_t k = 0;; ++k) {
        const ms_solver ms(g, out.space);
        const vector_t v_ms = lifting ? ms.solve(kappa, f, *lifting).velocity : ms.solve(kappa, f).velocity;
        residual_report rep;
        rep.iteration = k;
        rep.basis_size = out.space.size();
        rep.global_norm = estimator.norm(v_ms);
        const double energy = std::sqrt(weighted_energy(fs.A(), v_ms));
        rep.relative_norm = energy > 0 ? rep.global_norm / energy : rep.global_norm;
        rep.training_error = velocity_error(fs.A(), v_f, v_ms);
        rep.overlapping = cfg.strategy == partition_strategy::all_edges;

        const bool stop = rep.relative_norm <= cfg.tau || k >= cfg.max_iters;
        const auto part = partition_for_iteration(g, cfg.strategy, k);
        if (!stop) {
            std::vector<riesz_result> riesz(part.size());
            std::vector<std::optional<local_functions>> phi(part.size());
            parallel_for(part.size(), cfg.jobs, [&](std::size_t i) {
                const auto& reg = regions.get(g, field, part[i], cfg.layers);
                riesz[i] = residual_riesz(reg, v_ms);
                if (riesz[i].norm > 0)
                    phi[i] = residual_driven_basis(g, field, reg, riesz[i].representer);
            });
            double rss = 0;
            for (std::size_t i = 0; i < part.size(); ++i) {
                rep.regional.emplace_back(part[i], riesz[i].norm);
                rss += riesz[i].norm * riesz[i].norm;
                if (phi[i]) {
                    out.space.append(phi[i]->to_sparse(g), part[i], basis_stage::residual);
                    ++rep.added;
                } else {
                    out.skipped_edges.push_back(part[i]);
                }
            }
            rep.regional_rss = std::sqrt(rss);
        }
        out.reports.push_back(std::move(rep));
        if (stop)
            break;
    }
    out.space.stage_counts = {stage1.stage_counts[0], min_residual_per_edge(g, out.space)};
    return out;
}

inline enrichment_result
enrich(const grid_hierarchy& g, std::span<const double> field, const source_field& f,
       const multiscale_space& stage1, const enrichment_config& cfg, const offline_stage& stage,
       const vector_t* lifting = nullptr, region_cache* cache = nullptr)
{
    return enrich(g, field, f, stage1, cfg, residual_estimator(g, field, stage), lifting, cache);
}

} // namespace msflow
