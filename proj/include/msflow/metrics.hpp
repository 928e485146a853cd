#pragma once

// Error measures, Monte-Carlo sweeps and empirical checks of the a-priori
// analysis (stability constant, bound terms, rank correlation).

#include "msflow/mssolver.hpp"
#include "msflow/randfield.hpp"

#include <chrono>
#include <mutex>
#include <optional>

namespace msflow {

/// int kappa^{-1} |v_f - v_ms|^2 / int kappa^{-1} |v_f|^2, unrooted.
inline double
velocity_error(const sparse_t& A, const vector_t& fine, const vector_t& ms)
{
    const double den = weighted_energy(A, fine);
    if (!(den > 0))
        throw numerical_error("velocity error: reference solution has zero energy");
    return weighted_energy(A, fine - ms) / den;
}

inline double
velocity_error(const grid_hierarchy& g, std::span<const double> field, const vector_t& fine, const vector_t& ms)
{
    return velocity_error(assemble_block(g, cell_rect{0, 0, g.nx(), g.ny()}, field).A, fine, ms);
}

/// Plain L2 norm of cellwise-constant data.
inline double
l2_norm(const grid_hierarchy& g, const vector_t& cell_values)
{
    return std::sqrt(cell_values.squaredNorm() * g.cell_area());
}

/// Unweighted L2 norm of an RT0 velocity (exact for the lowest-order fields).
inline double
velocity_l2_norm(const grid_hierarchy& g, const vector_t& v)
{
    double s = 0;
    for (index_t c = 0; c < g.num_cells(); ++c) {
        const auto e = g.cell_edges(c);
        const double l = v[e[0]], r = v[e[1]], b = v[e[2]], t = v[e[3]];
        s += (l * l + l * r + r * r + b * b + b * t + t * t) / 3.0;
    }
    return std::sqrt(s * g.cell_area());
}

inline double
saturation_error(const grid_hierarchy& g, const vector_t& fine, const vector_t& ms)
{
    const double den = fine.squaredNorm();
    if (!(den > 0))
        throw numerical_error("saturation error: reference saturation is zero");
    (void)g; // uniform cells: the area cancels
    return (fine - ms).squaredNorm() / den;
}

/// Error between sample-averaged saturations.
inline double
stochastic_saturation_error(const grid_hierarchy& g, const std::vector<vector_t>& fine,
                            const std::vector<vector_t>& ms)
{
    detail::require(!fine.empty() && fine.size() == ms.size(), "saturation error: sample lists differ in size");
    vector_t mf = vector_t::Zero(fine[0].size()), mm = mf;
    for (std::size_t s = 0; s < fine.size(); ++s) {
        mf += fine[s];
        mm += ms[s];
    }
    mf /= double(fine.size());
    mm /= double(ms.size());
    return saturation_error(g, mf, mm);
}

struct sample_row
{
    std::uint64_t seed = 0;
    double e_v = 0;
    double e_v_rooted = 0;
    double t_test = 0; ///< seconds, reduced assembly + solve + prolongation
    double t_fine = 0; ///< seconds, fine reference
    double field_bound = 0; ///< ||kappa_s^{-1/2} - kappa_train^{-1/2}||_inf
    bool ok = true;
    std::string failure;
};

struct sweep_report
{
    std::string descriptor;
    std::optional<double> t_train;
    std::vector<sample_row> samples;

    index_t failed() const
    {
        return index_t(std::count_if(samples.begin(), samples.end(), [](const sample_row& r) { return !r.ok; }));
    }

    std::vector<double> errors(bool rooted = false) const
    {
        std::vector<double> e;
        for (const auto& r : samples)
            if (r.ok)
                e.push_back(rooted ? r.e_v_rooted : r.e_v);
        return e;
    }

    double mean(bool rooted = false) const
    {
        const auto e = errors(rooted);
        detail::require<numerical_error>(!e.empty(), "sweep: no successful samples");
        return std::accumulate(e.begin(), e.end(), 0.0) / double(e.size());
    }

    /// Unbiased sample variance (0 for one sample).
    double variance(bool rooted = false) const
    {
        const auto e = errors(rooted);
        if (e.size() < 2)
            return 0.0;
        const double m = mean(rooted);
        double s = 0;
        for (double x : e)
            s += (x - m) * (x - m);
        return s / double(e.size() - 1);
    }
};

struct sweep_options
{
    index_t n_samples = 1;
    std::uint64_t seed0 = 0;
    unsigned jobs = 1;
    const vector_t* reference_field = nullptr; ///< for the field_bound column
};

/// For each seed0+s: draw a field, solve fine and multiscale, record e_v.
/// Failing samples are kept in the report with ok = false.
inline sweep_report
monte_carlo_sweep(const grid_hierarchy& g, const kl_basis& kl, const vector_t& mean_log, const ms_solver& solver,
                  const source_field& f, const sweep_options& opt)
{
    if (opt.n_samples < 1)
        throw config_error("empty sweep");
    sweep_report rep;
    rep.samples.resize(std::size_t(opt.n_samples));
    using clock = std::chrono::steady_clock;
    parallel_for(rep.samples.size(), opt.jobs, [&](std::size_t s) {
        sample_row& row = rep.samples[s];
        row.seed = opt.seed0 + s;
        try {
            const permeability_field k = sample_field(kl, mean_log, row.seed);
            auto t0 = clock::now();
            fine_solver fs(g);
            fs.update(k.values);
            const flow_solution vf = fs.solve(f);
            auto t1 = clock::now();
            const flow_solution vm = solver.solve(k.values, f);
            auto t2 = clock::now();
            row.t_fine = std::chrono::duration<double>(t1 - t0).count();
            row.t_test = std::chrono::duration<double>(t2 - t1).count();
            row.e_v = velocity_error(fs.A(), vf.velocity, vm.velocity);
            row.e_v_rooted = std::sqrt(row.e_v);
            if (opt.reference_field)
                row.field_bound = (k.values.array().rsqrt() - opt.reference_field->array().rsqrt()).abs().maxCoeff();
        } catch (const std::exception& e) {
            row.ok = false;
            row.failure = e.what();
        }
    });
    return rep;
}

/// Two sweeps over the same seeds, differing only in the test source.
inline std::pair<sweep_report, sweep_report>
generalization_study(const grid_hierarchy& g, const kl_basis& kl, const vector_t& mean_log, const ms_solver& solver,
                     const source_field& f_train, const source_field& f_test, const sweep_options& opt)
{
    return {monte_carlo_sweep(g, kl, mean_log, solver, f_train, opt),
            monte_carlo_sweep(g, kl, mean_log, solver, f_test, opt)};
}

struct bound_terms_result
{
    double t1 = 0; ///< ||k2^{-1/2} - k1^{-1/2}||_inf ||f2||
    double t2 = 0; ///< k1_min^{-1/2} ||f1 - f2||
};

inline bound_terms_result
bound_terms(const grid_hierarchy& g, const vector_t& kappa1, const vector_t& kappa2, const source_field& f1,
            const source_field& f2)
{
    detail::require(kappa1.size() == g.num_cells() && kappa2.size() == g.num_cells(),
                    "bound terms: field size mismatch");
    detail::require(kappa1.minCoeff() > 0 && kappa2.minCoeff() > 0, "bound terms: fields must be positive");
    bound_terms_result r;
    r.t1 = (kappa2.array().rsqrt() - kappa1.array().rsqrt()).abs().maxCoeff() * l2_norm(g, f2.values);
    r.t2 = l2_norm(g, f1.values - f2.values) / std::sqrt(kappa1.minCoeff());
    return r;
}

/// Ranks with ties averaged, 1-based.
inline std::vector<double>
average_ranks(const std::vector<double>& x)
{
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]])
            ++j;
        const double avg = 0.5 * double(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double
spearman(const std::vector<double>& x, const std::vector<double>& y)
{
    detail::require(x.size() == y.size() && x.size() >= 2, "spearman: need two equal-length samples");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const Eigen::Map<const vector_t> a(rx.data(), index_t(rx.size())), b(ry.data(), index_t(ry.size()));
    const vector_t da = a.array() - a.mean(), db = b.array() - b.mean();
    const double den = da.norm() * db.norm();
    return den > 0 ? da.dot(db) / den : 0.0;
}

/// Smallest C with ||v_s|| <= C ||f_s|| over the given samples.
inline double
fit_stability_constant(const std::vector<double>& velocity_norms, const std::vector<double>& source_norms)
{
    detail::require(!velocity_norms.empty() && velocity_norms.size() == source_norms.size(),
                    "stability: sample lists differ in size");
    double c = 0;
    for (std::size_t s = 0; s < velocity_norms.size(); ++s) {
        detail::require<numerical_error>(source_norms[s] > 0, "stability: zero source norm");
        c = std::max(c, velocity_norms[s] / source_norms[s]);
    }
    return c;
}

} // namespace msflow
