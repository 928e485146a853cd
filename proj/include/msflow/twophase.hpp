#pragma once

// IMPES waterflood: pressure from the fine or frozen multiscale mixed solver
// with kappa_eff = lambda(S) kappa, explicit upwind transport on fine cells.
//
// Wells are the cells where the velocity has nonzero divergence: water
// enters at saturation 1 where div v > 0 and leaves at F(S) where div v < 0.
// A multiscale velocity only resolves f up to coarse-cell means, so the
// multiscale pressure solve is lifted by the local source correction of
// each coarse cell where f varies; its fine divergence then equals f.

#include "msflow/enrichment.hpp"

#include <cmath>
#include <memory>

namespace msflow {

enum class pressure_solver : std::uint8_t { fine, multiscale };

struct twophase_config
{
    double mu_w = 1.0;
    double mu_o = 5.0;
    double t_end = 0.0;
    double dt = 0.0;          ///< 0 selects cfl_target * CFL limit at every pressure solve
    double cfl_target = 0.9;
    pressure_solver solver = pressure_solver::fine;
    std::vector<double> re_enrich_times;
    index_t pressure_every = 1;   ///< transport steps per pressure solve
    index_t record_every = 0;     ///< saturation snapshot period in steps (0: none)
    std::vector<double> snapshot_times;

    void validate() const
    {
        detail::require(mu_w > 0 && mu_o > 0, "twophase: viscosities must be positive");
        detail::require(t_end >= 0, "twophase: t_end must be >= 0");
        detail::require(dt >= 0, "twophase: dt must be >= 0 (0 = auto)");
        detail::require(cfl_target > 0 && cfl_target <= 1, "twophase: cfl_target must be in (0,1]");
        detail::require(pressure_every >= 1, "twophase: pressure_every must be >= 1");
        detail::require(record_every >= 0, "twophase: record_every must be >= 0");
    }
};

struct mobility_values
{
    double total;      ///< lambda(S)
    double fractional; ///< F(S)
};

inline mobility_values
mobility(double S, const twophase_config& c)
{
    const double w = S * S / c.mu_w;
    const double o = (1.0 - S) * (1.0 - S) / c.mu_o;
    return {w + o, w / (w + o)};
}

inline double
fractional_flow(double S, const twophase_config& c)
{
    return mobility(S, c).fractional;
}

/// max F'(S) on [0,1]: coarse scan, then golden-section refinement.
inline double
max_fractional_slope(const twophase_config& c)
{
    const double a = 1.0 / c.mu_w, b = 1.0 / c.mu_o;
    auto slope = [&](double S) {
        const double w = a * S * S, o = b * (1 - S) * (1 - S);
        return (2 * a * S * o + 2 * b * (1 - S) * w) / ((w + o) * (w + o));
    };
    int best = 0;
    for (int k = 1; k <= 200; ++k)
        if (slope(k / 200.0) > slope(best / 200.0))
            best = k;
    double lo = std::max(0.0, (best - 1) / 200.0), hi = std::min(1.0, (best + 1) / 200.0);
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 60; ++it) {
        const double m1 = hi - r * (hi - lo), m2 = lo + r * (hi - lo);
        (slope(m1) < slope(m2) ? lo : hi) = slope(m1) < slope(m2) ? m1 : m2;
    }
    return std::max(slope(0.5 * (lo + hi)), slope(best / 200.0));
}

/// Time step cfl_target |cell| / (F'_max Q), Q the total injection rate.  A
/// cell cannot pass more than Q in a flow without circulation, so this dt
/// stays admissible as the mobility changes.
inline double
safe_time_step(const grid_hierarchy& g, const source_field& f, const twophase_config& c)
{
    const double q = f.values.cwiseMax(0.0).sum() * g.cell_area();
    detail::require(q > 0, "twophase: source has no injector");
    return c.cfl_target * g.cell_area() / (max_fractional_slope(c) * q);
}

/// Net outflow per cell, sum of (v.n)|e| over the cell boundary.
inline vector_t
cell_net_outflow(const grid_hierarchy& g, const vector_t& velocity)
{
    return cell_divergence(g, velocity) * g.cell_area();
}

/// Sum over coarse cells K where f is not constant of the local mixed
/// solution on K with zero boundary flux and source f - mean_K(f).  It leaves
/// every coarse-edge flux at zero and carries the sub-coarse part of f.
inline vector_t
source_correction(const grid_hierarchy& g, std::span<const double> field_eff, const source_field& f)
{
    vector_t w = vector_t::Zero(g.num_edges());
    for (index_t k = 0; k < g.num_coarse_cells(); ++k) {
        const cell_rect r = g.coarse_cell_rect(k);
        const auto cells = g.cells_in(r);
        vector_t fk(index_t(cells.size()));
        for (std::size_t i = 0; i < cells.size(); ++i)
            fk[index_t(i)] = f.values[cells[i]];
        const double mean = fk.mean();
        if ((fk.array() - mean).abs().maxCoeff() <= 1e-14 * (std::abs(mean) + fk.cwiseAbs().maxCoeff()))
            continue;
        block_solver bs(g, r);
        bs.factorize(field_eff);
        const auto& forms = bs.forms();
        // local cell order of the block forms
        matrix_t src(index_t(forms.cells.size()), 1);
        for (std::size_t i = 0; i < forms.cells.size(); ++i)
            src(index_t(i), 0) = (f.values[forms.cells[i]] - mean) * g.cell_area();
        const auto vel = bs.solve(matrix_t::Zero(index_t(forms.edges.size()), 1), src).first;
        for (std::size_t e = 0; e < forms.edges.size(); ++e)
            w[forms.edges[e]] += vel(index_t(e), 0);
    }
    return w;
}

struct saturation_field
{
    vector_t values;
    double time = 0;
};

/// Largest dt satisfying dt * F'_max * (outflux + production) / |cell| <= 1.
inline double
cfl_limit(const grid_hierarchy& g, const vector_t& velocity, const twophase_config& c, index_t* worst = nullptr,
          double slope = 0)
{
    const vector_t q = cell_net_outflow(g, velocity);
    vector_t out = vector_t::Zero(g.num_cells());
    for (index_t e : g.interior_edges()) {
        const auto info = g.edge(e);
        const double flux = velocity[e] * g.edge_length(e);
        out[flux > 0 ? info.minus_cell : info.plus_cell] += std::abs(flux);
    }
    for (index_t k = 0; k < g.num_cells(); ++k)
        out[k] += std::max(0.0, -q[k]);
    index_t at = 0;
    const double omax = out.maxCoeff(&at);
    if (worst)
        *worst = at;
    if (!(omax > 0))
        return std::numeric_limits<double>::infinity();
    return g.cell_area() / ((slope > 0 ? slope : max_fractional_slope(c)) * omax);
}

struct transport_balance
{
    double water_in = 0;  ///< volume of water injected in the step
    double water_out = 0; ///< volume of water produced in the step
};

/// One explicit upwind step.  Throws when dt breaks the CFL bound.
inline vector_t
transport_step(const grid_hierarchy& g, const vector_t& S, const vector_t& velocity, double dt,
               const twophase_config& c, transport_balance* balance = nullptr, double slope = 0)
{
    detail::require(S.size() == g.num_cells() && velocity.size() == g.num_edges(), "transport: size mismatch");
    detail::require(dt >= 0, "transport: dt must be >= 0");
    index_t worst = 0;
    const double limit = cfl_limit(g, velocity, c, &worst, slope);
    if (dt > limit * (1.0 + 1e-12)) {
        const auto [i, j] = g.cell_ij(worst);
        throw numerical_error("transport: CFL violated at cell (" + std::to_string(i) + "," + std::to_string(j) +
                              "): dt = " + std::to_string(dt) + " exceeds limit " + std::to_string(limit));
    }
    const double r = dt / g.cell_area();
    vector_t F(S.size());
    for (index_t k = 0; k < S.size(); ++k)
        F[k] = fractional_flow(S[k], c);

    vector_t next = S;
    for (index_t e : g.interior_edges()) {
        const auto info = g.edge(e);
        const double flux = velocity[e] * g.edge_length(e);
        const double w = (flux > 0 ? F[info.minus_cell] : F[info.plus_cell]) * flux;
        next[info.minus_cell] -= r * w;
        next[info.plus_cell] += r * w;
    }
    const vector_t q = cell_net_outflow(g, velocity);
    transport_balance b;
    for (index_t k = 0; k < S.size(); ++k) {
        if (q[k] > 0) {
            next[k] += r * q[k];
            b.water_in += dt * q[k];
        } else if (q[k] < 0) {
            next[k] += r * q[k] * F[k];
            b.water_out -= dt * q[k] * F[k];
        }
    }
    // Round-off cleanup only; the monotone update keeps exact values in [0,1].
    for (index_t k = 0; k < next.size(); ++k) {
        if (next[k] < -1e-10 || next[k] > 1 + 1e-10)
            throw numerical_error("transport: saturation left [0,1] at cell " + std::to_string(k));
        next[k] = std::clamp(next[k], 0.0, 1.0);
    }
    if (balance)
        *balance = b;
    return next;
}

/// q_w / q_t over producer cells (negative net outflow).
inline double
water_cut(const grid_hierarchy& g, const vector_t& S, const vector_t& velocity, const twophase_config& c)
{
    const vector_t q = cell_net_outflow(g, velocity);
    const double tol = 1e-12 * q.cwiseAbs().sum();
    double qt = 0, qw = 0;
    for (index_t k = 0; k < q.size(); ++k)
        if (q[k] < -tol) {
            qt -= q[k];
            qw -= q[k] * fractional_flow(S[k], c);
        }
    if (!(qt > 0))
        throw numerical_error("water cut: no production");
    return qw / qt;
}

/// Cell-source water cut with the producers taken from f directly.
inline double
water_cut(const grid_hierarchy& g, const vector_t& S, const source_field& f, const twophase_config& c)
{
    double qt = 0, qw = 0;
    for (index_t k = 0; k < f.values.size(); ++k)
        if (f.values[k] < 0) {
            qt -= f.values[k] * g.cell_area();
            qw -= f.values[k] * g.cell_area() * fractional_flow(S[k], c);
        }
    if (!(qt > 0))
        throw numerical_error("water cut: no producer cells");
    return qw / qt;
}

/// Inputs for rebuilding stage-II bases during a multiscale run.
struct re_enrichment
{
    enrichment_config config;
    index_t sweeps = 1;        ///< residual bases added per edge at each rebuild
    index_t offline_count = 0; ///< > 0: also rebuild stage I with this many bases per edge
};

struct impes_result
{
    saturation_field final;
    std::vector<double> times;      ///< after each step
    std::vector<double> water_cut;  ///< after each step
    std::vector<saturation_field> snapshots;
    double water_injected = 0;
    double water_produced = 0;
    index_t steps = 0;
    index_t pressure_solves = 0;
    index_t re_enrichments = 0;
    std::size_t region_builds = 0; ///< oversampled regions (re)built by re-enrichment
    multiscale_space space; ///< final space (multiscale runs)
};

inline impes_result
impes_run(const grid_hierarchy& g, const vector_t& kappa, const source_field& f, const twophase_config& cfg,
          const multiscale_space* space = nullptr, const re_enrichment* rebuild = nullptr)
{
    cfg.validate();
    detail::require(kappa.size() == g.num_cells(), "twophase: field size mismatch");
    if (cfg.solver == pressure_solver::multiscale)
        detail::require(space != nullptr && space->size() > 0, "twophase: multiscale solver needs a trained space");

    impes_result out;
    out.final.values = vector_t::Zero(g.num_cells());
    if (space)
        out.space = *space;

    std::unique_ptr<ms_solver> ms;
    if (cfg.solver == pressure_solver::multiscale)
        ms = std::make_unique<ms_solver>(g, out.space);
    fine_solver fs(g);

    region_cache regions;
    std::vector<double> pending = cfg.re_enrich_times;
    std::sort(pending.begin(), pending.end());
    std::vector<double> shots = cfg.snapshot_times;
    std::sort(shots.begin(), shots.end());
    std::size_t next_shot = 0;

    vector_t& S = out.final.values;
    double& t = out.final.time;
    vector_t velocity;
    double dt_auto = 0;
    const double slope = max_fractional_slope(cfg);
    const double eps = 1e-12 * std::max(1.0, cfg.t_end);
    while (t < cfg.t_end - eps) {
        vector_t keff(g.num_cells());
        if (out.steps % cfg.pressure_every == 0 || velocity.size() == 0) {
            for (index_t k = 0; k < g.num_cells(); ++k)
                keff[k] = mobility(S[k], cfg).total * kappa[k];
            if (cfg.solver == pressure_solver::multiscale && rebuild && !pending.empty() && t >= pending.front()) {
                while (!pending.empty() && t >= pending.front())
                    pending.erase(pending.begin());
                const std::span<const double> ks(keff.data(), std::size_t(keff.size()));
                enrichment_config ec = rebuild->config;
                ec.max_iters = iterations_for(g, ec.strategy, rebuild->sweeps);
                const auto stage = compute_offline_stage(g, ks, ec.jobs);
                const vector_t w = source_correction(g, ks, f);
                const multiscale_space base = rebuild->offline_count > 0
                                                  ? build_offline_space(g, stage.snapshots, stage.spectra,
                                                                        rebuild->offline_count)
                                                  : out.space;
                out.space = enrich(g, ks, f, base, ec, stage, &w, &regions).space;
                ms = std::make_unique<ms_solver>(g, out.space);
                ++out.re_enrichments;
            }
            if (cfg.solver == pressure_solver::fine) {
                fs.update(keff);
                velocity = fs.solve(f).velocity;
            } else {
                const std::span<const double> ks(keff.data(), std::size_t(keff.size()));
                velocity = ms->solve(keff, f, source_correction(g, ks, f)).velocity;
            }
            ++out.pressure_solves;
            dt_auto = cfg.cfl_target * cfl_limit(g, velocity, cfg, nullptr, slope);
        }
        double dt = cfg.dt > 0 ? cfg.dt : dt_auto;
        dt = std::min(dt, cfg.t_end - t);
        transport_balance b;
        S = transport_step(g, S, velocity, dt, cfg, &b, slope);
        t += dt;
        ++out.steps;
        out.water_injected += b.water_in;
        out.water_produced += b.water_out;
        out.times.push_back(t);
        out.water_cut.push_back(water_cut(g, S, velocity, cfg));
        if (cfg.record_every > 0 && out.steps % cfg.record_every == 0)
            out.snapshots.push_back(out.final);
        while (next_shot < shots.size() && t >= shots[next_shot] - eps) {
            out.snapshots.push_back(out.final);
            ++next_shot;
        }
    }
    out.region_builds = regions.builds();
    return out;
}

} // namespace msflow
