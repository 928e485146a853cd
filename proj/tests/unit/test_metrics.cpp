#include "msflow/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace msflow;

namespace {

// 2x2 Gauss quadrature of kappa^{-1} |v|^2 for the lowest-order RT field.
double
quadrature_energy(const grid_hierarchy& g, const vector_t& k, const vector_t& v)
{
    const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    double s = 0;
    for (index_t c = 0; c < g.num_cells(); ++c) {
        const auto [i, j] = g.cell_ij(c);
        const double l = v[g.x_edge(i, j)], r = v[g.x_edge(i + 1, j)];
        const double b = v[g.y_edge(i, j)], t = v[g.y_edge(i, j + 1)];
        for (double xi : gp)
            for (double et : gp) {
                const double vx = l + (r - l) * xi, vy = b + (t - b) * et;
                s += 0.25 * g.cell_area() * (vx * vx + vy * vy) / k[c];
            }
    }
    return s;
}

struct sweep_setup
{
    grid_hierarchy g{{1, 1}, {16, 16}, {4, 4}};
    kl_basis kl = kl_decompose({0.3, 0.125, 0.125}, g, truncation_rule::fixed(6));
    vector_t mean_log = vector_t::Zero(256);
    multiscale_space space;

    sweep_setup()
    {
        const vector_t k = mean_log.array().exp();
        const auto stage = compute_offline_stage(g, std::span<const double>(k.data(), std::size_t(k.size())));
        space = build_offline_space(g, stage.snapshots, stage.spectra, 2);
    }
};

} // namespace

TEST(VelocityError, Endpoints)
{
    const grid_hierarchy g({1, 1}, {8, 8}, {2, 2});
    vector_t k(64);
    for (index_t c = 0; c < 64; ++c)
        k[c] = 1.0 + 0.1 * double(c % 7);
    const auto fine = solve_fine(g, k, make_source(g, source_kind::two_point)).velocity;
    const std::span<const double> ks(k.data(), 64);
    EXPECT_EQ(velocity_error(g, ks, fine, fine), 0.0);
    EXPECT_DOUBLE_EQ(velocity_error(g, ks, fine, vector_t::Zero(fine.size())), 1.0);
    EXPECT_THROW(velocity_error(g, ks, vector_t::Zero(fine.size()), fine), numerical_error);
}

TEST(VelocityError, MatchesQuadrature)
{
    const grid_hierarchy g({2, 1}, {6, 4}, {2, 2});
    vector_t k(24);
    for (index_t c = 0; c < 24; ++c)
        k[c] = std::exp(std::sin(double(c)));
    vector_t a(g.num_edges()), b(g.num_edges());
    for (index_t e = 0; e < g.num_edges(); ++e) {
        a[e] = std::cos(0.7 * double(e));
        b[e] = a[e] + 0.1 * std::sin(1.3 * double(e));
    }
    const std::span<const double> ks(k.data(), 24);
    const double oracle = quadrature_energy(g, k, a - b) / quadrature_energy(g, k, a);
    EXPECT_NEAR(velocity_error(g, ks, a, b), oracle, 1e-13 * oracle);
    const vector_t one = vector_t::Ones(24);
    EXPECT_NEAR(velocity_l2_norm(g, a), std::sqrt(quadrature_energy(g, one, a)), 1e-13);
}

TEST(SaturationError, Values)
{
    const grid_hierarchy g({1, 1}, {4, 4}, {2, 2});
    vector_t s(16);
    for (index_t c = 0; c < 16; ++c)
        s[c] = double(c) / 15.0;
    EXPECT_EQ(saturation_error(g, s, s), 0.0);
    EXPECT_DOUBLE_EQ(saturation_error(g, s, 2.0 * s), 1.0);
    EXPECT_DOUBLE_EQ(stochastic_saturation_error(g, {s}, {2.0 * s}), 1.0);
    // averages cancel the opposite perturbations
    const vector_t d = vector_t::Constant(16, 0.01);
    EXPECT_NEAR(stochastic_saturation_error(g, {s, s}, {s + d, s - d}), 0.0, 1e-30);
    EXPECT_THROW(saturation_error(g, vector_t::Zero(16), s), numerical_error);
}

TEST(Sweep, StatisticsAndDeterminism)
{
    const sweep_setup t;
    const ms_solver solver(t.g, t.space);
    const auto f = make_source(t.g, source_kind::two_point);
    sweep_options opt;
    opt.n_samples = 5;
    opt.seed0 = 11;
    const auto rep = monte_carlo_sweep(t.g, t.kl, t.mean_log, solver, f, opt);
    ASSERT_EQ(rep.samples.size(), 5u);
    EXPECT_EQ(rep.failed(), 0);
    double m = 0;
    for (std::size_t s = 0; s < 5; ++s) {
        const auto& row = rep.samples[s];
        EXPECT_EQ(row.seed, 11 + s);
        // recompute the sample by hand
        const auto k = sample_field(t.kl, t.mean_log, row.seed).values;
        const auto vf = solve_fine(t.g, k, f).velocity;
        const auto vm = solver.solve(k, f).velocity;
        const double e = velocity_error(t.g, std::span<const double>(k.data(), 256), vf, vm);
        EXPECT_NEAR(row.e_v, e, 1e-10 * e);
        EXPECT_DOUBLE_EQ(row.e_v_rooted, std::sqrt(row.e_v));
        m += row.e_v / 5.0;
    }
    double var = 0;
    for (const auto& row : rep.samples)
        var += (row.e_v - m) * (row.e_v - m) / 4.0;
    EXPECT_NEAR(rep.mean(), m, 1e-14);
    EXPECT_NEAR(rep.variance(), var, 1e-14 * (var + 1e-300) + 1e-30);

    opt.jobs = 2;
    const auto again = monte_carlo_sweep(t.g, t.kl, t.mean_log, solver, f, opt);
    for (std::size_t s = 0; s < 5; ++s)
        EXPECT_EQ(again.samples[s].e_v, rep.samples[s].e_v);

    const auto [a, b] = generalization_study(t.g, t.kl, t.mean_log, solver, f, f, opt);
    for (std::size_t s = 0; s < 5; ++s)
        EXPECT_EQ(a.samples[s].e_v, b.samples[s].e_v);

    opt.n_samples = 0;
    try {
        monte_carlo_sweep(t.g, t.kl, t.mean_log, solver, f, opt);
        FAIL();
    } catch (const config_error& e) {
        EXPECT_STREQ(e.what(), "empty sweep");
    }
}

TEST(BoundTerms, ClosedForm)
{
    const grid_hierarchy g({1, 1}, {4, 4}, {2, 2});
    const vector_t k1 = vector_t::Constant(16, 4.0);
    vector_t k2 = k1;
    k2[5] = 1.0;
    const auto f1 = make_source(g, source_kind::two_point);
    const auto f2 = make_source(g, source_kind::five_point);
    const auto r = bound_terms(g, k1, k2, f1, f2);
    // |1 - 1/2| * ||f2||, with ||f2||^2 = (4 + 16) / 16
    EXPECT_NEAR(r.t1, 0.5 * std::sqrt(20.0 / 16.0), 1e-15);
    // f1 - f2: 0 at (0,0), -1 at two corners, -2 at the last one, +4 in the centre
    EXPECT_NEAR(r.t2, std::sqrt((1.0 + 1.0 + 4.0 + 16.0) / 16.0) / 2.0, 1e-15);
    EXPECT_EQ(bound_terms(g, k1, k1, f1, f1).t1, 0.0);
    EXPECT_EQ(bound_terms(g, k1, k1, f1, f1).t2, 0.0);
}

TEST(Spearman, RanksAndCorrelation)
{
    EXPECT_EQ(average_ranks({3, 1, 2, 2}), (std::vector<double>{4, 1, 2.5, 2.5}));
    EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 45}), 1.0, 1e-15);
    EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-15);
    // textbook case: d = (0, -1, 1, 0, 0) -> 1 - 6*2/(5*24)
    EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {1, 3, 2, 4, 5}), 0.9, 1e-15);
    EXPECT_THROW(spearman({1}, {1}), config_error);
}

TEST(Stability, SmallestConstant)
{
    EXPECT_DOUBLE_EQ(fit_stability_constant({1, 6, 2}, {1, 2, 4}), 3.0);
    EXPECT_THROW(fit_stability_constant({}, {}), config_error);
    EXPECT_THROW(fit_stability_constant({1}, {0}), numerical_error);
}
