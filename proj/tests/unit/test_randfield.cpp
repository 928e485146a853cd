#include "msflow/randfield.hpp"
#include "msflow/scenario.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace msflow;

namespace {

// Dense cell-area weighted covariance, assembled point by point.
matrix_t
dense_covariance(const covariance_spec& s, const grid_hierarchy& g)
{
    const index_t n = g.num_cells();
    matrix_t C(n, n);
    for (index_t a = 0; a < n; ++a)
        for (index_t b = 0; b < n; ++b)
            C(a, b) = evaluate_covariance(s, g.cell_center(a), g.cell_center(b)) * g.cell_area();
    return C;
}

vector_t
dense_eigenvalues_desc(const matrix_t& C)
{
    Eigen::SelfAdjointEigenSolver<matrix_t> es(C);
    return es.eigenvalues().reverse();
}

} // namespace

TEST(Covariance, Values)
{
    const covariance_spec s{1.0, 0.125, 0.125};
    EXPECT_DOUBLE_EQ(evaluate_covariance(s, {0.3, 0.4}, {0.3, 0.4}), 1.0);
    EXPECT_NEAR(evaluate_covariance(s, {0.5, 0.5}, {0.375, 0.5}), 0.60653065971263342, 1e-15);
    const covariance_spec t{2.5, 0.1, 0.3};
    for (auto [x, z] : {std::pair<std::array<double, 2>, std::array<double, 2>>{{0.1, 0.9}, {0.7, 0.2}},
                        {{0.0, 0.0}, {1.0, 1.0}},
                        {{0.33, 0.5}, {0.34, 0.52}}})
        EXPECT_EQ(evaluate_covariance(t, x, z), evaluate_covariance(t, z, x));
    EXPECT_THROW(covariance_spec({0.0, 1, 1}).validate(), config_error);
}

TEST(KL, OneRowMatchesDense1D)
{
    const grid_hierarchy g({1, 1.0 / 24}, {24, 1}, {1, 1});
    const covariance_spec s{1.3, 0.2, 0.2};
    const auto kl = kl_decompose(s, g, truncation_rule::fixed(24));
    const vector_t ref = dense_eigenvalues_desc(dense_covariance(s, g));
    for (index_t k = 0; k < 24; ++k)
        EXPECT_NEAR(kl.eigenvalues[k], ref[k], 1e-12 * ref[0]);
}

TEST(KL, KroneckerMatchesDense2D)
{
    const grid_hierarchy g({1, 1}, {16, 16}, {1, 1});
    const covariance_spec s{1.0, 0.125, 0.0625};
    const auto kl = kl_decompose(s, g, truncation_rule::fixed(g.num_cells()));
    const vector_t ref = dense_eigenvalues_desc(dense_covariance(s, g));
    for (index_t k = 0; k < g.num_cells(); ++k)
        if (ref[k] > 1e-8 * ref[0]) {
            EXPECT_NEAR(kl.eigenvalues[k], ref[k], 1e-8 * ref[k]) << k;
        }
}

TEST(KL, TraceIdentity)
{
    const grid_hierarchy g({2, 1}, {12, 10}, {1, 1});
    const covariance_spec s{0.7, 0.3, 0.1};
    const auto kl = kl_decompose(s, g, truncation_rule::fixed(g.num_cells()));
    EXPECT_NEAR(kl.eigenvalues.sum(), s.sigma2 * g.domain_area(), 1e-10);
    EXPECT_NEAR(dense_covariance(s, g).trace(), s.sigma2 * g.domain_area(), 1e-12);
}

TEST(KL, SortedAndWeightedOrthonormal)
{
    const grid_hierarchy g({1, 1}, {20, 12}, {1, 1});
    const auto kl = kl_decompose({1, 0.1, 0.2}, g, truncation_rule::fixed(30));
    for (index_t k = 1; k < kl.size(); ++k)
        EXPECT_GE(kl.eigenvalues[k - 1], kl.eigenvalues[k]);
    const matrix_t G = kl.eigenfunctions.transpose() * kl.eigenfunctions * g.cell_area();
    EXPECT_LT((G - matrix_t::Identity(30, 30)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(KL, TruncationRules)
{
    const grid_hierarchy g({1, 1}, {220, 60}, {11, 3});
    const auto kl = kl_decompose({1, 0.125, 0.125}, g, truncation_rule::fixed(38));
    EXPECT_EQ(kl.size(), 38);
    const grid_hierarchy h({1, 1}, {32, 32}, {1, 1});
    const auto e = kl_decompose({1, 0.125, 0.125}, h, truncation_rule::energy_fraction(0.9));
    EXPECT_GE(e.energy_fraction, 0.9);
    EXPECT_LT(e.cumulative_energy[std::size_t(e.size() - 2)], 0.9);
    EXPECT_THROW(kl_decompose({1, 0.1, 0.1}, h, truncation_rule::fixed(h.num_cells() + 1)), config_error);
}

TEST(Sample, EmptyExpansionAndDeterminism)
{
    const grid_hierarchy g({1, 1}, {16, 8}, {1, 1});
    vector_t mean(g.num_cells());
    for (index_t c = 0; c < mean.size(); ++c)
        mean[c] = std::sin(double(c));
    const auto none = kl_decompose({1, 0.2, 0.2}, g, truncation_rule::fixed(0));
    const auto f0 = sample_field(none, mean, 42);
    for (index_t c = 0; c < mean.size(); ++c)
        EXPECT_EQ(f0.values[c], std::exp(mean[c]));

    const auto kl = kl_decompose({1, 0.2, 0.2}, g, truncation_rule::fixed(10));
    const auto a = sample_field(kl, mean, 7), b = sample_field(kl, mean, 7), c = sample_field(kl, mean, 8);
    EXPECT_EQ(a.values, b.values);
    EXPECT_NE(a.values, c.values);
    EXPECT_GT(a.values.minCoeff(), 0.0);
    // Y = mean + sum mu_i sqrt(lambda_i) f_i
    const vector_t mu = kl_coefficients(10, 7);
    const vector_t y = mean + kl.eigenfunctions * (mu.array() * kl.eigenvalues.array().sqrt()).matrix();
    EXPECT_LT((sample_log_field(kl, mean, 7) - y).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Field, RasterRoundTripAndErrors)
{
    const grid_hierarchy g({1, 1}, {5, 3}, {1, 1});
    vector_t v(g.num_cells());
    for (index_t c = 0; c < v.size(); ++c)
        v[c] = 1.0 / (1.0 + double(c)) + 1e-3 * double(c * c);
    const auto dir = std::filesystem::temp_directory_path() / "msflow_raster_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "k.txt").string();
    write_field_raster(path, g, v);
    EXPECT_EQ(load_field_raster(path, g).values, v);

    std::ofstream((dir / "short.txt").string()) << "1 2 3\n";
    EXPECT_THROW(load_field_raster((dir / "short.txt").string(), g), config_error);
    std::ofstream((dir / "bad.txt").string()) << "1 2 x 4 5 6 7 8 9 10 11 12 13 14 15\n";
    EXPECT_THROW(load_field_raster((dir / "bad.txt").string(), g), config_error);
    std::ofstream((dir / "neg.txt").string()) << "1 2 -3 4 5 6 7 8 9 10 11 12 13 14 15\n";
    EXPECT_THROW(load_field_raster((dir / "neg.txt").string(), g), config_error);
    EXPECT_THROW(load_field_raster((dir / "missing.txt").string(), g), config_error);
    std::filesystem::remove_all(dir);
}

TEST(Field, BenchmarkFieldLayout)
{
    const grid_hierarchy g({1, 1}, {128, 128}, {8, 8});
    const auto k = benchmark_field(g);
    EXPECT_DOUBLE_EQ(k.values.minCoeff(), 1e-4);
    EXPECT_DOUBLE_EQ(k.values.maxCoeff(), 1.0);
    EXPECT_DOUBLE_EQ(k.contrast(), 1e4);
    for (index_t z : source_cells(g))
        for (index_t c : g.cells_in(g.coarse_cell_rect(g.coarse_cell_of(z))))
            EXPECT_EQ(k.values[c], 1.0);
    const double frac = (k.values.array() > 0.5).cast<double>().mean();
    EXPECT_GT(frac, 0.1);
    EXPECT_LT(frac, 0.5);
    EXPECT_EQ(benchmark_field(g).values, k.values);
}
