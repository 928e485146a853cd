#include "msflow/mssolver.hpp"
#include "msflow/spectral.hpp"

#include <gtest/gtest.h>

using namespace msflow;

namespace {

vector_t
checker_field(const grid_hierarchy& g, double contrast)
{
    vector_t k(g.num_cells());
    for (index_t c = 0; c < k.size(); ++c) {
        const auto [i, j] = g.cell_ij(c);
        k[c] = ((i / 3 + 2 * j) % 5 == 1) ? contrast : 1.0 + 0.05 * double(j);
    }
    return k;
}

} // namespace

TEST(Spectral, FormsMatchDirectEvaluation)
{
    const grid_hierarchy g({1, 1}, {12, 12}, {3, 3});
    const vector_t k = checker_field(g, 1e3);
    const std::span<const double> ks(k.data(), std::size_t(k.size()));
    const auto whole = assemble_block(g, cell_rect{0, 0, 12, 12}, ks);
    for (index_t ce = 0; ce < g.num_coarse_edges(); ++ce) {
        const auto s = build_edge_snapshots(g, ks, ce);
        const auto [A, S] = spectral_forms(g, ks, s);
        const index_t L = s.size();
        const double H = g.coarse_edge_length(ce);
        // the trace form is diagonal: snapshots are Kronecker deltas on E_i
        for (index_t a = 0; a < L; ++a)
            for (index_t b = 0; b < L; ++b) {
                const index_t e = s.edge_fine_edges[std::size_t(a)];
                const auto info = g.edge(e);
                const double kbar = 0.5 * (1.0 / k[info.minus_cell] + 1.0 / k[info.plus_cell]);
                EXPECT_NEAR(A(a, b), a == b ? kbar * g.edge_length(e) : 0.0, 1e-13 * kbar);
            }
        // s-form: mass plus divergence products, over H
        matrix_t Sref(L, L);
        for (index_t a = 0; a < L; ++a)
            for (index_t b = 0; b < L; ++b) {
                const vector_t va = s.functions.global(g, a), vb = s.functions.global(g, b);
                Sref(a, b) = (va.dot(whole.A * vb) +
                              (cell_divergence(g, va).array() * cell_divergence(g, vb).array()).sum() * g.cell_area()) /
                             H;
            }
        EXPECT_LT((S - Sref).cwiseAbs().maxCoeff(), 1e-10 * Sref.cwiseAbs().maxCoeff()) << ce;
    }
}

TEST(Spectral, GeneralizedEigenpairs)
{
    const grid_hierarchy g({1, 1}, {16, 8}, {4, 2});
    const vector_t k = checker_field(g, 1e4);
    const std::span<const double> ks(k.data(), std::size_t(k.size()));
    const auto stage = compute_offline_stage(g, ks, 2);
    ASSERT_EQ(stage.spectra.size(), std::size_t(g.num_coarse_edges()));
    for (const auto& r : stage.spectra) {
        const index_t L = r.eigenvalues.size();
        const matrix_t& V = r.eigenvectors;
        EXPECT_LT((V.transpose() * r.S_snap * V - matrix_t::Identity(L, L)).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((r.A_snap * V - r.S_snap * V * r.eigenvalues.asDiagonal()).cwiseAbs().maxCoeff(),
                  1e-9 * r.A_snap.cwiseAbs().maxCoeff());
        for (index_t q = 1; q < L; ++q)
            EXPECT_LE(r.eigenvalues[q - 1], r.eigenvalues[q]);
        EXPECT_GT(r.eigenvalues[0], 0.0);
    }
}

TEST(Spectral, OfflineSpaceSizesAndErrors)
{
    const grid_hierarchy g({1, 1}, {16, 16}, {4, 4});
    const vector_t k = checker_field(g, 1e2);
    const std::span<const double> ks(k.data(), std::size_t(k.size()));
    const auto stage = compute_offline_stage(g, ks);
    for (index_t l : {1, 2, 4}) {
        const auto sp = build_offline_space(g, stage.snapshots, stage.spectra, l);
        EXPECT_EQ(sp.size(), l * g.num_coarse_edges());
        EXPECT_EQ(sp.count(basis_stage::offline), sp.size());
        EXPECT_EQ(sp.stage_counts[0], l);
    }
    EXPECT_THROW(build_offline_space(g, stage.snapshots, stage.spectra, 5), config_error);
    // the full spectral space spans the snapshot space
    const auto full = build_offline_space(g, stage.snapshots, stage.spectra, 4);
    const auto ob = orthonormalize(full);
    EXPECT_EQ(ob.rank(), 4 * g.num_coarse_edges());
}
