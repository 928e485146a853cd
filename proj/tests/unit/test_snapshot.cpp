#include "msflow/snapshot.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace msflow;

namespace {

vector_t
layered_field(const grid_hierarchy& g)
{
    vector_t k(g.num_cells());
    for (index_t c = 0; c < k.size(); ++c) {
        const auto [i, j] = g.cell_ij(c);
        k[c] = ((i / 2 + j) % 3 == 0) ? 1e-3 : 1.0 + 0.1 * double(i);
    }
    return k;
}

// The function is a Galerkin solution inside each half: A v on the half's
// interior edges lies in the range of B^T.  Checked by least squares.
double
galerkin_defect(const grid_hierarchy& g, const vector_t& k, const cell_rect& half, const vector_t& global_v)
{
    const auto forms = assemble_block(g, half, std::span<const double>(k.data(), std::size_t(k.size())));
    vector_t v(index_t(forms.edges.size()));
    for (std::size_t e = 0; e < forms.edges.size(); ++e)
        v[index_t(e)] = global_v[forms.edges[e]];
    const vector_t Av = forms.A * v;
    std::vector<index_t> inner;
    for (std::size_t e = 0; e < forms.edges.size(); ++e)
        if (!forms.boundary[e])
            inner.push_back(index_t(e));
    const matrix_t Bt = matrix_t(forms.B.transpose());
    matrix_t M(index_t(inner.size()), Bt.cols());
    vector_t r(index_t(inner.size()));
    for (std::size_t a = 0; a < inner.size(); ++a) {
        M.row(index_t(a)) = Bt.row(inner[a]);
        r[index_t(a)] = Av[inner[a]];
    }
    const vector_t p = M.completeOrthogonalDecomposition().solve(r);
    return (M * p - r).norm() / std::max(r.norm(), 1e-300);
}

} // namespace

TEST(Snapshots, KroneckerTraceAndLocalProblem)
{
    const grid_hierarchy g({1, 1}, {12, 8}, {3, 2});
    const vector_t k = layered_field(g);
    const std::span<const double> ks(k.data(), std::size_t(k.size()));
    for (index_t ce = 0; ce < g.num_coarse_edges(); ++ce) {
        const auto n = make_neighborhood(g, ce);
        const auto s = build_edge_snapshots(g, ks, ce);
        ASSERT_EQ(s.size(), n.L());
        std::set<index_t> inside(n.fine_edges.begin(), n.fine_edges.end());
        for (index_t j = 0; j < s.size(); ++j) {
            const vector_t v = s.functions.global(g, j);
            for (index_t q = 0; q < n.L(); ++q)
                EXPECT_EQ(v[n.edge_fine_edges[std::size_t(q)]], q == j ? 1.0 : 0.0);
            // zero flux on the neighborhood boundary, nothing outside it
            const auto& r = n.region;
            for (index_t e = 0; e < g.num_edges(); ++e) {
                const auto info = g.edge(e);
                const bool on_boundary =
                    (info.normal == axis::x && (info.i == r.i0 || info.i == r.i1) && info.j >= r.j0 && info.j < r.j1) ||
                    (info.normal == axis::y && (info.j == r.j0 || info.j == r.j1) && info.i >= r.i0 && info.i < r.i1);
                if (on_boundary || !inside.count(e)) {
                    EXPECT_EQ(v[e], 0.0);
                }
            }
            // constant divergence in each coarse cell, +/- the unit-edge flux
            const vector_t d = cell_divergence(g, v);
            const double len = g.edge_length(n.edge_fine_edges[std::size_t(j)]);
            for (int h = 0; h < 2; ++h) {
                const double expect = (h == 0 ? 1.0 : -1.0) * len / (double(n.halves[h].size()) * g.cell_area());
                for (index_t c : g.cells_in(n.halves[std::size_t(h)]))
                    EXPECT_NEAR(d[c], expect, 1e-10 * std::abs(expect));
                EXPECT_LT(galerkin_defect(g, k, n.halves[std::size_t(h)], v), 1e-9);
            }
            for (index_t r2 = 0; r2 < 2; ++r2)
                EXPECT_NEAR(s.divergences(r2, j), (s.coarse_cells[std::size_t(r2)] == n.member_coarse_cells[0] ? 1 : -1) *
                                                      len / (double(n.halves[0].size()) * g.cell_area()),
                            1e-12);
        }
    }
}

TEST(Snapshots, OversampledRegionAndDivergenceFreeSubspace)
{
    const grid_hierarchy g({1, 1}, {16, 16}, {4, 4});
    const vector_t k = layered_field(g);
    const std::span<const double> ks(k.data(), std::size_t(k.size()));
    const index_t ce = g.coarse_x_edge(1, 1);
    const auto o = make_oversampled(g, ce, 1);
    const auto s = build_oversampled_snapshots(g, ks, ce, 1);
    EXPECT_EQ(s.kind, region_kind::oversampled);
    EXPECT_EQ(s.size(), index_t(o.extended_edge.size()));
    EXPECT_EQ(s.coarse_cells.size(), o.coarse_cells.size());
    const matrix_t N = divergence_free_subspace(s);
    EXPECT_EQ(N.cols(), s.size() - 1);
    EXPECT_LT((s.divergences * N).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((N.transpose() * N - matrix_t::Identity(N.cols(), N.cols())).cwiseAbs().maxCoeff(), 1e-12);
    // divergence-free combinations have zero divergence cell by cell
    for (index_t q = 0; q < N.cols(); ++q) {
        vector_t v = vector_t::Zero(g.num_edges());
        for (index_t j = 0; j < s.size(); ++j)
            v += N(j, q) * s.functions.global(g, j);
        EXPECT_LT(cell_divergence(g, v).cwiseAbs().maxCoeff(), 1e-9);
    }
    // layers = 0 reproduces the standard snapshots
    const auto s0 = build_oversampled_snapshots(g, ks, ce, 0);
    const auto st = build_edge_snapshots(g, ks, ce);
    EXPECT_EQ(s0.kind, region_kind::standard);
    EXPECT_LT((s0.functions.values - st.functions.values).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Snapshots, Nullspace)
{
    matrix_t M(2, 4);
    M << 1, 2, 3, 4, 2, 4, 6, 8;
    const matrix_t N = nullspace(M);
    EXPECT_EQ(N.cols(), 3);
    EXPECT_LT((M * N).norm(), 1e-12);
    EXPECT_EQ(nullspace(matrix_t(0, 3)).cols(), 3);
}
