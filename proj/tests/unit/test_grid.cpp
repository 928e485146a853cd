#include "msflow/grid.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace msflow;

TEST(Grid, InteriorCoarseEdgeCount)
{
    const grid_hierarchy g({1, 1}, {8, 8}, {2, 2});
    EXPECT_EQ(g.num_coarse_edges(), 4);
    for (auto [nx, ny] : {std::pair{3, 5}, {4, 1}, {1, 1}, {11, 3}}) {
        const grid_hierarchy h({1, 1}, {index_t(nx) * 2, index_t(ny) * 3}, {nx, ny});
        EXPECT_EQ(h.num_coarse_edges(), nx * (ny - 1) + (nx - 1) * ny);
    }
}

TEST(Grid, RefinementOfTableMesh)
{
    const grid_hierarchy g({11, 3}, {220, 60}, {11, 3});
    EXPECT_EQ(g.refinement()[0], 20);
    EXPECT_EQ(g.refinement()[1], 20);
}

TEST(Grid, RejectsBadCounts)
{
    EXPECT_THROW(grid_hierarchy({1, 1}, {9, 8}, {2, 2}), config_error);
    EXPECT_THROW(grid_hierarchy({0, 1}, {8, 8}, {2, 2}), config_error);
    EXPECT_THROW(grid_hierarchy({1, 1}, {0, 8}, {1, 2}), config_error);
}

TEST(Grid, EveryFineEdgeHasTwoCellsOrBoundary)
{
    const grid_hierarchy g({2, 1}, {6, 4}, {3, 2});
    std::vector<int> seen(std::size_t(g.num_edges()), 0);
    for (index_t c = 0; c < g.num_cells(); ++c)
        for (index_t e : g.cell_edges(c))
            ++seen[std::size_t(e)];
    for (index_t e = 0; e < g.num_edges(); ++e) {
        const auto info = g.edge(e);
        EXPECT_EQ(seen[std::size_t(e)], info.boundary() ? 1 : 2) << "edge " << e;
        if (!info.boundary()) {
            // normals point from the minus cell to the plus cell along +x / +y
            const auto a = g.cell_ij(info.minus_cell), b = g.cell_ij(info.plus_cell);
            EXPECT_EQ(b[0] - a[0], info.normal == axis::x ? 1 : 0);
            EXPECT_EQ(b[1] - a[1], info.normal == axis::y ? 1 : 0);
        }
    }
    EXPECT_EQ(g.num_interior_edges(), 5 * 4 + 6 * 3);
}

TEST(Grid, EnumerationIsDeterministic)
{
    const grid_hierarchy a({1, 1}, {12, 8}, {3, 2}), b({1, 1}, {12, 8}, {3, 2});
    EXPECT_EQ(a.interior_edges(), b.interior_edges());
    // x-edges before y-edges, row-major
    EXPECT_EQ(a.x_edge(0, 0), 0);
    EXPECT_EQ(a.y_edge(0, 0), a.num_x_edges());
    EXPECT_EQ(a.cell_id(3, 2), 2 * 12 + 3);
}

TEST(Neighborhood, SizesAndEdgeCount)
{
    const grid_hierarchy g({1, 1}, {8, 8}, {2, 2});
    for (index_t ce = 0; ce < g.num_coarse_edges(); ++ce) {
        const auto n = make_neighborhood(g, ce);
        EXPECT_EQ(n.L(), 4);
        EXPECT_EQ(index_t(n.fine_cells.size()), 2 * 4 * 4);
        std::set<index_t> expected;
        for (index_t k : n.member_coarse_cells)
            for (index_t c : g.cells_in(g.coarse_cell_rect(k)))
                expected.insert(c);
        EXPECT_EQ(std::set<index_t>(n.fine_cells.begin(), n.fine_cells.end()), expected);
        EXPECT_NE(n.member_coarse_cells[0], n.member_coarse_cells[1]);
    }
    const grid_hierarchy big({11, 3}, {220, 60}, {11, 3});
    for (index_t ce : {index_t(0), big.num_coarse_edges() - 1})
        EXPECT_EQ(make_neighborhood(big, ce).L(), 20);
}

TEST(Neighborhood, BoundaryEdgeIdsRejected)
{
    const grid_hierarchy g({1, 1}, {8, 8}, {2, 2});
    EXPECT_THROW(make_neighborhood(g, g.num_coarse_edges()), config_error);
}

namespace {

// Coarse cells within `layers` rings (Chebyshev distance) of either member cell.
std::set<index_t>
ring_oracle(const grid_hierarchy& g, index_t ce, index_t layers)
{
    const auto info = g.coarse_edge(ce);
    std::set<index_t> out;
    for (index_t cj = 0; cj < g.coarse_ny(); ++cj)
        for (index_t ci = 0; ci < g.coarse_nx(); ++ci)
            for (index_t m : info.cells) {
                const index_t mi = m % g.coarse_nx(), mj = m / g.coarse_nx();
                if (std::max(std::abs(ci - mi), std::abs(cj - mj)) <= layers)
                    out.insert(g.coarse_cell_id(ci, cj));
            }
    return out;
}

} // namespace

TEST(Oversample, MatchesRingEnumeration)
{
    const grid_hierarchy g({1, 1}, {16, 16}, {4, 4});
    // vertical edge between coarse cells (1,1) and (2,1): unclipped
    const index_t interior = g.coarse_x_edge(1, 1);
    const auto n = make_oversampled(g, interior, 1);
    EXPECT_EQ(n.coarse_cells.size(), 12u);
    for (index_t ce = 0; ce < g.num_coarse_edges(); ++ce)
        for (index_t layers : {0, 1, 2}) {
            const auto o = make_oversampled(g, ce, layers);
            EXPECT_EQ(std::set<index_t>(o.coarse_cells.begin(), o.coarse_cells.end()), ring_oracle(g, ce, layers));
        }
    const auto clipped = make_oversampled(g, g.coarse_x_edge(0, 0), 1);
    EXPECT_LT(clipped.coarse_cells.size(), 12u);
}

TEST(Oversample, ContainsNeighborhoodAndEdge)
{
    const grid_hierarchy g({1, 1}, {20, 15}, {4, 3});
    for (index_t ce = 0; ce < g.num_coarse_edges(); ++ce) {
        const auto d = make_neighborhood(g, ce);
        const auto z = make_oversampled(g, ce, 0);
        EXPECT_EQ(z.region, d.region);
        EXPECT_EQ(z.extended_edge, d.edge_fine_edges);
        const auto o = make_oversampled(g, ce, 1);
        EXPECT_TRUE(o.region.contains(d.region));
        std::set<index_t> ext(o.extended_edge.begin(), o.extended_edge.end());
        for (index_t e : d.edge_fine_edges)
            EXPECT_TRUE(ext.count(e));
        EXPECT_EQ(o.edge_fine_edges, d.edge_fine_edges);
    }
    EXPECT_THROW(make_oversampled(g, 0, -1), config_error);
}
