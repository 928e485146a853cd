#pragma once

// Nested Cartesian coarse/fine grids on [0,Lx]x[0,Ly].
//
// Index conventions (stable, row-major, low y first):
//   fine cell (i,j)          -> j*Nx + i
//   fine x-edge (i,j)        -> j*(Nx+1) + i          at x = i*hx, normal +x
//   fine y-edge (i,j)        -> (Nx+1)*Ny + j*Nx + i  at y = j*hy, normal +y
//   coarse cell (ci,cj)      -> cj*nx + ci
//   coarse x-edge (ci,cj)    -> cj*(nx-1) + ci        between cells ci and ci+1
//   coarse y-edge (ci,cj)    -> nx_edges + cj*nx + ci between rows cj and cj+1
// Only interior coarse edges are enumerated.

#include "msflow/core.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace msflow {

enum class axis : std::uint8_t { x, y };

/// Half-open block of fine cells [i0,i1) x [j0,j1).
struct cell_rect
{
    index_t i0 = 0, j0 = 0, i1 = 0, j1 = 0;

    index_t width() const { return i1 - i0; }
    index_t height() const { return j1 - j0; }
    index_t size() const { return width() * height(); }
    bool contains(index_t i, index_t j) const { return i >= i0 && i < i1 && j >= j0 && j < j1; }
    bool contains(const cell_rect& o) const
    {
        return o.i0 >= i0 && o.i1 <= i1 && o.j0 >= j0 && o.j1 <= j1;
    }
    friend bool operator==(const cell_rect&, const cell_rect&) = default;
};

struct fine_edge_info
{
    axis normal;
    index_t i, j;
    index_t minus_cell; ///< cell on the -normal side, -1 on the domain boundary
    index_t plus_cell;  ///< cell on the +normal side, -1 on the domain boundary
    bool boundary() const { return minus_cell < 0 || plus_cell < 0; }
};

struct coarse_edge_info
{
    axis normal;
    index_t ci, cj;                 ///< lower/left member cell
    std::array<index_t, 2> cells;   ///< {minus side, plus side}
};

class grid_hierarchy
{
public:
    grid_hierarchy(std::array<double, 2> extent,
                   std::array<index_t, 2> fine,
                   std::array<index_t, 2> coarse)
      : lx_(extent[0]), ly_(extent[1]),
        nxf_(fine[0]), nyf_(fine[1]), nxc_(coarse[0]), nyc_(coarse[1])
    {
        detail::require(lx_ > 0 && ly_ > 0, "grid: domain extent must be positive");
        detail::require(nxf_ >= 1 && nyf_ >= 1 && nxc_ >= 1 && nyc_ >= 1,
                        "grid: cell counts must be >= 1");
        if (nxf_ % nxc_ != 0 || nyf_ % nyc_ != 0) {
            std::ostringstream os;
            os << "grid: fine counts (" << nxf_ << "," << nyf_
               << ") not divisible by coarse counts (" << nxc_ << "," << nyc_ << ")";
            throw config_error(os.str());
        }
        rx_ = nxf_ / nxc_;
        ry_ = nyf_ / nyc_;
        hx_ = lx_ / double(nxf_);
        hy_ = ly_ / double(nyf_);

        const index_t ne = num_edges();
        interior_index_.assign(std::size_t(ne), -1);
        for (index_t e = 0; e < ne; ++e) {
            if (!edge(e).boundary()) {
                interior_index_[std::size_t(e)] = index_t(interior_.size());
                interior_.push_back(e);
            }
        }
    }

    double lx() const { return lx_; }
    double ly() const { return ly_; }
    index_t nx() const { return nxf_; }
    index_t ny() const { return nyf_; }
    index_t coarse_nx() const { return nxc_; }
    index_t coarse_ny() const { return nyc_; }
    std::array<index_t, 2> refinement() const { return {rx_, ry_}; }
    double hx() const { return hx_; }
    double hy() const { return hy_; }
    double cell_area() const { return hx_ * hy_; }
    double domain_area() const { return lx_ * ly_; }
    double coarse_hx() const { return hx_ * double(rx_); }
    double coarse_hy() const { return hy_ * double(ry_); }

    // ---- fine cells
    index_t num_cells() const { return nxf_ * nyf_; }
    index_t cell_id(index_t i, index_t j) const { return j * nxf_ + i; }
    std::array<index_t, 2> cell_ij(index_t c) const { return {c % nxf_, c / nxf_}; }
    std::array<double, 2> cell_center(index_t c) const
    {
        auto [i, j] = cell_ij(c);
        return {(double(i) + 0.5) * hx_, (double(j) + 0.5) * hy_};
    }

    // ---- fine edges
    index_t num_x_edges() const { return (nxf_ + 1) * nyf_; }
    index_t num_y_edges() const { return nxf_ * (nyf_ + 1); }
    index_t num_edges() const { return num_x_edges() + num_y_edges(); }
    index_t x_edge(index_t i, index_t j) const { return j * (nxf_ + 1) + i; }
    index_t y_edge(index_t i, index_t j) const { return num_x_edges() + j * nxf_ + i; }

    fine_edge_info edge(index_t e) const
    {
        if (e < num_x_edges()) {
            const index_t i = e % (nxf_ + 1), j = e / (nxf_ + 1);
            return {axis::x, i, j, i > 0 ? cell_id(i - 1, j) : -1, i < nxf_ ? cell_id(i, j) : -1};
        }
        const index_t r = e - num_x_edges();
        const index_t i = r % nxf_, j = r / nxf_;
        return {axis::y, i, j, j > 0 ? cell_id(i, j - 1) : -1, j < nyf_ ? cell_id(i, j) : -1};
    }
    double edge_length(index_t e) const { return e < num_x_edges() ? hy_ : hx_; }

    /// The four edges of a cell in order left, right, bottom, top.
    std::array<index_t, 4> cell_edges(index_t c) const
    {
        auto [i, j] = cell_ij(c);
        return {x_edge(i, j), x_edge(i + 1, j), y_edge(i, j), y_edge(i, j + 1)};
    }

    index_t num_interior_edges() const { return index_t(interior_.size()); }
    const std::vector<index_t>& interior_edges() const { return interior_; }
    /// Position among interior edges, -1 for boundary edges.
    index_t interior_index(index_t e) const { return interior_index_[std::size_t(e)]; }

    /// Unknowns of the fine mixed system: interior edges plus cells.
    index_t num_fine_unknowns() const { return num_interior_edges() + num_cells(); }

    // ---- coarse cells / edges
    index_t num_coarse_cells() const { return nxc_ * nyc_; }
    index_t coarse_cell_id(index_t ci, index_t cj) const { return cj * nxc_ + ci; }
    index_t coarse_cell_of(index_t fine_cell) const
    {
        auto [i, j] = cell_ij(fine_cell);
        return coarse_cell_id(i / rx_, j / ry_);
    }
    cell_rect coarse_cell_rect(index_t k) const
    {
        const index_t ci = k % nxc_, cj = k / nxc_;
        return {ci * rx_, cj * ry_, (ci + 1) * rx_, (cj + 1) * ry_};
    }
    /// Fine-cell rectangle covered by the coarse-cell block [ci0,ci1) x [cj0,cj1).
    cell_rect coarse_block_rect(index_t ci0, index_t cj0, index_t ci1, index_t cj1) const
    {
        return {ci0 * rx_, cj0 * ry_, ci1 * rx_, cj1 * ry_};
    }

    index_t num_coarse_x_edges() const { return (nxc_ - 1) * nyc_; }
    index_t num_coarse_y_edges() const { return nxc_ * (nyc_ - 1); }
    index_t num_coarse_edges() const { return num_coarse_x_edges() + num_coarse_y_edges(); }
    index_t coarse_x_edge(index_t ci, index_t cj) const { return cj * (nxc_ - 1) + ci; }
    index_t coarse_y_edge(index_t ci, index_t cj) const { return num_coarse_x_edges() + cj * nxc_ + ci; }

    coarse_edge_info coarse_edge(index_t ce) const
    {
        detail::require(ce >= 0 && ce < num_coarse_edges(), "grid: coarse edge id out of range");
        if (ce < num_coarse_x_edges()) {
            const index_t ci = ce % (nxc_ - 1), cj = ce / (nxc_ - 1);
            return {axis::x, ci, cj, {coarse_cell_id(ci, cj), coarse_cell_id(ci + 1, cj)}};
        }
        const index_t r = ce - num_coarse_x_edges();
        const index_t ci = r % nxc_, cj = r / nxc_;
        return {axis::y, ci, cj, {coarse_cell_id(ci, cj), coarse_cell_id(ci, cj + 1)}};
    }
    /// Length of a coarse edge (H in the spectral weight).
    double coarse_edge_length(index_t ce) const
    {
        return coarse_edge(ce).normal == axis::x ? coarse_hy() : coarse_hx();
    }

    /// Fine edges on the straight line separating two fine-cell blocks.
    /// For axis::x the line is x = line*hx for rows [lo,hi); for axis::y,
    /// y = line*hy for columns [lo,hi).
    std::vector<index_t> line_edges(axis normal, index_t line, index_t lo, index_t hi) const
    {
        std::vector<index_t> out;
        out.reserve(std::size_t(hi - lo));
        for (index_t t = lo; t < hi; ++t)
            out.push_back(normal == axis::x ? x_edge(line, t) : y_edge(t, line));
        return out;
    }

    std::vector<index_t> cells_in(const cell_rect& r) const
    {
        std::vector<index_t> out;
        out.reserve(std::size_t(r.size()));
        for (index_t j = r.j0; j < r.j1; ++j)
            for (index_t i = r.i0; i < r.i1; ++i)
                out.push_back(cell_id(i, j));
        return out;
    }

    /// All fine edges in the closure of a rectangle, x-edges first.
    std::vector<index_t> edges_in(const cell_rect& r) const
    {
        std::vector<index_t> out;
        for (index_t j = r.j0; j < r.j1; ++j)
            for (index_t i = r.i0; i <= r.i1; ++i)
                out.push_back(x_edge(i, j));
        for (index_t j = r.j0; j <= r.j1; ++j)
            for (index_t i = r.i0; i < r.i1; ++i)
                out.push_back(y_edge(i, j));
        return out;
    }

    bool same_shape(const grid_hierarchy& o) const
    {
        return lx_ == o.lx_ && ly_ == o.ly_ && nxf_ == o.nxf_ && nyf_ == o.nyf_ && nxc_ == o.nxc_ &&
               nyc_ == o.nyc_;
    }

private:
    double lx_, ly_;
    index_t nxf_, nyf_, nxc_, nyc_;
    index_t rx_ = 1, ry_ = 1;
    double hx_ = 1, hy_ = 1;
    std::vector<index_t> interior_;
    std::vector<index_t> interior_index_;
};

inline grid_hierarchy
build_hierarchy(std::array<double, 2> extent, std::array<index_t, 2> fine, std::array<index_t, 2> coarse)
{
    return grid_hierarchy(extent, fine, coarse);
}

/// Coarse neighborhood D_i: the two coarse cells sharing interior coarse edge E_i.
struct neighborhood
{
    index_t edge_id;
    std::array<index_t, 2> member_coarse_cells; ///< {minus side, plus side} w.r.t. n_i
    std::array<cell_rect, 2> halves;
    cell_rect region;
    std::vector<index_t> fine_cells;
    std::vector<index_t> fine_edges;
    std::vector<index_t> edge_fine_edges; ///< fine edges on E_i, increasing coordinate
    axis normal;
    index_t L() const { return index_t(edge_fine_edges.size()); }
};

/// D_i enlarged by `layers` rings of coarse cells, clipped to the domain.
struct oversampled_neighborhood
{
    index_t edge_id;
    index_t layers;
    axis normal;
    cell_rect region;
    std::array<cell_rect, 2> halves; ///< split along the line of E_i
    std::vector<index_t> coarse_cells;
    std::vector<index_t> fine_cells;
    std::vector<index_t> fine_edges;
    std::vector<index_t> extended_edge; ///< fine edges of E_i^+
    std::vector<index_t> edge_fine_edges; ///< fine edges of E_i (subset of extended_edge)
};

namespace detail {

// Coarse block [ci0,ci1) x [cj0,cj1) around coarse edge ce, enlarged by `layers`.
inline std::array<index_t, 4>
coarse_block_around(const grid_hierarchy& g, index_t ce, index_t layers)
{
    const auto info = g.coarse_edge(ce);
    index_t ci0 = info.ci, cj0 = info.cj;
    index_t ci1 = info.ci + (info.normal == axis::x ? 2 : 1);
    index_t cj1 = info.cj + (info.normal == axis::y ? 2 : 1);
    ci0 = std::max<index_t>(0, ci0 - layers);
    cj0 = std::max<index_t>(0, cj0 - layers);
    ci1 = std::min<index_t>(g.coarse_nx(), ci1 + layers);
    cj1 = std::min<index_t>(g.coarse_ny(), cj1 + layers);
    return {ci0, cj0, ci1, cj1};
}

inline std::array<cell_rect, 2>
split_at_edge(const grid_hierarchy& g, const coarse_edge_info& info, const cell_rect& r)
{
    if (info.normal == axis::x) {
        const index_t line = (info.ci + 1) * g.refinement()[0];
        return {cell_rect{r.i0, r.j0, line, r.j1}, cell_rect{line, r.j0, r.i1, r.j1}};
    }
    const index_t line = (info.cj + 1) * g.refinement()[1];
    return {cell_rect{r.i0, r.j0, r.i1, line}, cell_rect{r.i0, line, r.i1, r.j1}};
}

inline std::vector<index_t>
split_line_edges(const grid_hierarchy& g, const coarse_edge_info& info, const cell_rect& r)
{
    if (info.normal == axis::x)
        return g.line_edges(axis::x, (info.ci + 1) * g.refinement()[0], r.j0, r.j1);
    return g.line_edges(axis::y, (info.cj + 1) * g.refinement()[1], r.i0, r.i1);
}

} // namespace detail

inline neighborhood
make_neighborhood(const grid_hierarchy& g, index_t coarse_edge_id)
{
    const auto info = g.coarse_edge(coarse_edge_id);
    const auto b = detail::coarse_block_around(g, coarse_edge_id, 0);
    neighborhood n;
    n.edge_id = coarse_edge_id;
    n.member_coarse_cells = info.cells;
    n.normal = info.normal;
    n.region = g.coarse_block_rect(b[0], b[1], b[2], b[3]);
    n.halves = detail::split_at_edge(g, info, n.region);
    n.fine_cells = g.cells_in(n.region);
    n.fine_edges = g.edges_in(n.region);
    n.edge_fine_edges = detail::split_line_edges(g, info, n.region);
    return n;
}

inline oversampled_neighborhood
make_oversampled(const grid_hierarchy& g, index_t coarse_edge_id, index_t layers)
{
    detail::require(layers >= 0, "oversample: layers must be >= 0");
    const auto info = g.coarse_edge(coarse_edge_id);
    const auto b = detail::coarse_block_around(g, coarse_edge_id, layers);
    const auto core = detail::coarse_block_around(g, coarse_edge_id, 0);
    oversampled_neighborhood n;
    n.edge_id = coarse_edge_id;
    n.layers = layers;
    n.normal = info.normal;
    n.region = g.coarse_block_rect(b[0], b[1], b[2], b[3]);
    n.halves = detail::split_at_edge(g, info, n.region);
    for (index_t cj = b[1]; cj < b[3]; ++cj)
        for (index_t ci = b[0]; ci < b[2]; ++ci)
            n.coarse_cells.push_back(g.coarse_cell_id(ci, cj));
    n.fine_cells = g.cells_in(n.region);
    n.fine_edges = g.edges_in(n.region);
    n.extended_edge = detail::split_line_edges(g, info, n.region);
    n.edge_fine_edges =
        detail::split_line_edges(g, info, g.coarse_block_rect(core[0], core[1], core[2], core[3]));
    return n;
}

} // namespace msflow
