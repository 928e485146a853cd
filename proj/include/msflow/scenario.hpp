#pragma once

// The bundled high-contrast benchmark field: four channels, square
// inclusions, and uniform blocks around the source cells.

#include "msflow/mixedfem.hpp"
#include "msflow/randfield.hpp"

namespace msflow {

/// Channel layout in cell units, scaled with the fine grid.
inline channel_spec
benchmark_channels(const grid_hierarchy& g)
{
    const double nx = double(g.nx()), ny = double(g.ny());
    const double w = std::max(2.0, nx / 64.0);
    channel_spec cs;
    cs.channels = {{0, 0.30 * ny, nx, 0.40 * ny, w},
                   {0.70 * nx, 0, 0.60 * nx, ny, w},
                   {0, 0.75 * ny, 0.50 * nx, 0.85 * ny, w},
                   {0.25 * nx, 0, 0.30 * nx, 0.60 * ny, w}};
    cs.inclusions = g.nx() / 2;
    cs.inclusion_size = g.nx() / 32 + 1;
    // Each source cell sits in a uniform coarse block, so the coarse-average
    // source is carried by a connected high-permeability region.
    for (index_t z : source_cells(g))
        cs.filled_blocks.push_back(g.coarse_cell_of(z));
    return cs;
}

inline permeability_field
benchmark_field(const grid_hierarchy& g, double background = 1e-4, double channel_value = 1.0,
                std::uint64_t seed = 7)
{
    return synth_channel_field(g, background, channel_value, benchmark_channels(g), seed);
}

} // namespace msflow
