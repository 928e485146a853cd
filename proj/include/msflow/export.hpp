#pragma once

// CSV and legacy-VTK writers.  Floating-point output uses 17 significant
// digits so files round-trip exactly.

#include "msflow/enrichment.hpp"
#include "msflow/metrics.hpp"
#include "msflow/twophase.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

namespace msflow {

namespace detail {

inline std::ofstream
open_output(const std::string& path)
{
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty())
        std::filesystem::create_directories(parent);
    std::ofstream out(path);
    if (!out)
        throw config_error("export: cannot write '" + path + "'");
    out << std::setprecision(17);
    return out;
}

} // namespace detail

/// DATASET STRUCTURED_POINTS with one double per cell.
inline void
write_vtk_cells(std::ostream& out, const grid_hierarchy& g, const std::vector<std::pair<std::string, const vector_t*>>& fields,
                const std::string& title = "msflow")
{
    out << std::setprecision(17);
    out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET STRUCTURED_POINTS\n";
    out << "DIMENSIONS " << g.nx() + 1 << " " << g.ny() + 1 << " 1\n";
    out << "ORIGIN 0 0 0\n";
    out << "SPACING " << g.hx() << " " << g.hy() << " 1\n";
    out << "CELL_DATA " << g.num_cells() << "\n";
    for (const auto& [name, values] : fields) {
        detail::require(values->size() == g.num_cells(), "vtk: field '" + name + "' has the wrong size");
        out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (index_t c = 0; c < g.num_cells(); ++c)
            out << (*values)[c] << "\n";
    }
}

inline void
write_vtk_cells(const std::string& path, const grid_hierarchy& g,
                const std::vector<std::pair<std::string, const vector_t*>>& fields, const std::string& title = "msflow")
{
    auto out = detail::open_output(path);
    write_vtk_cells(out, g, fields, title);
}

/// One row per fine edge: id, axis, i, j, normal flux.
inline void
write_edge_fluxes(const std::string& path, const grid_hierarchy& g, const vector_t& velocity)
{
    detail::require(velocity.size() == g.num_edges(), "export: velocity size mismatch");
    auto out = detail::open_output(path);
    out << "edge,axis,i,j,flux\n";
    for (index_t e = 0; e < g.num_edges(); ++e) {
        const auto info = g.edge(e);
        out << e << ',' << (info.normal == axis::x ? 'x' : 'y') << ',' << info.i << ',' << info.j << ','
            << velocity[e] << '\n';
    }
}

inline void
write_sweep_csv(const std::string& path, const sweep_report& r, bool timings = true)
{
    auto out = detail::open_output(path);
    out << "seed,e_v,e_v_rooted" << (timings ? ",T_test" : "") << ",status\n";
    for (const auto& s : r.samples) {
        out << s.seed << ',';
        if (s.ok)
            out << s.e_v << ',' << s.e_v_rooted;
        else
            out << ',';
        if (timings)
            out << ',' << (s.ok ? std::to_string(s.t_test) : "");
        out << ',' << (s.ok ? "ok" : "failed") << '\n';
    }
    const bool any = r.failed() < index_t(r.samples.size());
    out << "mean," << (any ? r.mean() : 0.0) << ',' << (any ? r.mean(true) : 0.0) << (timings ? "," : "") << ",\n";
    out << "variance," << (any ? r.variance() : 0.0) << ',' << (any ? r.variance(true) : 0.0) << (timings ? "," : "")
        << ",\n";
    out << "failed," << r.failed() << ",," << (timings ? "," : "") << "\n";
}

inline void
write_residual_csv(const std::string& path, const std::vector<residual_report>& reports)
{
    auto out = detail::open_output(path);
    out << "iteration,global_norm,relative_norm,regional_rss,min_regional,max_regional,training_error,basis_size,added\n";
    for (const auto& r : reports)
        out << r.iteration << ',' << r.global_norm << ',' << r.relative_norm << ',' << r.regional_rss << ','
            << r.min_regional() << ',' << r.max_regional() << ',' << r.training_error << ',' << r.basis_size << ','
            << r.added << '\n';
}

/// Stage-I eigenvalues, one row per (edge, index).
inline void
write_eigenvalue_csv(const std::string& path, const offline_stage& stage)
{
    auto out = detail::open_output(path);
    out << "edge,index,eigenvalue\n";
    for (const auto& s : stage.spectra)
        for (index_t k = 0; k < s.eigenvalues.size(); ++k)
            out << s.edge_id << ',' << k << ',' << s.eigenvalues[k] << '\n';
}

inline void
write_water_cut_csv(const std::string& path, const std::vector<double>& times,
                    const std::vector<std::pair<std::string, const std::vector<double>*>>& series)
{
    auto out = detail::open_output(path);
    out << "time";
    for (const auto& [name, v] : series) {
        detail::require(v->size() == times.size(), "export: water-cut series '" + name + "' has the wrong length");
        out << ',' << name;
    }
    out << '\n';
    for (std::size_t k = 0; k < times.size(); ++k) {
        out << times[k];
        for (const auto& s : series)
            out << ',' << (*s.second)[k];
        out << '\n';
    }
}

} // namespace msflow
