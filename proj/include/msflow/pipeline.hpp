#pragma once

// Glue between a run_config and the numerical modules: fields, sources,
// basis training and the archive cache.

#include "msflow/archive.hpp"
#include "msflow/config.hpp"
#include "msflow/digest.hpp"
#include "msflow/scenario.hpp"

#include <chrono>
#include <filesystem>

namespace msflow {

inline grid_hierarchy
make_grid(const run_config& r)
{
    return grid_hierarchy(r.grid.extent, r.grid.fine, r.grid.coarse);
}

/// Hash of a vector's little-endian float64 bytes.
inline std::string
hash_values(const vector_t& v)
{
    sha256 h;
    for (index_t k = 0; k < v.size(); ++k) {
        std::uint64_t bits;
        std::memcpy(&bits, &v[k], 8);
        unsigned char b[8];
        for (int q = 0; q < 8; ++q)
            b[q] = static_cast<unsigned char>(bits >> (8 * q));
        h.update(b, 8);
    }
    return h.hex();
}

/// Log-permeability mean used by the KL model; for other kinds, the log of
/// the deterministic field.
inline vector_t
mean_log_field(const run_config& r, const grid_hierarchy& g)
{
    const bool kl = r.field.kind == field_kind::kl;
    const std::string src = kl ? r.field.mean : (r.field.kind == field_kind::raster ? "raster" : "synthetic");
    if (src == "uniform")
        return vector_t::Constant(g.num_cells(), std::log(r.field.mean_value));
    if (src == "raster")
        return load_field_raster(r.field.path, g).values.array().log();
    return benchmark_field(g, r.field.background, r.field.channel_value, r.field.seed).values.array().log();
}

/// The deterministic field the basis is trained on.
inline vector_t
training_field(const run_config& r, const grid_hierarchy& g)
{
    return mean_log_field(r, g).array().exp();
}

inline kl_basis
make_kl(const run_config& r, const grid_hierarchy& g)
{
    const covariance_spec cov{r.field.sigma2, r.field.eta1, r.field.eta2};
    const auto rule = r.field.modes > 0 ? truncation_rule::fixed(r.field.modes)
                                        : truncation_rule::energy_fraction(r.field.energy);
    return kl_decompose(cov, g, rule);
}

inline source_field
make_source(const run_config& r, const grid_hierarchy& g)
{
    return make_source(g, r.source.kind, r.source.custom);
}

inline source_field
make_test_source(const run_config& r, const grid_hierarchy& g)
{
    if (r.source.test.empty())
        return make_source(r, g);
    return make_source(g, r.source.test == "five_point" ? source_kind::five_point : source_kind::two_point);
}

struct trained_basis
{
    multiscale_space space;
    offline_stage stage;
    std::vector<residual_report> reports;
    double seconds = 0;
};

/// Stage I with A bases per edge, then B sweeps of residual-driven
/// enrichment against the training problem.
inline trained_basis
train_basis(const grid_hierarchy& g, const vector_t& field, const source_field& f, const run_config& r,
            unsigned jobs, const vector_t* lifting = nullptr)
{
    const auto t0 = std::chrono::steady_clock::now();
    const std::span<const double> k(field.data(), std::size_t(field.size()));
    trained_basis out;
    out.stage = compute_offline_stage(g, k, jobs);
    out.space = build_offline_space(g, out.stage.snapshots, out.stage.spectra, r.basis.A);
    if (r.basis.B > 0) {
        enrichment_config ec;
        ec.tau = r.basis.tau;
        ec.layers = r.basis.layers;
        ec.strategy = r.basis.strategy;
        ec.max_iters = iterations_for(g, r.basis.strategy, r.basis.B);
        ec.jobs = jobs;
        auto e = enrich(g, k, f, out.space, ec, out.stage, lifting);
        out.space = std::move(e.space);
        out.reports = std::move(e.reports);
    }
    out.space.metadata["field_sha256"] = hash_values(field);
    out.space.metadata["source_sha256"] = hash_values(f.values);
    out.space.metadata["training_sha256"] = sha256_hex(training_key(r));
    out.space.metadata["lifted"] = lifting ? "true" : "false";
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

enum class basis_status : std::uint8_t { loaded, trained, stale };

inline const char*
to_string(basis_status s)
{
    return s == basis_status::loaded ? "loaded" : s == basis_status::trained ? "trained" : "stale";
}

struct basis_handle
{
    multiscale_space space;
    basis_status status = basis_status::trained;
    std::optional<double> t_train; ///< set when trained in this run
    std::optional<trained_basis> training;
    std::string path;
};

/// Loads the archive when its training text matches `key`; otherwise trains
/// and rewrites it.  A mismatching archive is reported as stale.
inline basis_handle
load_or_train(const std::string& path, const std::string& key, const grid_hierarchy& g, const vector_t& field,
              const source_field& f, const run_config& r, unsigned jobs, const vector_t* lifting = nullptr)
{
    basis_handle h;
    h.path = path;
    bool stale = false;
    if (std::filesystem::exists(path)) {
        try {
            basis_archive a = read_archive(path);
            if (a.training == key && a.fine == r.grid.fine && a.coarse == r.grid.coarse) {
                h.space = std::move(a.space);
                h.status = basis_status::loaded;
                return h;
            }
        } catch (const config_error&) {
            // unreadable archives are replaced like stale ones
        }
        stale = true;
    }
    h.training = train_basis(g, field, f, r, jobs, lifting);
    h.space = h.training->space;
    h.t_train = h.training->seconds;
    h.status = stale ? basis_status::stale : basis_status::trained;
    basis_archive a;
    a.space = h.space;
    a.fine = r.grid.fine;
    a.coarse = r.grid.coarse;
    a.extent = r.grid.extent;
    a.training = key;
    if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
        std::filesystem::create_directories(parent);
    write_archive(path, a);
    return h;
}

} // namespace msflow
