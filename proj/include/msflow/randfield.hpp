#pragma once

// Log-Gaussian permeability fields: truncated Karhunen-Loeve expansion of a
// separable Gaussian covariance, plus raster loading and channel synthesis.

#include "msflow/grid.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

namespace msflow {

struct covariance_spec
{
    double sigma2 = 1.0;
    double eta1 = 0.125;
    double eta2 = 0.125;

    void validate() const
    {
        detail::require(sigma2 > 0 && eta1 > 0 && eta2 > 0,
                        "covariance: sigma2, eta1 and eta2 must be positive");
    }
};

/// C(x,z) = sigma^2 exp(-|x1-z1|^2/(2 eta1^2) - |x2-z2|^2/(2 eta2^2))
inline double
evaluate_covariance(const covariance_spec& s, std::array<double, 2> x, std::array<double, 2> z)
{
    const double d1 = x[0] - z[0], d2 = x[1] - z[1];
    return s.sigma2 * std::exp(-d1 * d1 / (2.0 * s.eta1 * s.eta1) - d2 * d2 / (2.0 * s.eta2 * s.eta2));
}

struct truncation_rule
{
    enum class mode : std::uint8_t { fixed_count, energy } kind = mode::energy;
    index_t count = 0;
    double fraction = 0.95;

    static truncation_rule fixed(index_t n) { return {mode::fixed_count, n, 1.0}; }
    static truncation_rule energy_fraction(double theta) { return {mode::energy, 0, theta}; }
};

struct kl_basis
{
    vector_t eigenvalues;   ///< retained, nonincreasing
    matrix_t eigenfunctions; ///< cells x N_k, orthonormal in the cell-area weighted inner product
    double total_energy = 0; ///< sum of all discrete eigenvalues
    double energy_fraction = 0;
    std::vector<double> cumulative_energy; ///< over all merged eigenvalues, nonincreasing order

    index_t size() const { return eigenvalues.size(); }
};

namespace detail {

// Nystrom discretization of the 1D factor exp(-d^2/(2 eta^2)) on n cell
// centers of width h.  Returns eigenvalues (descending) and eigenvectors
// scaled to unit weighted norm.
inline std::pair<vector_t, matrix_t>
kl_factor_1d(index_t n, double h, double eta)
{
    matrix_t C(n, n);
    for (index_t i = 0; i < n; ++i)
        for (index_t k = 0; k < n; ++k) {
            const double d = double(i - k) * h;
            C(i, k) = std::exp(-d * d / (2.0 * eta * eta)) * h;
        }
    Eigen::SelfAdjointEigenSolver<matrix_t> es(C);
    if (es.info() != Eigen::Success)
        throw numerical_error("kl: 1D eigensolver failed");
    vector_t lam = es.eigenvalues().reverse();
    matrix_t vec = es.eigenvectors().rowwise().reverse() / std::sqrt(h);
    const double lmax = lam.size() ? lam[0] : 0.0;
    for (index_t i = 0; i < lam.size(); ++i) {
        if (lam[i] < -1e-12 * lmax)
            throw numerical_error("kl: covariance discretization is not positive semidefinite");
        lam[i] = std::max(lam[i], 0.0);
    }
    return {lam, vec};
}

} // namespace detail

/// The 2D covariance matrix is the Kronecker product of two 1D factors, so
/// its eigenpairs are products of 1D eigenpairs.
inline kl_basis
kl_decompose(const covariance_spec& spec, const grid_hierarchy& g, const truncation_rule& rule)
{
    spec.validate();
    const auto [lx, vx] = detail::kl_factor_1d(g.nx(), g.hx(), spec.eta1);
    const auto [ly, vy] = detail::kl_factor_1d(g.ny(), g.hy(), spec.eta2);

    const index_t nx = g.nx(), ny = g.ny(), n = nx * ny;
    std::vector<double> lam(static_cast<std::size_t>(n));
    for (index_t b = 0; b < ny; ++b)
        for (index_t a = 0; a < nx; ++a)
            lam[std::size_t(b * nx + a)] = spec.sigma2 * lx[a] * ly[b];
    std::vector<index_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), index_t(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](index_t p, index_t q) { return lam[std::size_t(p)] > lam[std::size_t(q)]; });

    kl_basis kl;
    kl.cumulative_energy.resize(std::size_t(n));
    double acc = 0;
    for (index_t k = 0; k < n; ++k) {
        acc += lam[std::size_t(order[std::size_t(k)])];
        kl.cumulative_energy[std::size_t(k)] = acc;
    }
    kl.total_energy = acc;
    for (auto& c : kl.cumulative_energy)
        c /= acc;

    index_t keep = 0;
    if (rule.kind == truncation_rule::mode::fixed_count) {
        detail::require(rule.count >= 0 && rule.count <= n, "kl: fixed count exceeds the number of modes");
        keep = rule.count;
    } else {
        detail::require(rule.fraction > 0 && rule.fraction <= 1, "kl: energy fraction must be in (0,1]");
        while (keep < n && kl.cumulative_energy[std::size_t(keep)] < rule.fraction - 1e-15)
            ++keep;
        keep = std::min(n, keep + 1);
    }

    kl.eigenvalues.resize(keep);
    kl.eigenfunctions.resize(n, keep);
    for (index_t k = 0; k < keep; ++k) {
        const index_t m = order[std::size_t(k)];
        const index_t a = m % nx, b = m / nx;
        kl.eigenvalues[k] = lam[std::size_t(m)];
        for (index_t j = 0; j < ny; ++j)
            for (index_t i = 0; i < nx; ++i)
                kl.eigenfunctions(g.cell_id(i, j), k) = vx(i, a) * vy(j, b);
    }
    kl.energy_fraction = keep > 0 ? kl.cumulative_energy[std::size_t(keep - 1)] : 0.0;
    return kl;
}

struct permeability_field
{
    vector_t values;

    double contrast() const { return values.maxCoeff() / values.minCoeff(); }
    double min() const { return values.minCoeff(); }
    double max() const { return values.maxCoeff(); }
    std::span<const double> span() const { return {values.data(), std::size_t(values.size())}; }
};

inline permeability_field
make_field(vector_t values)
{
    for (index_t c = 0; c < values.size(); ++c)
        if (!(values[c] > 0) || !std::isfinite(values[c]))
            throw config_error("field: values must be positive and finite");
    return {std::move(values)};
}

/// Name of the generator recorded in run metadata.
inline constexpr const char* rng_name = "std::mt19937_64 + std::normal_distribution<double>";

/// Standard normal coefficients mu_1..mu_n for a seed.
inline vector_t
kl_coefficients(index_t n, std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    vector_t mu(n);
    for (index_t i = 0; i < n; ++i)
        mu[i] = normal(gen);
    return mu;
}

/// Y = mean_log + sum_i mu_i sqrt(lambda_i) f_i, returned as exp(Y).
inline vector_t
sample_log_field(const kl_basis& kl, const vector_t& mean_log, std::uint64_t seed)
{
    detail::require(kl.size() == 0 || kl.eigenfunctions.rows() == mean_log.size(),
                    "sample: mean field size does not match KL basis");
    vector_t y = mean_log;
    if (kl.size() > 0) {
        const vector_t mu = kl_coefficients(kl.size(), seed);
        y.noalias() += kl.eigenfunctions * (mu.array() * kl.eigenvalues.array().sqrt()).matrix();
    }
    return y;
}

inline permeability_field
sample_field(const kl_basis& kl, const vector_t& mean_log, std::uint64_t seed)
{
    // std::exp rather than the vectorized Eigen exp: results do not depend on the SIMD path
    return {sample_log_field(kl, mean_log, seed).unaryExpr([](double y) { return std::exp(y); })};
}

inline permeability_field
load_field_raster(const std::string& path, const grid_hierarchy& g)
{
    std::ifstream in(path);
    if (!in)
        throw config_error("raster: cannot open '" + path + "'");
    std::vector<double> vals;
    vals.reserve(std::size_t(g.num_cells()));
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size())
                throw std::invalid_argument(tok);
            vals.push_back(v);
        } catch (const std::exception&) {
            throw config_error("raster: '" + path + "' holds a non-numeric entry '" + tok + "'");
        }
    }
    if (index_t(vals.size()) != g.num_cells()) {
        std::ostringstream os;
        os << "raster: '" << path << "' holds " << vals.size() << " values, grid needs " << g.num_cells();
        throw config_error(os.str());
    }
    for (std::size_t k = 0; k < vals.size(); ++k)
        if (!(vals[k] > 0) || !std::isfinite(vals[k]))
            throw config_error("raster: non-positive entry at position " + std::to_string(k));
    return {Eigen::Map<vector_t>(vals.data(), index_t(vals.size()))};
}

/// One row of Nx values per line, lowest y row first.
inline void
write_field_raster(const std::string& path, const grid_hierarchy& g, const vector_t& values)
{
    std::ofstream out(path);
    if (!out)
        throw config_error("raster: cannot write '" + path + "'");
    out << std::setprecision(17);
    for (index_t j = 0; j < g.ny(); ++j) {
        for (index_t i = 0; i < g.nx(); ++i)
            out << (i ? " " : "") << values[g.cell_id(i, j)];
        out << '\n';
    }
}

/// Straight band of cells whose centers lie within width/2 of the segment
/// (x0,y0)-(x1,y1), coordinates in cell units.
struct channel_segment
{
    double x0, y0, x1, y1;
    double width = 1.0;
};

struct channel_spec
{
    std::vector<channel_segment> channels;
    index_t inclusions = 0;     ///< number of random square inclusions
    index_t inclusion_size = 2; ///< side length in cells
    std::vector<index_t> filled_blocks; ///< coarse cells set to channel_value
};

inline permeability_field
synth_channel_field(const grid_hierarchy& g, double background, double channel_value,
                    const channel_spec& spec, std::uint64_t seed)
{
    detail::require(background > 0 && channel_value > 0, "synth: values must be positive");
    vector_t v = vector_t::Constant(g.num_cells(), background);
    const double nx = double(g.nx()), ny = double(g.ny());
    for (const auto& ch : spec.channels) {
        for (double c : {ch.x0, ch.x1})
            detail::require(c >= 0 && c <= nx, "synth: channel outside grid");
        for (double c : {ch.y0, ch.y1})
            detail::require(c >= 0 && c <= ny, "synth: channel outside grid");
        detail::require(ch.width > 0, "synth: channel width must be positive");
        const double dx = ch.x1 - ch.x0, dy = ch.y1 - ch.y0;
        const double len2 = dx * dx + dy * dy;
        for (index_t c = 0; c < g.num_cells(); ++c) {
            const auto [i, j] = g.cell_ij(c);
            const double px = double(i) + 0.5, py = double(j) + 0.5;
            double t = len2 > 0 ? ((px - ch.x0) * dx + (py - ch.y0) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double qx = ch.x0 + t * dx - px, qy = ch.y0 + t * dy - py;
            if (qx * qx + qy * qy <= 0.25 * ch.width * ch.width)
                v[c] = std::max(v[c], channel_value);
        }
    }
    if (spec.inclusions > 0) {
        const index_t s = spec.inclusion_size;
        detail::require(s >= 1 && s <= g.nx() && s <= g.ny(), "synth: inclusion larger than grid");
        std::mt19937_64 gen(seed);
        std::uniform_int_distribution<index_t> px(0, g.nx() - s), py(0, g.ny() - s);
        for (index_t k = 0; k < spec.inclusions; ++k) {
            const index_t i0 = px(gen), j0 = py(gen);
            for (index_t j = j0; j < j0 + s; ++j)
                for (index_t i = i0; i < i0 + s; ++i)
                    v[g.cell_id(i, j)] = std::max(v[g.cell_id(i, j)], channel_value);
        }
    }
    for (index_t k : spec.filled_blocks) {
        detail::require(k >= 0 && k < g.num_coarse_cells(), "synth: filled block outside coarse grid");
        for (index_t c : g.cells_in(g.coarse_cell_rect(k)))
            v[c] = channel_value;
    }
    return {std::move(v)};
}

} // namespace msflow
