#pragma once

// Run configuration: line-oriented `section.key = value` text with `#`
// comments.  Every key is tracked with its line so that errors can point at
// the source.

#include "msflow/enrichment.hpp"
#include "msflow/twophase.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace msflow {

class config_file
{
public:
    struct entry
    {
        std::string value;
        int line = 0;
    };

    static config_file parse(std::istream& in, const std::string& name)
    {
        config_file c;
        c.name_ = name;
        std::string raw;
        int line = 0;
        while (std::getline(in, raw)) {
            ++line;
            if (const auto hash = raw.find('#'); hash != std::string::npos)
                raw.erase(hash);
            const std::string text = trim(raw);
            if (text.empty())
                continue;
            const auto eq = text.find('=');
            if (eq == std::string::npos)
                throw config_error(c.where(line) + "expected 'section.key = value'");
            const std::string key = trim(text.substr(0, eq));
            const std::string value = trim(text.substr(eq + 1));
            const auto dot = key.find('.');
            if (dot == std::string::npos || dot == 0 || dot + 1 == key.size() ||
                key.find_first_of(" \t") != std::string::npos)
                throw config_error(c.where(line) + "key '" + key + "' is not of the form section.key");
            if (value.empty())
                throw config_error(c.where(line) + "key '" + key + "' has no value");
            if (const auto it = c.entries_.find(key); it != c.entries_.end())
                throw config_error(c.where(line) + "duplicate key '" + key + "' (first set on line " +
                                   std::to_string(it->second.line) + ")");
            c.entries_[key] = {value, line};
        }
        return c;
    }

    static config_file load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
            throw config_error("config: cannot open '" + path + "'");
        return parse(in, path);
    }

    static config_file from_string(const std::string& text, const std::string& name = "<string>")
    {
        std::istringstream in(text);
        return parse(in, name);
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    const std::map<std::string, entry>& entries() const { return entries_; }
    const std::string& name() const { return name_; }

    std::string where(int line) const { return name_ + ":" + std::to_string(line) + ": "; }

    /// Location prefix of a key, or of the file when the key is absent.
    std::string where(const std::string& key) const
    {
        const auto it = entries_.find(key);
        return it == entries_.end() ? name_ + ": " : where(it->second.line);
    }

    void require(const std::string& key) const
    {
        if (!has(key))
            throw config_error(name_ + ": missing required key '" + key + "'");
    }

    std::string text(const std::string& key, const std::string& fallback) const
    {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second.value;
    }

    double real(const std::string& key, double fallback) const
    {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : to_real(key, it->second.value, it->second.line);
    }

    index_t integer(const std::string& key, index_t fallback) const
    {
        const auto it = entries_.find(key);
        return it == entries_.end() ? fallback : to_integer(key, it->second.value, it->second.line);
    }

    bool boolean(const std::string& key, bool fallback) const
    {
        const auto it = entries_.find(key);
        if (it == entries_.end())
            return fallback;
        const std::string& v = it->second.value;
        if (v == "true" || v == "yes" || v == "1")
            return true;
        if (v == "false" || v == "no" || v == "0")
            return false;
        throw config_error(where(it->second.line) + key + " expects true or false, got '" + v + "'");
    }

    std::vector<double> reals(const std::string& key, std::vector<double> fallback = {}) const
    {
        const auto it = entries_.find(key);
        if (it == entries_.end())
            return fallback;
        std::vector<double> out;
        for (const auto& tok : split(it->second.value))
            out.push_back(to_real(key, tok, it->second.line));
        return out;
    }

    std::vector<index_t> integers(const std::string& key, std::vector<index_t> fallback = {}) const
    {
        const auto it = entries_.find(key);
        if (it == entries_.end())
            return fallback;
        std::vector<index_t> out;
        for (const auto& tok : split(it->second.value))
            out.push_back(to_integer(key, tok, it->second.line));
        return out;
    }

    std::string choice(const std::string& key, const std::string& fallback,
                       std::initializer_list<const char*> allowed) const
    {
        const std::string v = text(key, fallback);
        for (const char* a : allowed)
            if (v == a)
                return v;
        std::string list;
        for (const char* a : allowed)
            list += (list.empty() ? "" : " | ") + std::string(a);
        throw config_error(where(key) + key + " must be one of " + list + ", got '" + v + "'");
    }

    /// Throws on the first key (by line) not in `known`.
    void reject_unknown(const std::set<std::string>& known) const
    {
        const entry* bad = nullptr;
        std::string bad_key;
        for (const auto& [k, e] : entries_)
            if (!known.count(k) && (!bad || e.line < bad->line)) {
                bad = &e;
                bad_key = k;
            }
        if (bad)
            throw config_error(where(bad->line) + "unknown key '" + bad_key + "'");
    }

private:
    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos)
            return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    /// Whitespace- or comma-separated tokens.
    static std::vector<std::string> split(const std::string& s)
    {
        std::vector<std::string> out;
        std::string cur;
        for (char ch : s) {
            if (ch == ',' || ch == ' ' || ch == '\t') {
                if (!cur.empty())
                    out.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        if (!cur.empty())
            out.push_back(cur);
        return out;
    }

    double to_real(const std::string& key, const std::string& v, int line) const
    {
        double x = 0;
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x))
            throw config_error(where(line) + key + " expects a number, got '" + v + "'");
        return x;
    }

    index_t to_integer(const std::string& key, const std::string& v, int line) const
    {
        long long x = 0;
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || p != v.data() + v.size())
            throw config_error(where(line) + key + " expects an integer, got '" + v + "'");
        return index_t(x);
    }

    std::string name_;
    std::map<std::string, entry> entries_;
};

// ---------------------------------------------------------------------------

enum class field_kind : std::uint8_t { synthetic, kl, raster };

struct run_config
{
    struct
    {
        std::array<double, 2> extent{1.0, 1.0};
        std::array<index_t, 2> fine{0, 0};
        std::array<index_t, 2> coarse{0, 0};
    } grid;

    struct
    {
        field_kind kind = field_kind::synthetic;
        std::string path;             ///< raster file
        double background = 1e-4;     ///< synthetic
        double channel_value = 1.0;   ///< synthetic
        std::uint64_t seed = 7;       ///< synthetic inclusions
        double sigma2 = 0.3;          ///< kl
        double eta1 = 0.125, eta2 = 0.125;
        index_t modes = 0;            ///< kl fixed count; 0 selects the energy rule
        double energy = 0.95;
        std::string mean = "synthetic"; ///< kl mean-log source: synthetic | raster | uniform
        double mean_value = 1.0;      ///< uniform mean permeability
    } field;

    struct
    {
        index_t A = 2;
        index_t B = 1;
        double tau = 1e-3;
        index_t layers = 1;
        partition_strategy strategy = partition_strategy::alternating;
        std::string archive = "basis.msb";
    } basis;

    struct
    {
        source_kind kind = source_kind::two_point;
        std::vector<std::pair<index_t, double>> custom; ///< (cell, value)
        std::string test = "";  ///< sweep test source, empty = same
    } source;

    twophase_config twophase;
    std::string twophase_rebuild = "full"; ///< full | extend
    bool twophase_compare_fine = true;

    struct
    {
        index_t n_samples = 100;
        std::uint64_t seed0 = 0;
    } sweep;

    struct
    {
        std::string directory = "output";
        std::vector<std::string> formats{"csv", "vtk"};
    } output;

    bool wants(const std::string& format) const
    {
        return std::find(output.formats.begin(), output.formats.end(), format) != output.formats.end();
    }
};

inline const std::set<std::string>&
known_config_keys()
{
    static const std::set<std::string> keys = {
        "grid.extent",        "grid.fine",         "grid.coarse",
        "field.kind",         "field.path",        "field.background",
        "field.channel_value", "field.seed",       "field.sigma2",
        "field.eta",          "field.eta1",        "field.eta2",
        "field.modes",        "field.energy",      "field.mean",
        "field.mean_value",   "basis.A",           "basis.B",
        "basis.tau",          "basis.layers",      "basis.strategy",
        "basis.archive",      "source.kind",       "source.custom",
        "source.test",        "twophase.mu_w",     "twophase.mu_o",
        "twophase.t_end",     "twophase.dt",       "twophase.cfl",
        "twophase.solver",    "twophase.re_enrich_times", "twophase.rebuild",
        "twophase.pressure_every", "twophase.record_every", "twophase.snapshot_times",
        "twophase.compare_fine", "sweep.n_samples", "sweep.seed0",
        "output.directory",   "output.formats",
    };
    return keys;
}

inline source_kind
parse_source_kind(const config_file& c, const std::string& key, const std::string& fallback)
{
    const std::string v = c.choice(key, fallback, {"two_point", "five_point", "custom"});
    return v == "two_point" ? source_kind::two_point : v == "five_point" ? source_kind::five_point : source_kind::custom;
}

inline run_config
parse_config(const config_file& c)
{
    c.reject_unknown(known_config_keys());
    run_config r;

    for (const char* k : {"grid.fine", "grid.coarse", "field.kind", "source.kind"})
        c.require(k);
    auto pair_of = [&](const std::string& key, auto fallback) {
        using T = typename decltype(fallback)::value_type;
        std::vector<T> v;
        if constexpr (std::is_same_v<T, double>)
            v = c.reals(key, {fallback[0], fallback[1]});
        else
            v = c.integers(key, {fallback[0], fallback[1]});
        if (v.size() == 1)
            v.push_back(v[0]);
        if (v.size() != 2)
            throw config_error(c.where(key) + key + " expects one or two values");
        return std::array<T, 2>{v[0], v[1]};
    };
    r.grid.extent = pair_of("grid.extent", r.grid.extent);
    r.grid.fine = pair_of("grid.fine", r.grid.fine);
    r.grid.coarse = pair_of("grid.coarse", r.grid.coarse);
    for (int d = 0; d < 2; ++d) {
        if (!(r.grid.extent[d] > 0))
            throw config_error(c.where("grid.extent") + "grid.extent must be positive");
        if (r.grid.coarse[d] < 1 || r.grid.fine[d] < r.grid.coarse[d] || r.grid.fine[d] % r.grid.coarse[d] != 0)
            throw config_error(c.where("grid.fine") + "grid.fine must be a positive multiple of grid.coarse");
    }

    const std::string kind = c.choice("field.kind", "synthetic", {"synthetic", "kl", "raster"});
    r.field.kind = kind == "synthetic" ? field_kind::synthetic : kind == "kl" ? field_kind::kl : field_kind::raster;
    r.field.path = c.text("field.path", "");
    r.field.background = c.real("field.background", r.field.background);
    r.field.channel_value = c.real("field.channel_value", r.field.channel_value);
    r.field.seed = std::uint64_t(c.integer("field.seed", index_t(r.field.seed)));
    r.field.sigma2 = c.real("field.sigma2", r.field.sigma2);
    const double eta = c.real("field.eta", r.field.eta1);
    r.field.eta1 = c.real("field.eta1", eta);
    r.field.eta2 = c.real("field.eta2", eta);
    r.field.modes = c.integer("field.modes", r.field.modes);
    r.field.energy = c.real("field.energy", r.field.energy);
    r.field.mean = c.choice("field.mean", r.field.mean, {"synthetic", "raster", "uniform"});
    r.field.mean_value = c.real("field.mean_value", r.field.mean_value);
    const bool needs_raster = r.field.kind == field_kind::raster ||
                              (r.field.kind == field_kind::kl && r.field.mean == "raster");
    if (needs_raster) {
        c.require("field.path");
        if (!std::filesystem::exists(r.field.path))
            throw config_error(c.where("field.path") + "field.path '" + r.field.path + "' does not exist");
    }
    if (!(r.field.background > 0) || !(r.field.channel_value > 0))
        throw config_error(c.where("field.background") + "synthetic field values must be positive");
    if (!(r.field.sigma2 > 0) || !(r.field.eta1 > 0) || !(r.field.eta2 > 0))
        throw config_error(c.where("field.sigma2") + "field.sigma2 and field.eta must be positive");
    if (r.field.modes < 0 || r.field.modes > r.grid.fine[0] * r.grid.fine[1])
        throw config_error(c.where("field.modes") + "field.modes must be in [0, number of fine cells]");
    if (!(r.field.energy > 0 && r.field.energy <= 1))
        throw config_error(c.where("field.energy") + "field.energy must be in (0,1]");
    if (!(r.field.mean_value > 0))
        throw config_error(c.where("field.mean_value") + "field.mean_value must be positive");

    r.basis.A = c.integer("basis.A", r.basis.A);
    r.basis.B = c.integer("basis.B", r.basis.B);
    r.basis.tau = c.real("basis.tau", r.basis.tau);
    r.basis.layers = c.integer("basis.layers", r.basis.layers);
    r.basis.strategy = c.choice("basis.strategy", "alternating", {"alternating", "all_edges"}) == "all_edges"
                           ? partition_strategy::all_edges
                           : partition_strategy::alternating;
    r.basis.archive = c.text("basis.archive", r.basis.archive);
    // L_i is the number of fine edges on a coarse edge.
    const index_t L = std::min(r.grid.fine[0] / r.grid.coarse[0], r.grid.fine[1] / r.grid.coarse[1]);
    if (r.basis.A < 1 || r.basis.A > L)
        throw config_error(c.where("basis.A") + "basis.A must be in [1, " + std::to_string(L) + "]");
    if (r.basis.B < 0)
        throw config_error(c.where("basis.B") + "basis.B must be >= 0");
    if (!(r.basis.tau >= 0))
        throw config_error(c.where("basis.tau") + "basis.tau must be >= 0");
    if (r.basis.layers < 1)
        throw config_error(c.where("basis.layers") + "basis.layers must be >= 1");

    r.source.kind = parse_source_kind(c, "source.kind", "two_point");
    if (r.source.kind == source_kind::custom) {
        c.require("source.custom");
        const auto v = c.reals("source.custom");
        if (v.empty() || v.size() % 3 != 0)
            throw config_error(c.where("source.custom") + "source.custom expects triples 'i j value'");
        for (std::size_t k = 0; k < v.size(); k += 3) {
            const index_t i = index_t(v[k]), j = index_t(v[k + 1]);
            if (double(i) != v[k] || double(j) != v[k + 1] || i < 0 || j < 0 || i >= r.grid.fine[0] ||
                j >= r.grid.fine[1])
                throw config_error(c.where("source.custom") + "source.custom cell indices must be in the grid");
            r.source.custom.emplace_back(j * r.grid.fine[0] + i, v[k + 2]);
        }
    }
    if (c.has("source.test")) {
        r.source.test = c.choice("source.test", "", {"two_point", "five_point"});
    }

    auto& t = r.twophase;
    t.mu_w = c.real("twophase.mu_w", t.mu_w);
    t.mu_o = c.real("twophase.mu_o", t.mu_o);
    t.t_end = c.real("twophase.t_end", t.t_end);
    t.dt = c.real("twophase.dt", t.dt);
    t.cfl_target = c.real("twophase.cfl", t.cfl_target);
    t.solver = c.choice("twophase.solver", "multiscale", {"fine", "multiscale"}) == "fine" ? pressure_solver::fine
                                                                                          : pressure_solver::multiscale;
    t.re_enrich_times = c.reals("twophase.re_enrich_times");
    t.pressure_every = c.integer("twophase.pressure_every", t.pressure_every);
    t.record_every = c.integer("twophase.record_every", t.record_every);
    t.snapshot_times = c.reals("twophase.snapshot_times");
    r.twophase_rebuild = c.choice("twophase.rebuild", r.twophase_rebuild, {"full", "extend"});
    r.twophase_compare_fine = c.boolean("twophase.compare_fine", r.twophase_compare_fine);
    try {
        t.validate();
    } catch (const config_error& e) {
        throw config_error(c.name() + ": " + e.what());
    }

    r.sweep.n_samples = c.integer("sweep.n_samples", r.sweep.n_samples);
    r.sweep.seed0 = std::uint64_t(c.integer("sweep.seed0", index_t(r.sweep.seed0)));

    r.output.directory = c.text("output.directory", r.output.directory);
    if (c.has("output.formats")) {
        std::istringstream in(c.text("output.formats", ""));
        r.output.formats.clear();
        for (std::string f; in >> f;) {
            if (!f.empty() && f.back() == ',')
                f.pop_back();
            if (f != "csv" && f != "vtk")
                throw config_error(c.where("output.formats") + "output.formats accepts csv and vtk, got '" + f + "'");
            r.output.formats.push_back(f);
        }
    }
    return r;
}

inline run_config
parse_config(const std::string& path)
{
    return parse_config(config_file::load(path));
}

inline std::string
to_string(partition_strategy s)
{
    return s == partition_strategy::all_edges ? "all_edges" : "alternating";
}

inline std::string
to_string(source_kind k)
{
    return k == source_kind::two_point ? "two_point" : k == source_kind::five_point ? "five_point" : "custom";
}

inline std::string
to_string(field_kind k)
{
    return k == field_kind::synthetic ? "synthetic" : k == field_kind::kl ? "kl" : "raster";
}

namespace detail {

inline std::string
join(const std::vector<double>& v)
{
    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t i = 0; i < v.size(); ++i)
        os << (i ? " " : "") << v[i];
    return os.str();
}

} // namespace detail

/// Everything that determines the trained basis, one `key = value` per line.
inline std::string
training_key(const run_config& r)
{
    std::ostringstream os;
    os << std::setprecision(17);
    os << "grid.extent = " << r.grid.extent[0] << " " << r.grid.extent[1] << "\n"
       << "grid.fine = " << r.grid.fine[0] << " " << r.grid.fine[1] << "\n"
       << "grid.coarse = " << r.grid.coarse[0] << " " << r.grid.coarse[1] << "\n"
       << "field.kind = " << to_string(r.field.kind) << "\n";
    if (r.field.kind == field_kind::raster || (r.field.kind == field_kind::kl && r.field.mean == "raster"))
        os << "field.path = " << r.field.path << "\n";
    if (r.field.kind == field_kind::synthetic || (r.field.kind == field_kind::kl && r.field.mean == "synthetic"))
        os << "field.background = " << r.field.background << "\n"
           << "field.channel_value = " << r.field.channel_value << "\n"
           << "field.seed = " << r.field.seed << "\n";
    if (r.field.kind == field_kind::kl) {
        os << "field.mean = " << r.field.mean << "\n";
        if (r.field.mean == "uniform")
            os << "field.mean_value = " << r.field.mean_value << "\n";
    }
    os << "basis.A = " << r.basis.A << "\n"
       << "basis.B = " << r.basis.B << "\n"
       << "basis.tau = " << r.basis.tau << "\n"
       << "basis.layers = " << r.basis.layers << "\n"
       << "basis.strategy = " << to_string(r.basis.strategy) << "\n"
       << "source.kind = " << to_string(r.source.kind) << "\n";
    if (r.source.kind == source_kind::custom)
        for (const auto& [cell, v] : r.source.custom)
            os << "source.custom = " << cell << " " << v << "\n";
    return os.str();
}

/// The effective configuration with defaults applied.
inline std::string
effective_config(const run_config& r)
{
    std::ostringstream os;
    os << std::setprecision(17) << training_key(r);
    if (r.field.kind == field_kind::kl)
        os << "field.sigma2 = " << r.field.sigma2 << "\n"
           << "field.eta1 = " << r.field.eta1 << "\n"
           << "field.eta2 = " << r.field.eta2 << "\n"
           << "field.modes = " << r.field.modes << "\n"
           << "field.energy = " << r.field.energy << "\n";
    if (!r.source.test.empty())
        os << "source.test = " << r.source.test << "\n";
    const auto& t = r.twophase;
    if (!t.re_enrich_times.empty())
        os << "twophase.re_enrich_times = " << detail::join(t.re_enrich_times) << "\n";
    if (!t.snapshot_times.empty())
        os << "twophase.snapshot_times = " << detail::join(t.snapshot_times) << "\n";
    os << "twophase.mu_w = " << t.mu_w << "\n"
       << "twophase.mu_o = " << t.mu_o << "\n"
       << "twophase.t_end = " << t.t_end << "\n"
       << "twophase.dt = " << t.dt << "\n"
       << "twophase.cfl = " << t.cfl_target << "\n"
       << "twophase.solver = " << (t.solver == pressure_solver::fine ? "fine" : "multiscale") << "\n"
       << "twophase.rebuild = " << r.twophase_rebuild << "\n"
       << "twophase.pressure_every = " << t.pressure_every << "\n"
       << "twophase.record_every = " << t.record_every << "\n"
       << "twophase.compare_fine = " << (r.twophase_compare_fine ? "true" : "false") << "\n"
       << "sweep.n_samples = " << r.sweep.n_samples << "\n"
       << "sweep.seed0 = " << r.sweep.seed0 << "\n"
       << "output.directory = " << r.output.directory << "\n"
       << "output.formats =";
    for (const auto& f : r.output.formats)
        os << " " << f;
    os << "\n";
    return os.str();
}

} // namespace msflow
