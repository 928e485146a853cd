// msflow: train | solve | sweep | twophase | export, driven by a config file.

#include "msflow/export.hpp"
#include "msflow/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace msflow;
using json = nlohmann::json;

namespace {

using clock_type = std::chrono::steady_clock;

double
seconds_since(clock_type::time_point t0)
{
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct context
{
    std::string command;
    std::string config_path;
    run_config cfg;
    unsigned jobs = 1;
    std::optional<std::uint64_t> seed;
    fs::path out;
    json manifest;

    std::string output(const std::string& name)
    {
        const std::string p = (out / name).string();
        manifest["outputs"][name] = p;
        return p;
    }

    std::string archive_path(const std::string& suffix = "") const
    {
        fs::path p = cfg.basis.archive;
        if (p.is_relative())
            p = out / p;
        if (!suffix.empty())
            p.replace_filename(p.stem().string() + suffix + p.extension().string());
        return p.string();
    }

    void note_basis(const basis_handle& h)
    {
        manifest["basis"] = to_string(h.status);
        manifest["archive"] = {{"path", h.path}, {"sha256", sha256_file(h.path)}};
        manifest["stage_counts"] = h.space.stage_counts;
        manifest["basis_columns"] = h.space.size();
        if (h.t_train)
            manifest["timings"]["T_train"] = *h.t_train;
    }
};

std::string
twophase_key(const run_config& r)
{
    return training_key(r) + "basis.lifting = true\nfield.scale = total_mobility(0)\n";
}

void
run_train(context& c)
{
    const auto g = make_grid(c.cfg);
    const vector_t k = training_field(c.cfg, g);
    const auto f = make_source(c.cfg, g);
    const std::string path = c.archive_path();
    std::error_code ec;
    fs::remove(path, ec);
    basis_handle h = load_or_train(path, training_key(c.cfg), g, k, f, c.cfg, c.jobs);
    c.note_basis(h);
    write_eigenvalue_csv(c.output("eigenvalues.csv"), h.training->stage);
    write_residual_csv(c.output("residuals.csv"), h.training->reports);
    c.manifest["results"]["reduced_unknowns"] = ms_solver(g, h.space).num_unknowns();
    c.manifest["results"]["fine_unknowns"] = g.num_fine_unknowns();
}

void
run_solve(context& c)
{
    const auto g = make_grid(c.cfg);
    const vector_t k_train = training_field(c.cfg, g);
    const auto f_train = make_source(c.cfg, g);
    basis_handle h = load_or_train(c.archive_path(), training_key(c.cfg), g, k_train, f_train, c.cfg, c.jobs);
    c.note_basis(h);

    vector_t k = k_train;
    if (c.cfg.field.kind == field_kind::kl) {
        const std::uint64_t seed = c.seed.value_or(c.cfg.sweep.seed0);
        k = sample_field(make_kl(c.cfg, g), mean_log_field(c.cfg, g), seed).values;
        c.manifest["sample_seed"] = seed;
    }
    const auto f = make_test_source(c.cfg, g);

    auto t0 = clock_type::now();
    const ms_solver solver(g, h.space);
    const double t_setup = seconds_since(t0);
    t0 = clock_type::now();
    const flow_solution vm = solver.solve(k, f);
    const double t_test = seconds_since(t0);
    t0 = clock_type::now();
    fine_solver fsolve(g);
    fsolve.update(k);
    const flow_solution vf = fsolve.solve(f);
    const double t_fine = seconds_since(t0);

    const double ev = velocity_error(fsolve.A(), vf.velocity, vm.velocity);
    c.manifest["results"] = {{"e_v", ev},
                             {"e_v_rooted", std::sqrt(ev)},
                             {"reduced_unknowns", solver.num_unknowns()},
                             {"fine_unknowns", g.num_fine_unknowns()}};
    c.manifest["timings"]["T_setup"] = t_setup;
    c.manifest["timings"]["T_test"] = t_test;
    c.manifest["timings"]["T_fine"] = t_fine;

    if (c.cfg.wants("csv")) {
        write_edge_fluxes(c.output("velocity_fine.csv"), g, vf.velocity);
        write_edge_fluxes(c.output("velocity_ms.csv"), g, vm.velocity);
    }
    if (c.cfg.wants("vtk")) {
        const vector_t div_f = cell_divergence(g, vf.velocity), div_m = cell_divergence(g, vm.velocity);
        write_vtk_cells(c.output("solution.vtk"), g,
                        {{"pressure_fine", &vf.pressure},
                         {"pressure_ms", &vm.pressure},
                         {"divergence_fine", &div_f},
                         {"divergence_ms", &div_m},
                         {"permeability", &k}});
    }
}

void
run_sweep(context& c)
{
    if (c.cfg.sweep.n_samples < 1)
        throw config_error("empty sweep");
    if (c.cfg.field.kind != field_kind::kl)
        throw config_error(c.config_path + ": sweep needs field.kind = kl");
    const auto g = make_grid(c.cfg);
    const vector_t k_train = training_field(c.cfg, g);
    const auto f_train = make_source(c.cfg, g);
    basis_handle h = load_or_train(c.archive_path(), training_key(c.cfg), g, k_train, f_train, c.cfg, c.jobs);
    c.note_basis(h);

    const ms_solver solver(g, h.space);
    sweep_options opt;
    opt.n_samples = c.cfg.sweep.n_samples;
    opt.seed0 = c.seed.value_or(c.cfg.sweep.seed0);
    opt.jobs = c.jobs;
    opt.reference_field = &k_train;
    const auto t0 = clock_type::now();
    sweep_report rep = monte_carlo_sweep(g, make_kl(c.cfg, g), mean_log_field(c.cfg, g), solver,
                                         make_test_source(c.cfg, g), opt);
    c.manifest["timings"]["T_sweep"] = seconds_since(t0);
    rep.descriptor = std::to_string(h.space.stage_counts[0]) + "+" + std::to_string(h.space.stage_counts[1]);
    rep.t_train = h.t_train;
    write_sweep_csv(c.output("sweep.csv"), rep);
    c.manifest["results"] = {{"descriptor", rep.descriptor}, {"samples", rep.samples.size()}, {"failed", rep.failed()}};
    if (rep.failed() < index_t(rep.samples.size())) {
        c.manifest["results"]["mean_e_v"] = rep.mean();
        c.manifest["results"]["variance_e_v"] = rep.variance();
        c.manifest["results"]["mean_e_v_rooted"] = rep.mean(true);
        double tt = 0;
        for (const auto& s : rep.samples)
            tt += s.t_test;
        c.manifest["timings"]["T_test_mean"] = tt / double(rep.samples.size());
    } else {
        throw numerical_error("sweep: every sample failed (" + rep.samples.front().failure + ")");
    }
}

void
run_twophase(context& c)
{
    const auto g = make_grid(c.cfg);
    const vector_t kappa = training_field(c.cfg, g);
    const auto f = make_source(c.cfg, g);
    twophase_config tc = c.cfg.twophase;
    const bool dt_auto = tc.dt == 0 && tc.solver == pressure_solver::multiscale && c.cfg.twophase_compare_fine;
    if (dt_auto)
        tc.dt = safe_time_step(g, f, tc); // shared step so both runs report on the same times
    c.manifest["dt"] = tc.dt;

    impes_result ms_run, fine_run;
    const bool multiscale = tc.solver == pressure_solver::multiscale;
    if (multiscale) {
        const vector_t k0 = kappa * mobility(0.0, tc).total;
        const std::span<const double> ks(k0.data(), std::size_t(k0.size()));
        const vector_t lift = source_correction(g, ks, f);
        basis_handle h = load_or_train(c.archive_path(".twophase"), twophase_key(c.cfg), g, k0, f, c.cfg, c.jobs,
                                       &lift);
        c.note_basis(h);
        re_enrichment rb;
        rb.config.tau = c.cfg.basis.tau;
        rb.config.layers = c.cfg.basis.layers;
        rb.config.strategy = c.cfg.basis.strategy;
        rb.config.jobs = c.jobs;
        rb.sweeps = std::max<index_t>(1, c.cfg.basis.B);
        rb.offline_count = c.cfg.twophase_rebuild == "full" ? c.cfg.basis.A : 0;
        const auto t0 = clock_type::now();
        ms_run = impes_run(g, kappa, f, tc, &h.space, &rb);
        c.manifest["timings"]["T_multiscale"] = seconds_since(t0);
        c.manifest["results"]["re_enrichments"] = ms_run.re_enrichments;
    }
    if (!multiscale || c.cfg.twophase_compare_fine) {
        twophase_config fc = tc;
        fc.solver = pressure_solver::fine;
        const auto t0 = clock_type::now();
        fine_run = impes_run(g, kappa, f, fc);
        c.manifest["timings"]["T_fine"] = seconds_since(t0);
    }
    const impes_result& primary = multiscale ? ms_run : fine_run;
    c.manifest["results"]["steps"] = primary.steps;
    c.manifest["results"]["pressure_solves"] = primary.pressure_solves;
    c.manifest["results"]["water_injected"] = primary.water_injected;
    c.manifest["results"]["water_produced"] = primary.water_produced;
    c.manifest["results"]["final_water_cut"] = primary.water_cut.empty() ? 0.0 : primary.water_cut.back();

    std::vector<std::pair<std::string, const std::vector<double>*>> series;
    if (!fine_run.times.empty())
        series.emplace_back("water_cut_fine", &fine_run.water_cut);
    if (!ms_run.times.empty())
        series.emplace_back("water_cut_ms", &ms_run.water_cut);
    const bool both = multiscale && c.cfg.twophase_compare_fine;
    if (both) {
        double diff = 0;
        for (std::size_t k = 0; k < ms_run.water_cut.size(); ++k)
            diff = std::max(diff, std::abs(ms_run.water_cut[k] - fine_run.water_cut[k]));
        c.manifest["results"]["max_water_cut_difference"] = diff;
    }
    if (c.cfg.wants("csv"))
        write_water_cut_csv(c.output("water_cut.csv"), primary.times, series);

    json shots = json::array();
    for (std::size_t s = 0; s < primary.snapshots.size(); ++s) {
        const auto& sp = primary.snapshots[s];
        json row = {{"time", sp.time}};
        std::vector<std::pair<std::string, const vector_t*>> fields{{"saturation", &sp.values}};
        if (both) {
            fields = {{"saturation_ms", &ms_run.snapshots[s].values}, {"saturation_fine", &fine_run.snapshots[s].values}};
            row["e_s"] = saturation_error(g, fine_run.snapshots[s].values, ms_run.snapshots[s].values);
        }
        if (c.cfg.wants("vtk")) {
            std::ostringstream name;
            name << "saturation_" << std::setw(4) << std::setfill('0') << s << ".vtk";
            write_vtk_cells(c.output(name.str()), g, fields, "saturation t=" + std::to_string(sp.time));
        }
        shots.push_back(row);
    }
    c.manifest["results"]["snapshots"] = shots;
}

void
run_export(context& c)
{
    const auto g = make_grid(c.cfg);
    const vector_t k = training_field(c.cfg, g);
    const auto f = make_source(c.cfg, g);
    const vector_t logk = k.array().log10();
    write_vtk_cells(c.output("field.vtk"), g, {{"permeability", &k}, {"log10_permeability", &logk}, {"source", &f.values}});
    c.manifest["results"]["contrast"] = k.maxCoeff() / k.minCoeff();
    const std::string path = c.archive_path();
    if (fs::exists(path)) {
        const basis_archive a = read_archive(path);
        auto out = detail::open_output(c.output("basis_columns.csv"));
        out << "column,owner_edge,stage,nnz,l2_norm\n";
        for (index_t j = 0; j < a.space.size(); ++j) {
            const vector_t col = a.space.U.col(j);
            out << j << ',' << a.space.owner[std::size_t(j)] << ',' << int(a.space.stage[std::size_t(j)]) << ','
                << a.space.U.col(j).nonZeros() << ',' << col.norm() << '\n';
        }
        c.manifest["archive"] = {{"path", path}, {"sha256", sha256_file(path)}, {"stale", a.training != training_key(c.cfg)}};
    }
}

} // namespace

int
main(int argc, char** argv)
{
    CLI::App app{"multiscale mixed finite-element Darcy flow"};
    app.require_subcommand(1, 1);
    std::string config_path;
    unsigned jobs = 0;
    std::optional<std::uint64_t> seed;
    for (const char* name : {"train", "solve", "sweep", "twophase", "export"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "run configuration")->required();
        sub->add_option("--jobs", jobs, "worker threads (0: all cores)");
        sub->add_option("--seed", seed, "sample seed / first sweep seed");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "msflow: " << e.what() << "\n";
        return 2;
    }

    context c;
    c.command = app.get_subcommands().front()->get_name();
    c.config_path = config_path;
    c.jobs = jobs == 0 ? default_jobs() : jobs;
    c.seed = seed;
    const auto t0 = clock_type::now();
    try {
        c.cfg = parse_config(config_path);
        if (const char* env = std::getenv("MSFLOW_OUTPUT"); env && *env)
            c.cfg.output.directory = env;
        c.out = c.cfg.output.directory;
        fs::create_directories(c.out);
        {
            auto echo = detail::open_output((c.out / "effective.cfg").string());
            echo << effective_config(c.cfg);
        }
        c.manifest["command"] = c.command;
        c.manifest["config"] = {{"path", config_path}, {"sha256", sha256_file(config_path)}};
        c.manifest["effective_config_sha256"] = sha256_file((c.out / "effective.cfg").string());
        c.manifest["jobs"] = c.jobs;
        c.manifest["rng"] = rng_name;
        if (seed)
            c.manifest["seed"] = *seed;

        if (c.command == "train")
            run_train(c);
        else if (c.command == "solve")
            run_solve(c);
        else if (c.command == "sweep")
            run_sweep(c);
        else if (c.command == "twophase")
            run_twophase(c);
        else
            run_export(c);

        json outputs = json::object();
        for (const auto& [name, p] : c.manifest["outputs"].items())
            outputs[name] = {{"path", p}, {"sha256", sha256_file(p.get<std::string>())}};
        c.manifest["outputs"] = outputs;
        c.manifest["timings"]["T_total"] = seconds_since(t0);
        auto m = detail::open_output((c.out / ("manifest_" + c.command + ".json")).string());
        m << c.manifest.dump(2) << "\n";
    } catch (const config_error& e) {
        std::cerr << "msflow " << c.command << ": " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "msflow " << c.command << ": numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "msflow " << c.command << ": " << e.what() << "\n";
        return 3;
    }
    return 0;
}
