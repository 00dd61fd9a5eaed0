#include "lsrf/dispatch.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <set>

#include "lsrf/backfit.hpp"
#include "lsrf/csvio.hpp"
#include "lsrf/estimators.hpp"
#include "lsrf/levy.hpp"

namespace lsrf {

namespace {

namespace fs = std::filesystem;

struct run_context {
    const run_config& cfg;
    std::string out_dir;
    std::string digest;
    int threads = 1;
    std::vector<std::string> written;

    std::string path(const std::string& name) {
        written.push_back((fs::path(out_dir) / name).string());
        return written.back();
    }
};

csv_preamble preamble_for(const run_context& ctx, const std::vector<uint64_t>& seeds) {
    return report_preamble(ctx.digest, seeds);
}

site_set load_or_draw_sites(run_context& ctx) {
    fs::path sites_path = fs::path(ctx.out_dir) / "sites.csv";
    if (fs::exists(sites_path)) return read_sites_csv(sites_path.string());
    return draw_sites(to_sampling_design(ctx.cfg), ctx.threads);
}

void run_sample(run_context& ctx) {
    site_set sites = draw_sites(to_sampling_design(ctx.cfg), ctx.threads);
    write_sites_csv(ctx.path("sites.csv"), sites, preamble_for(ctx, {ctx.cfg.seed}));

    regime_report regime = classify_regime(ctx.cfg.sampling.n, sites.A_n, sites.d,
                                           ctx.cfg.sampling.kappa_max);
    std::string summary = "sites " + std::to_string(sites.n()) + " region " +
                          format17(sites.A_n) + "\nintensity " + format17(regime.ratio) +
                          " threshold " + format17(regime.threshold) + " regime " +
                          (regime.pure ? "pure-increasing-domain" : "mixed") + "\n";
    write_text_file(ctx.path("summary.txt"), summary);
}

void run_simulate(run_context& ctx) {
    experiment_config ecfg = to_experiment_config(ctx.cfg);
    if (ecfg.schedule.empty())
        ecfg.schedule.emplace_back(ctx.cfg.sampling.n, ctx.cfg.sampling.region_size());
    site_set sites = load_or_draw_sites(ctx);
    double a_n = sites.A_n;
    dataset data = generate_scenario(ecfg, std::move(sites), ctx.cfg.seed, ctx.threads);
    write_dataset_csv(ctx.path("data.csv"), data, preamble_for(ctx, {ctx.cfg.seed}));

    if (ecfg.kind == scenario_kind::levy_field && ctx.cfg.field.save_masses) {
        // the same grid and mass stream generate_scenario used
        double c0 = ecfg.field_kernel.c0();
        double delta = ecfg.field_delta > 0.0 ? ecfg.field_delta : default_cell_width(c0);
        cell_grid grid = make_field_grid(a_n, ecfg.d, c0, delta);
        std::vector<double> masses =
            sample_levy_masses(grid, ecfg.field_measure, ctx.cfg.seed, 3, ctx.threads);
        mass_grid_spec spec;
        spec.region = grid.region();
        spec.delta = delta;
        spec.fields = 1;
        spec.seed = ctx.cfg.seed;
        write_mass_grid(ctx.path("masses.bin"), spec, {masses});
    }
}

void run_fit(run_context& ctx) {
    dataset data = read_dataset_csv((fs::path(ctx.out_dir) / "data.csv").string());
    kernel_spec ks = to_kernel_spec(ctx.cfg);
    int d = data.sites.d;
    int p = data.p;
    double h = config_bandwidth(ctx.cfg, data.n(), d + p);

    std::vector<double> x_lo = ctx.cfg.estimator.x_lo;
    std::vector<double> x_hi = ctx.cfg.estimator.x_hi;
    if (x_lo.empty()) {
        x_lo.assign(static_cast<size_t>(p), 0.0);
        x_hi.assign(static_cast<size_t>(p), 1.0);
    }
    eval_grid grid = make_eval_grid(d, p, h, ks.support(), ctx.cfg.estimator.u_points, x_lo,
                                    x_hi, ctx.cfg.estimator.x_points);

    estimate_field est;
    if (ctx.cfg.estimator.target == "density")
        est = density_estimate(data, ks, h, grid, ctx.threads);
    else
        est = nw_regression(data, ks, h, grid, ctx.cfg.estimator.denom_floor, ctx.threads);

    csv_preamble pre = preamble_for(ctx, {ctx.cfg.seed});
    pre.emplace_back("h", format17(h));
    pre.emplace_back("target", ctx.cfg.estimator.target);
    write_estimates_csv(ctx.path("estimates.csv"), est, pre);
}

void run_backfit(run_context& ctx) {
    dataset data = read_dataset_csv((fs::path(ctx.out_dir) / "data.csv").string());
    kernel_spec ks = to_kernel_spec(ctx.cfg);
    int d = data.sites.d;
    double h = config_bandwidth(ctx.cfg, data.n(), d + 1);

    std::vector<double> u_star(ctx.cfg.estimator.eval_u.begin(),
                               ctx.cfg.estimator.eval_u.end());
    if (u_star.empty()) u_star.assign(static_cast<size_t>(d), 0.5);
    u_star.resize(static_cast<size_t>(d), 0.5);

    pilot_estimates pilots =
        compute_pilots(data, ks, h, u_star, make_unit_grid(ctx.cfg.estimator.grid_points),
                       ctx.cfg.estimator.denom_floor, ctx.threads);
    backfit_options opt;
    opt.tol = ctx.cfg.estimator.tol;
    opt.max_iter = ctx.cfg.estimator.max_iter;
    additive_model fit = smooth_backfit(pilots, opt);
    if (!fit.converged)
        throw scenario_error("backfit did not converge within " +
                             std::to_string(opt.max_iter) + " sweeps");

    csv_preamble pre = preamble_for(ctx, {ctx.cfg.seed});
    pre.emplace_back("h", format17(h));
    write_additive_csv(ctx.path("additive.csv"), fit, pilots.x_grid, pre);
}

void require_schedule(const run_config& cfg) {
    if (cfg.experiment.schedule_n.empty())
        throw validation_error(
            {"experiment.schedule_n: experiments need at least one schedule entry"});
}

void run_experiment_rate(run_context& ctx) {
    require_schedule(ctx.cfg);
    experiment_config ecfg = to_experiment_config(ctx.cfg);
    ecfg.threads = ctx.threads;
    rate_report rep = run_rate_experiment(ecfg);
    write_rate_csv(ctx.path("report.csv"), rep, preamble_for(ctx, rep.seeds));
    write_text_file(ctx.path("summary.txt"), rate_summary(rep));
}

void run_experiment_clt(run_context& ctx) {
    require_schedule(ctx.cfg);
    experiment_config ecfg = to_experiment_config(ctx.cfg);
    ecfg.threads = ctx.threads;
    clt_report rep = run_clt_experiment(ecfg);
    write_clt_csv(ctx.path("report.csv"), rep, preamble_for(ctx, rep.seeds));
    write_text_file(ctx.path("summary.txt"), clt_summary(rep));
}

void run_experiment_additive(run_context& ctx) {
    require_schedule(ctx.cfg);
    experiment_config ecfg = to_experiment_config(ctx.cfg);
    ecfg.threads = ctx.threads;
    additive_report rep = run_additive_experiment(ecfg);
    write_additive_report_csv(ctx.path("report.csv"), rep, preamble_for(ctx, rep.rate.seeds));
    write_text_file(ctx.path("summary.txt"), additive_summary(rep));
}

void run_experiment_mn_dep(run_context& ctx) {
    require_schedule(ctx.cfg);
    experiment_config ecfg = to_experiment_config(ctx.cfg);
    ecfg.threads = ctx.threads;
    decay_report rep = run_mn_dependence_experiment(ecfg);
    write_decay_csv(ctx.path("report.csv"), rep, preamble_for(ctx, rep.seeds));
    write_text_file(ctx.path("summary.txt"), decay_summary(rep));
}

void run_ci(run_context& ctx) {
    experiment_config ecfg = to_experiment_config(ctx.cfg);
    ecfg.threads = ctx.threads;
    if (ecfg.schedule.empty())
        ecfg.schedule.emplace_back(ctx.cfg.sampling.n, ctx.cfg.sampling.region_size());
    if (ecfg.eval_count() == 0)
        throw validation_error({"estimator.eval_u: ci needs at least one evaluation point"});

    int64_t n = ecfg.schedule.back().first;
    double a_n = ecfg.schedule.back().second;
    double h = experiment_bandwidth(ecfg, n, ecfg.d + ecfg.p);
    int points = ecfg.eval_count();

    // bands from one data set at the last schedule entry
    model_spec model = scenario_model(ecfg);
    dataset data = generate_scenario(ecfg, n, a_n, ecfg.seed, ctx.threads);
    kernel_spec ks = ecfg.kernel;
    std::vector<double> estimates(static_cast<size_t>(points));
    std::vector<double> variances(static_cast<size_t>(points));
    double c0 = static_cast<double>(n) * std::pow(h, ecfg.d + ecfg.p + 4);
    for (int k = 0; k < points; ++k) {
        const double* u = &ecfg.eval_u[static_cast<size_t>(k * ecfg.d)];
        const double* x = &ecfg.eval_x[static_cast<size_t>(k * ecfg.p)];
        eval_grid grid;
        for (int i = 0; i < ecfg.d; ++i) grid.u_axes.push_back({u[i]});
        for (int l = 0; l < ecfg.p; ++l) grid.x_axes.push_back({x[l]});
        grid.u_boundary.assign(1, 0);
        estimate_field est = nw_regression(data, ks, h, grid, ecfg.denom_floor, ctx.threads);
        if (est.degenerate[0])
            throw scenario_error("ci: degenerate denominator at evaluation point " +
                                 std::to_string(k));
        estimates[static_cast<size_t>(k)] = est.value[0];
        variances[static_cast<size_t>(k)] =
            theoretical_bias_variance(model, u, x, ks, ecfg.d, ecfg.p, c0).variance;
    }
    std::vector<ci_band> bands =
        confidence_intervals(estimates, variances, n, h, ecfg.d, ecfg.p, ecfg.tau);
    csv_preamble pre = preamble_for(ctx, {ecfg.seed});
    pre.emplace_back("h", format17(h));
    pre.emplace_back("q_tau", format17(joint_normal_quantile(points, ecfg.tau)));
    write_bands_csv(ctx.path("bands.csv"), ecfg.eval_u, ecfg.eval_x, ecfg.d, ecfg.p, bands,
                    pre);

    // joint coverage across replicates when more than one is configured
    if (ecfg.replicates > 1) {
        coverage_report rep = run_coverage_experiment(ecfg);
        write_coverage_csv(ctx.path("coverage.csv"), rep, preamble_for(ctx, rep.seeds));
        write_text_file(ctx.path("summary.txt"), coverage_summary(rep));
    }
}

} // namespace

std::string resolve_output_dir(const run_config& cfg) {
    if (!cfg.output.empty()) return cfg.output;
    const char* root = std::getenv("LSRF_OUTPUT_ROOT");
    fs::path base = (root && *root) ? fs::path(root) : fs::path(".");
    return (base / cfg.scenario).string();
}

int dispatch(const std::string& subcommand, const run_config& cfg, const std::string& out_dir) {
    static const std::set<std::string> known = {
        "simulate",        "sample",         "fit",
        "backfit",         "experiment-rate", "experiment-clt",
        "experiment-additive", "experiment-mn-dep", "ci"};

    auto start = std::chrono::steady_clock::now();
    manifest_info info;
    info.scenario = cfg.scenario;
    info.subcommand = subcommand;
    info.seed = cfg.seed;
    info.status = "ok";
    info.warnings = cfg.warnings;

    run_context ctx{cfg, out_dir, "", cfg.threads == 0 ? default_thread_count() : cfg.threads,
                    {}};
    int code = 0;
    try {
        fs::create_directories(out_dir);
        info.config_digest = digest_hex(config_digest(cfg));
        ctx.digest = info.config_digest;
        if (!known.count(subcommand))
            throw validation_error({"subcommand: unknown subcommand '" + subcommand + "'"});
        cfg.validate();
        info.replicate_seeds = replicate_seeds(cfg.seed, cfg.experiment.replicates);

        if (subcommand == "sample")
            run_sample(ctx);
        else if (subcommand == "simulate")
            run_simulate(ctx);
        else if (subcommand == "fit")
            run_fit(ctx);
        else if (subcommand == "backfit")
            run_backfit(ctx);
        else if (subcommand == "experiment-rate")
            run_experiment_rate(ctx);
        else if (subcommand == "experiment-clt")
            run_experiment_clt(ctx);
        else if (subcommand == "experiment-additive")
            run_experiment_additive(ctx);
        else if (subcommand == "experiment-mn-dep")
            run_experiment_mn_dep(ctx);
        else
            run_ci(ctx);
        info.outputs = ctx.written;
    } catch (const validation_error& err) {
        info.status = "config-error";
        info.error = err.what();
        code = 2;
    } catch (const std::exception& err) {
        info.status = "scenario-error";
        info.error = err.what();
        code = 1;
    }

    if (code != 0) {
        // a failed run leaves no partial data files behind
        std::error_code ec;
        for (const std::string& file : ctx.written) fs::remove(file, ec);
    }

    info.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!ec) write_manifest((fs::path(out_dir) / "manifest.json").string(), info);
    return code;
}

} // namespace lsrf
