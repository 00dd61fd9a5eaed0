#include "lsrf/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "lsrf/backfit.hpp"
#include "lsrf/common.hpp"
#include "lsrf/quadrature.hpp"
#include "lsrf/rng.hpp"

namespace lsrf {

namespace {

// counter streams: draw_sites uses stream 0 per site, covariates stream 1,
// noise stream 2, levy masses stream 3, replicate seeds stream 4
constexpr uint64_t stream_covariates = 1;
constexpr uint64_t stream_noise = 2;
constexpr uint64_t stream_masses = 3;
constexpr uint64_t stream_replicates = 4;

std::string fmt(const char* pattern, ...) {
    char buf[256];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof(buf), pattern, args);
    va_end(args);
    return std::string(buf);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double xm = mean_of(x);
    double ym = mean_of(y);
    double num = 0.0;
    double den = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - xm) * (y[i] - ym);
        den += (x[i] - xm) * (x[i] - xm);
    }
    return num / den;
}

// joint truth m(u, x); additive pieces take precedence when configured
std::function<double(const double*, const double*)> joint_truth(const experiment_config& cfg) {
    if (!cfg.m_add.empty()) {
        auto base = cfg.m_base;
        auto parts = cfg.m_add;
        return [base, parts](const double* u, const double* x) {
            double v = base ? base(u) : 0.0;
            for (size_t l = 0; l < parts.size(); ++l) v += parts[l](u, x[l]);
            return v;
        };
    }
    return cfg.m;
}

double mean_coordinate(const double* u, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += u[i];
    return s / static_cast<double>(d);
}

// runs fn(r) for every replicate on the worker pool and rethrows the first
// failure (by replicate order) as a scenario_error with run context
void replicate_loop(const experiment_config& cfg, int64_t count,
                    const std::function<void(int64_t)>& fn) {
    std::vector<std::string> errors(static_cast<size_t>(count));
    parallel_for(count, cfg.threads, [&](int64_t b, int64_t e) {
        for (int64_t idx = b; idx < e; ++idx) {
            try {
                fn(idx);
            } catch (const std::exception& ex) {
                errors[static_cast<size_t>(idx)] = ex.what();
            }
        }
    });
    for (int64_t idx = 0; idx < count; ++idx) {
        if (!errors[static_cast<size_t>(idx)].empty())
            throw scenario_error(fmt("scenario '%s': job %lld failed: %s", cfg.scenario.c_str(),
                                     static_cast<long long>(idx),
                                     errors[static_cast<size_t>(idx)].c_str()));
    }
}

eval_grid point_grid(const std::vector<double>& u, const std::vector<double>& x, int d, int p) {
    eval_grid g;
    for (int i = 0; i < d; ++i) g.u_axes.push_back({u[i]});
    for (int l = 0; l < p; ++l) g.x_axes.push_back({x[l]});
    g.u_boundary.assign(1, 0);
    return g;
}

double t_quantile_975(int dof) {
    boost::math::students_t_distribution<double> dist(static_cast<double>(dof));
    return boost::math::quantile(dist, 0.975);
}

} // namespace

std::string to_string(scenario_kind k) {
    switch (k) {
        case scenario_kind::gaussian_iid: return "gaussian_iid";
        case scenario_kind::uniform_iid: return "uniform_iid";
        case scenario_kind::levy_field: return "levy_field";
    }
    return "unknown";
}

scenario_kind scenario_kind_from_string(const std::string& name) {
    if (name == "gaussian_iid") return scenario_kind::gaussian_iid;
    if (name == "uniform_iid") return scenario_kind::uniform_iid;
    if (name == "levy_field") return scenario_kind::levy_field;
    throw validation_error({"unknown scenario kind '" + name + "'"});
}

int64_t experiment_config::eval_count() const {
    if (d <= 0) return 0;
    return static_cast<int64_t>(eval_u.size()) / d;
}

void experiment_config::validate() const {
    issue_list iss;
    iss.require(d >= 1, "experiment_config.d: must be at least 1");
    iss.require(p >= 0, "experiment_config.p: must be nonnegative");
    iss.require(!schedule.empty(), "experiment_config.schedule: must not be empty");
    for (size_t i = 0; i < schedule.size(); ++i) {
        iss.require(schedule[i].first >= 1,
                    fmt("experiment_config.schedule[%zu]: n must be at least 1", i));
        iss.require(schedule[i].second > 0.0,
                    fmt("experiment_config.schedule[%zu]: A_n must be positive", i));
        if (i > 0)
            iss.require(schedule[i].first > schedule[i - 1].first,
                        fmt("experiment_config.schedule[%zu]: n must increase strictly", i));
    }
    iss.require(bandwidth_c > 0.0, "experiment_config.bandwidth_c: must be positive");
    iss.require(bandwidth_exponent <= 0.0,
                "experiment_config.bandwidth_exponent: must be nonpositive");
    iss.require(denom_floor >= 0.0, "experiment_config.denom_floor: must be nonnegative");
    iss.require(replicates >= 2, "experiment_config.replicates: must be at least 2");
    iss.require(threads >= 1, "experiment_config.threads: must be at least 1");
    iss.require(u_points >= 1, "experiment_config.u_points: must be at least 1");
    iss.require(x_points >= 1, "experiment_config.x_points: must be at least 1");
    iss.require(x_lo < x_hi, "experiment_config.x_lo: must be below x_hi");
    iss.require(x_scale > 0.0, "experiment_config.x_scale: must be positive");
    iss.require(grid_points >= 2, "experiment_config.grid_points: must be at least 2");
    iss.require(backfit_tol > 0.0, "experiment_config.backfit_tol: must be positive");
    iss.require(backfit_max_iter >= 1, "experiment_config.backfit_max_iter: must be at least 1");
    iss.require(moment_order >= 2 && moment_order % 2 == 0,
                "experiment_config.moment_order: must be even and at least 2");
    iss.require(tau > 0.0 && tau < 1.0, "experiment_config.tau: must lie in (0, 1)");
    iss.require(m != nullptr || !m_add.empty(),
                "experiment_config.m: regression truth must be set");
    if (d >= 1) {
        iss.require(eval_u.size() % static_cast<size_t>(d) == 0,
                    "experiment_config.eval_u: length must be a multiple of d");
        int64_t rows = static_cast<int64_t>(eval_u.size()) / d;
        if (p > 0)
            iss.require(static_cast<int64_t>(eval_x.size()) == rows * p,
                        "experiment_config.eval_x: needs p entries per eval_u row");
    }
    if (kind == scenario_kind::levy_field) {
        iss.require(p == 1, "experiment_config.p: levy_field covariates need p = 1");
        iss.require(field_delta >= 0.0, "experiment_config.field_delta: must be nonnegative");
    }
    iss.check();
    kernel.validate();
    design_density.validate(d);
    if (kind == scenario_kind::levy_field) {
        field_kernel.validate();
        field_measure.validate();
    }
}

std::vector<uint64_t> replicate_seeds(uint64_t seed, int replicates) {
    if (replicates < 1) throw validation_error({"replicate_seeds: replicates must be at least 1"});
    std::vector<uint64_t> out(static_cast<size_t>(replicates));
    for (int r = 0; r < replicates; ++r)
        out[static_cast<size_t>(r)] =
            counter_rng(seed, stream_replicates, static_cast<uint64_t>(r)).next_u64();
    return out;
}

double experiment_bandwidth(const experiment_config& cfg, int64_t n, int smoothing_dim) {
    double expo = cfg.bandwidth_exponent;
    if (expo == 0.0) expo = -1.0 / static_cast<double>(smoothing_dim + 4);
    return cfg.bandwidth_c * std::pow(static_cast<double>(n), expo);
}

dataset generate_scenario(const experiment_config& cfg, int64_t n, double a_n, uint64_t seed,
                          int threads) {
    sampling_design design;
    design.d = cfg.d;
    design.n = n;
    design.A_n = a_n;
    design.density = cfg.design_density;
    design.seed = seed;
    cfg.validate();
    return generate_scenario(cfg, draw_sites(design, threads), seed, threads);
}

dataset generate_scenario(const experiment_config& cfg, site_set sites, uint64_t seed,
                          int threads) {
    cfg.validate();
    sites.validate();
    if (sites.d != cfg.d)
        throw validation_error({"generate_scenario: site dimension does not match the config"});
    auto truth = joint_truth(cfg);
    int64_t n = sites.n();
    double a_n = sites.A_n;

    dataset data;
    data.sites = std::move(sites);
    data.p = cfg.p;
    data.X.assign(static_cast<size_t>(n) * cfg.p, 0.0);
    data.Y.assign(static_cast<size_t>(n), 0.0);

    if (cfg.kind == scenario_kind::levy_field) {
        double c0 = cfg.field_kernel.c0();
        double delta = cfg.field_delta > 0.0 ? cfg.field_delta : default_cell_width(c0);
        cell_grid grid = make_field_grid(a_n, cfg.d, c0, delta);
        std::vector<double> masses =
            sample_levy_masses(grid, cfg.field_measure, seed, stream_masses, threads);
        field_evaluator ev(cfg.field_kernel, grid);
        parallel_for(n, threads, [&](int64_t b, int64_t e) {
            for (int64_t j = b; j < e; ++j)
                data.X[static_cast<size_t>(j)] =
                    ev.locally_stationary(masses, &data.sites.sites[j * cfg.d], a_n);
        });
    } else {
        parallel_for(n, threads, [&](int64_t b, int64_t e) {
            for (int64_t j = b; j < e; ++j) {
                counter_rng rng(seed, stream_covariates, static_cast<uint64_t>(j));
                const double* u = &data.sites.unit[j * cfg.d];
                for (int l = 0; l < cfg.p; ++l) {
                    double draw;
                    if (cfg.kind == scenario_kind::uniform_iid) {
                        draw = rng.uniform01();
                    } else {
                        double mu = cfg.x_center + cfg.x_trend * mean_coordinate(u, cfg.d);
                        draw = mu + cfg.x_scale * rng.gaussian();
                    }
                    data.X[j * cfg.p + l] = draw;
                }
            }
        });
    }

    parallel_for(n, threads, [&](int64_t b, int64_t e) {
        for (int64_t j = b; j < e; ++j) {
            const double* u = &data.sites.unit[j * cfg.d];
            const double* x = cfg.p > 0 ? &data.X[j * cfg.p] : nullptr;
            double y = truth(u, x);
            if (cfg.sigma) {
                counter_rng rng(seed, stream_noise, static_cast<uint64_t>(j));
                y += cfg.sigma(u, x) * rng.gaussian();
            }
            data.Y[static_cast<size_t>(j)] = y;
        }
    });

    data.validate();
    return data;
}

model_spec scenario_model(const experiment_config& cfg) {
    cfg.validate();
    if (cfg.kind == scenario_kind::levy_field)
        throw validation_error(
            {"scenario_model: levy_field has no closed-form design density; use gaussian_iid or "
             "uniform_iid"});

    model_spec model;
    model.m = joint_truth(cfg);
    model.sigma = cfg.sigma ? cfg.sigma
                            : [](const double*, const double*) { return 0.0; };

    density_spec density = cfg.design_density;
    int d = cfg.d;
    double total = density.integral(d);
    model.f_S = [density, d, total](const double* u) { return density.value(u, d) / total; };

    int p = cfg.p;
    if (cfg.kind == scenario_kind::uniform_iid) {
        model.f = [p](const double*, const double* x) {
            for (int l = 0; l < p; ++l)
                if (x[l] < 0.0 || x[l] > 1.0) return 0.0;
            return 1.0;
        };
    } else {
        double center = cfg.x_center;
        double trend = cfg.x_trend;
        double scale = cfg.x_scale;
        model.f = [p, d, center, trend, scale](const double* u, const double* x) {
            double mu = center + trend * mean_coordinate(u, d);
            double out = 1.0;
            for (int l = 0; l < p; ++l) {
                double z = (x[l] - mu) / scale;
                out *= std::exp(-0.5 * z * z) / (scale * 2.5066282746310005);
            }
            return out;
        };
    }
    return model;
}

void rate_report::validate() const {
    issue_list iss;
    size_t points = n.size();
    iss.require(points >= 1, "rate_report.n: must not be empty");
    iss.require(a_n.size() == points, "rate_report.a_n: size mismatch");
    iss.require(h.size() == points, "rate_report.h: size mismatch");
    iss.require(sup_error.size() == points, "rate_report.sup_error: size mismatch");
    iss.require(mean_sup_error.size() == points, "rate_report.mean_sup_error: size mismatch");
    iss.require(!seeds.empty(), "rate_report.seeds: must not be empty");
    iss.check();
    for (size_t i = 0; i < points; ++i) {
        iss.require(sup_error[i].size() == seeds.size(),
                    fmt("rate_report.sup_error[%zu]: one entry per replicate", i));
        for (double v : sup_error[i])
            iss.require(std::isfinite(v) && v >= 0.0,
                        fmt("rate_report.sup_error[%zu]: entries must be finite and nonnegative",
                            i));
        iss.require(std::isfinite(mean_sup_error[i]),
                    fmt("rate_report.mean_sup_error[%zu]: must be finite", i));
    }
    iss.require(std::isfinite(slope), "rate_report.slope: must be finite");
    iss.require(std::isfinite(predicted_slope), "rate_report.predicted_slope: must be finite");
    iss.check();
}

void clt_report::validate() const {
    issue_list iss;
    iss.require(statistic.size() == seeds.size(), "clt_report.statistic: one entry per replicate");
    iss.require(statistic.size() >= 2, "clt_report.statistic: needs at least 2 replicates");
    iss.require(static_cast<int>(u.size()) == d, "clt_report.u: size must equal d");
    iss.require(static_cast<int>(x.size()) == p, "clt_report.x: size must equal p");
    for (double v : statistic)
        iss.require(std::isfinite(v), "clt_report.statistic: entries must be finite");
    iss.require(std::isfinite(sample_mean), "clt_report.sample_mean: must be finite");
    iss.require(std::isfinite(sample_variance) && sample_variance >= 0.0,
                "clt_report.sample_variance: must be finite and nonnegative");
    iss.require(std::isfinite(theory_variance) && theory_variance >= 0.0,
                "clt_report.theory_variance: must be finite and nonnegative");
    iss.require(ks_distance >= 0.0 && ks_distance <= 1.0,
                "clt_report.ks_distance: must lie in [0, 1]");
    iss.check();
}

namespace {

// shared rate machinery: sup errors over per-schedule grids, slope fits, and
// the strictly-decreasing check; fill_sup(i, r, h_i) returns the replicate sup
rate_report rate_skeleton(const experiment_config& cfg, const std::string& estimator,
                          int smoothing_dim,
                          const std::function<double(size_t, int, double)>& fill_sup) {
    rate_report rep;
    rep.scenario = cfg.scenario;
    rep.estimator = estimator;
    rep.d = cfg.d;
    rep.p = cfg.p;
    rep.seeds = replicate_seeds(cfg.seed, cfg.replicates);
    rep.predicted_slope = -2.0 / static_cast<double>(smoothing_dim + 4);

    size_t points = cfg.schedule.size();
    int reps = cfg.replicates;
    rep.n.resize(points);
    rep.a_n.resize(points);
    rep.h.resize(points);
    rep.sup_error.assign(points, std::vector<double>(static_cast<size_t>(reps), 0.0));
    for (size_t i = 0; i < points; ++i) {
        rep.n[i] = cfg.schedule[i].first;
        rep.a_n[i] = cfg.schedule[i].second;
        rep.h[i] = experiment_bandwidth(cfg, rep.n[i], smoothing_dim);
    }

    replicate_loop(cfg, static_cast<int64_t>(points) * reps, [&](int64_t idx) {
        size_t i = static_cast<size_t>(idx / reps);
        int r = static_cast<int>(idx % reps);
        rep.sup_error[i][static_cast<size_t>(r)] = fill_sup(i, r, rep.h[i]);
    });

    rep.mean_sup_error.resize(points);
    for (size_t i = 0; i < points; ++i) rep.mean_sup_error[i] = mean_of(rep.sup_error[i]);

    rep.anomalous = false;
    for (size_t i = 1; i < points; ++i)
        if (!(rep.mean_sup_error[i] < rep.mean_sup_error[i - 1])) rep.anomalous = true;

    if (points >= 2) {
        // log of exact zeros (noiseless exact fits) is floored far below any
        // realistic error so slope fits stay finite
        auto safe_log = [](double v) { return std::log(v > 1e-300 ? v : 1e-300); };
        std::vector<double> logn(points), logerr(points);
        for (size_t i = 0; i < points; ++i) {
            logn[i] = std::log(static_cast<double>(rep.n[i]));
            logerr[i] = safe_log(rep.mean_sup_error[i]);
        }
        rep.slope = ols_slope(logn, logerr);

        rep.replicate_slope.resize(static_cast<size_t>(reps));
        for (int r = 0; r < reps; ++r) {
            std::vector<double> y(points);
            for (size_t i = 0; i < points; ++i)
                y[i] = safe_log(rep.sup_error[i][static_cast<size_t>(r)]);
            rep.replicate_slope[static_cast<size_t>(r)] = ols_slope(logn, y);
        }
        double sm = mean_of(rep.replicate_slope);
        double sv = variance_of(rep.replicate_slope, sm);
        rep.slope_se = std::sqrt(sv / reps);
        double t = t_quantile_975(reps - 1);
        rep.slope_ci_lo = sm - t * rep.slope_se;
        rep.slope_ci_hi = sm + t * rep.slope_se;
    }

    rep.validate();
    return rep;
}

} // namespace

rate_report run_rate_experiment(const experiment_config& cfg) {
    cfg.validate();
    issue_list iss;
    iss.require(cfg.schedule.size() >= 3,
                fmt("run_rate_experiment: schedule needs at least 3 points, got %zu",
                    cfg.schedule.size()));
    iss.require(cfg.p >= 1, "run_rate_experiment: needs at least one covariate");
    iss.check();

    auto truth = joint_truth(cfg);
    std::vector<uint64_t> seeds = replicate_seeds(cfg.seed, cfg.replicates);

    // per-schedule evaluation grids over I_h x [x_lo, x_hi]^p and the truth
    // values on them, shared across replicates
    size_t points = cfg.schedule.size();
    std::vector<eval_grid> grids(points);
    std::vector<std::vector<double>> truth_vals(points);
    std::vector<double> xlo(static_cast<size_t>(cfg.p), cfg.x_lo);
    std::vector<double> xhi(static_cast<size_t>(cfg.p), cfg.x_hi);
    for (size_t i = 0; i < points; ++i) {
        double h = experiment_bandwidth(cfg, cfg.schedule[i].first, cfg.d + cfg.p);
        grids[i] = make_eval_grid(cfg.d, cfg.p, h, cfg.kernel.support(), cfg.u_points, xlo, xhi,
                                  cfg.x_points);
        int64_t xc = grids[i].x_count();
        truth_vals[i].resize(static_cast<size_t>(grids[i].size()));
        std::vector<double> ub(static_cast<size_t>(cfg.d)), xb(static_cast<size_t>(cfg.p));
        for (int64_t k = 0; k < grids[i].size(); ++k) {
            grids[i].u_point(k / xc, ub.data());
            grids[i].x_point(k % xc, xb.data());
            truth_vals[i][static_cast<size_t>(k)] = truth(ub.data(), xb.data());
        }
    }

    return rate_skeleton(cfg, "nw", cfg.d + cfg.p, [&](size_t i, int r, double h) {
        dataset data = generate_scenario(cfg, cfg.schedule[i].first, cfg.schedule[i].second,
                                         seeds[static_cast<size_t>(r)], 1);
        estimate_field est = nw_regression(data, cfg.kernel, h, grids[i], cfg.denom_floor, 1);
        int64_t total = est.grid.size();
        int64_t bad = est.degenerate_count();
        if (bad * 10 > total)
            throw scenario_error(
                fmt("degenerate grid coverage %lld/%lld exceeds 10%% at n=%lld, replicate %d",
                    static_cast<long long>(bad), static_cast<long long>(total),
                    static_cast<long long>(cfg.schedule[i].first), r));
        double sup = 0.0;
        for (int64_t k = 0; k < total; ++k) {
            if (est.degenerate[static_cast<size_t>(k)]) continue;
            double err = std::fabs(est.value[static_cast<size_t>(k)] -
                                   truth_vals[i][static_cast<size_t>(k)]);
            if (err > sup) sup = err;
        }
        return sup;
    });
}

clt_report run_clt_experiment(const experiment_config& cfg) {
    cfg.validate();
    issue_list iss;
    iss.require(cfg.replicates >= 200,
                fmt("run_clt_experiment: needs at least 200 replicates, got %d", cfg.replicates));
    iss.require(cfg.eval_count() >= 1, "run_clt_experiment: needs an evaluation point");
    iss.require(cfg.kind != scenario_kind::levy_field,
                "run_clt_experiment: needs a closed-form scenario (gaussian_iid or uniform_iid)");
    iss.require(cfg.p >= 1, "run_clt_experiment: needs at least one covariate");
    iss.check();

    clt_report rep;
    rep.scenario = cfg.scenario;
    rep.d = cfg.d;
    rep.p = cfg.p;
    rep.n = cfg.schedule.back().first;
    rep.a_n = cfg.schedule.back().second;
    rep.h = experiment_bandwidth(cfg, rep.n, cfg.d + cfg.p);
    rep.u.assign(cfg.eval_u.begin(), cfg.eval_u.begin() + cfg.d);
    rep.x.assign(cfg.eval_x.begin(), cfg.eval_x.begin() + cfg.p);
    rep.seeds = replicate_seeds(cfg.seed, cfg.replicates);

    model_spec model = scenario_model(cfg);
    double c0 = static_cast<double>(rep.n) * std::pow(rep.h, cfg.d + cfg.p + 4);
    bias_variance bv = theoretical_bias_variance(model, rep.u.data(), rep.x.data(), cfg.kernel,
                                                 cfg.d, cfg.p, c0);
    rep.theory_bias = bv.bias;
    rep.theory_variance = bv.variance;

    eval_grid grid = point_grid(rep.u, rep.x, cfg.d, cfg.p);
    auto truth = joint_truth(cfg);
    double target = truth(rep.u.data(), rep.x.data());
    double scale = std::sqrt(static_cast<double>(rep.n) * std::pow(rep.h, cfg.d + cfg.p));

    rep.statistic.assign(static_cast<size_t>(cfg.replicates), 0.0);
    replicate_loop(cfg, cfg.replicates, [&](int64_t r) {
        dataset data =
            generate_scenario(cfg, rep.n, rep.a_n, rep.seeds[static_cast<size_t>(r)], 1);
        estimate_field est = nw_regression(data, cfg.kernel, rep.h, grid, cfg.denom_floor, 1);
        if (est.degenerate[0])
            throw scenario_error(fmt("degenerate estimate at the evaluation point, replicate %lld",
                                     static_cast<long long>(r)));
        rep.statistic[static_cast<size_t>(r)] = scale * (est.value[0] - target);
    });

    rep.sample_mean = mean_of(rep.statistic);
    rep.sample_variance = variance_of(rep.statistic, rep.sample_mean);
    if (rep.theory_variance > 0.0)
        rep.ks_distance = ks_normal_distance(rep.statistic, rep.sample_mean,
                                             std::sqrt(rep.theory_variance));
    rep.validate();
    return rep;
}

additive_report run_additive_experiment(const experiment_config& cfg) {
    cfg.validate();
    issue_list iss;
    iss.require(cfg.kind == scenario_kind::uniform_iid,
                "run_additive_experiment: covariates must be uniform_iid on the unit cube");
    iss.require(!cfg.m_add.empty() && static_cast<int>(cfg.m_add.size()) == cfg.p,
                "run_additive_experiment: needs one additive truth component per covariate");
    iss.require(cfg.eval_count() >= 1, "run_additive_experiment: needs an evaluation point");
    iss.check();

    int p = cfg.p;
    std::vector<double> u_star(cfg.eval_u.begin(), cfg.eval_u.begin() + cfg.d);
    std::vector<double> x_star(cfg.eval_x.begin(), cfg.eval_x.begin() + p);
    std::vector<double> x_grid = make_unit_grid(cfg.grid_points);
    int g = cfg.grid_points;

    // evaluation points must sit on the working grid so no interpolation
    // enters the standardized statistics
    std::vector<int> star_idx(static_cast<size_t>(p), 0);
    for (int l = 0; l < p; ++l) {
        double best = 1e300;
        int arg = 0;
        for (int t = 0; t < g; ++t) {
            double diff = std::fabs(x_grid[static_cast<size_t>(t)] - x_star[static_cast<size_t>(l)]);
            if (diff < best) {
                best = diff;
                arg = t;
            }
        }
        if (best > 1e-9)
            throw validation_error({fmt(
                "run_additive_experiment: eval_x[%d] is %.3g away from the working grid", l,
                best)});
        star_idx[static_cast<size_t>(l)] = arg;
    }

    // truth components centered to integral zero against the uniform marginal
    std::vector<std::vector<double>> target(static_cast<size_t>(p),
                                            std::vector<double>(static_cast<size_t>(g), 0.0));
    for (int l = 0; l < p; ++l) {
        auto part = cfg.m_add[static_cast<size_t>(l)];
        const double* u = u_star.data();
        double center = simpson_adaptive([&](double t) { return part(u, t); }, 0.0, 1.0, 1e-10);
        for (int t = 0; t < g; ++t)
            target[static_cast<size_t>(l)][static_cast<size_t>(t)] =
                part(u, x_grid[static_cast<size_t>(t)]) - center;
    }

    size_t points = cfg.schedule.size();
    int reps = cfg.replicates;
    additive_report out;
    out.component_mean_sup.assign(points, std::vector<double>(static_cast<size_t>(p), 0.0));

    // per-replicate statistics at the last schedule point
    std::vector<std::vector<double>> stats(static_cast<size_t>(p),
                                           std::vector<double>(static_cast<size_t>(reps), 0.0));
    std::vector<std::vector<std::vector<double>>> comp_sup(
        points, std::vector<std::vector<double>>(static_cast<size_t>(p),
                                                 std::vector<double>(static_cast<size_t>(reps))));

    backfit_options opt;
    opt.tol = cfg.backfit_tol;
    opt.max_iter = cfg.backfit_max_iter;

    std::vector<uint64_t> seeds = replicate_seeds(cfg.seed, cfg.replicates);
    out.rate = rate_skeleton(cfg, "additive", cfg.d + 1, [&](size_t i, int r, double h) {
        dataset data = generate_scenario(cfg, cfg.schedule[i].first, cfg.schedule[i].second,
                                         seeds[static_cast<size_t>(r)], 1);
        pilot_estimates pilots =
            compute_pilots(data, cfg.kernel, h, u_star, x_grid, cfg.denom_floor, 1);
        int64_t flagged = 0;
        for (uint8_t f : pilots.m_l_degenerate) flagged += f;
        if (flagged > 0)
            throw scenario_error(
                fmt("degenerate pilot density at %lld of %zu grid points, n=%lld, replicate %d",
                    static_cast<long long>(flagged), pilots.m_l_degenerate.size(),
                    static_cast<long long>(cfg.schedule[i].first), r));
        additive_model fit = smooth_backfit(pilots, opt);
        if (!fit.converged)
            throw scenario_error(fmt("backfitting failed to converge in %d sweeps, n=%lld, "
                                     "replicate %d",
                                     cfg.backfit_max_iter,
                                     static_cast<long long>(cfg.schedule[i].first), r));

        // component interior [2 C1 h, 1 - 2 C1 h]
        double margin = 2.0 * cfg.kernel.support() * h;
        double sup = 0.0;
        for (int l = 0; l < p; ++l) {
            double comp = 0.0;
            for (int t = 0; t < g; ++t) {
                double xv = x_grid[static_cast<size_t>(t)];
                if (xv < margin || xv > 1.0 - margin) continue;
                double err = std::fabs(fit.components[static_cast<size_t>(l)][static_cast<size_t>(t)] -
                                       target[static_cast<size_t>(l)][static_cast<size_t>(t)]);
                if (err > comp) comp = err;
            }
            comp_sup[i][static_cast<size_t>(l)][static_cast<size_t>(r)] = comp;
            if (comp > sup) sup = comp;
        }

        if (i + 1 == points) {
            double scale =
                std::sqrt(pilots.n_unit * std::pow(h, cfg.d + 1));
            for (int l = 0; l < p; ++l) {
                int t = star_idx[static_cast<size_t>(l)];
                stats[static_cast<size_t>(l)][static_cast<size_t>(r)] =
                    scale * (fit.components[static_cast<size_t>(l)][static_cast<size_t>(t)] -
                             target[static_cast<size_t>(l)][static_cast<size_t>(t)]);
            }
        }
        return sup;
    });

    for (size_t i = 0; i < points; ++i)
        for (int l = 0; l < p; ++l)
            out.component_mean_sup[i][static_cast<size_t>(l)] =
                mean_of(comp_sup[i][static_cast<size_t>(l)]);

    // per-component clt summaries with the diagonal variance target v_l
    model_spec model = scenario_model(cfg);
    for (int l = 0; l < p; ++l) {
        clt_report comp;
        comp.scenario = cfg.scenario;
        comp.d = cfg.d;
        comp.p = p;
        comp.n = cfg.schedule.back().first;
        comp.a_n = cfg.schedule.back().second;
        comp.h = out.rate.h.back();
        comp.component = l;
        comp.u = u_star;
        comp.x = x_star;
        comp.seeds = out.rate.seeds;
        comp.statistic = stats[static_cast<size_t>(l)];
        comp.sample_mean = mean_of(comp.statistic);
        comp.sample_variance = variance_of(comp.statistic, comp.sample_mean);

        additive_variance_spec vs;
        auto sigma = cfg.sigma;
        std::vector<double> slice = x_star;
        vs.sigma_l = [sigma, slice, l](const double* u, double x) mutable {
            if (!sigma) return 0.0;
            slice[static_cast<size_t>(l)] = x;
            return sigma(u, slice.data());
        };
        vs.f_S = model.f_S;
        vs.p_l = [](const double*, double x) { return (x >= 0.0 && x <= 1.0) ? 1.0 : 0.0; };
        comp.theory_variance = additive_asymptotics(vs, cfg.kernel, cfg.d, u_star.data(),
                                                    x_star[static_cast<size_t>(l)]);
        if (comp.theory_variance > 0.0)
            comp.ks_distance = ks_normal_distance(comp.statistic, comp.sample_mean,
                                                  std::sqrt(comp.theory_variance));
        comp.validate();
        out.components.push_back(std::move(comp));
    }

    // cross-component sample correlation of the standardized statistics
    out.correlation.assign(static_cast<size_t>(p) * p, 0.0);
    for (int a = 0; a < p; ++a) {
        for (int b = 0; b < p; ++b) {
            double ma = out.components[static_cast<size_t>(a)].sample_mean;
            double mb = out.components[static_cast<size_t>(b)].sample_mean;
            double cov = 0.0;
            for (int r = 0; r < reps; ++r)
                cov += (stats[static_cast<size_t>(a)][static_cast<size_t>(r)] - ma) *
                       (stats[static_cast<size_t>(b)][static_cast<size_t>(r)] - mb);
            cov /= static_cast<double>(reps - 1);
            double va = out.components[static_cast<size_t>(a)].sample_variance;
            double vb = out.components[static_cast<size_t>(b)].sample_variance;
            out.correlation[static_cast<size_t>(a * p + b)] =
                (va > 0.0 && vb > 0.0) ? cov / std::sqrt(va * vb) : 0.0;
        }
    }
    return out;
}

decay_report run_mn_dependence_experiment(const experiment_config& cfg) {
    cfg.validate();
    issue_list iss;
    iss.require(cfg.kind == scenario_kind::levy_field,
                "run_mn_dependence_experiment: needs the levy_field scenario");
    iss.require(cfg.field_kernel.terms() == 1,
                fmt("run_mn_dependence_experiment: needs a single-term field kernel, got %d terms",
                    cfg.field_kernel.terms()));
    iss.require(cfg.taper_radii.size() >= 3,
                fmt("run_mn_dependence_experiment: needs at least 3 taper radii, got %zu",
                    cfg.taper_radii.size()));
    iss.check();

    decay_report rep;
    rep.scenario = cfg.scenario;
    rep.c0 = cfg.field_kernel.c0();
    rep.theory_slope = -rep.c0 / 2.0;
    rep.seeds = {cfg.seed};

    double a_n = cfg.schedule.back().second;
    double delta = cfg.field_delta > 0.0 ? cfg.field_delta : default_cell_width(rep.c0);
    rep.estimate =
        estimate_truncation_error(cfg.field_kernel, cfg.field_measure, a_n, cfg.d, delta,
                                  cfg.taper_radii, cfg.moment_order, cfg.replicates, cfg.seed,
                                  cfg.threads);
    return rep;
}

double joint_normal_quantile(int points, double tau) {
    issue_list iss;
    iss.require(points >= 1, "joint_normal_quantile: points must be at least 1");
    iss.require(tau > 0.0 && tau < 1.0, "joint_normal_quantile: tau must lie in (0, 1)");
    iss.check();
    boost::math::normal_distribution<double> normal;
    double level = (1.0 + std::pow(1.0 - tau, 1.0 / points)) / 2.0;
    return boost::math::quantile(normal, level);
}

std::vector<ci_band> confidence_intervals(const std::vector<double>& estimates,
                                          const std::vector<double>& variances, int64_t n,
                                          double h, int d, int p, double tau) {
    issue_list iss;
    iss.require(!estimates.empty(), "confidence_intervals: estimates must not be empty");
    iss.require(estimates.size() == variances.size(),
                "confidence_intervals: one variance per estimate");
    iss.require(n >= 1, "confidence_intervals: n must be at least 1");
    iss.require(h > 0.0, "confidence_intervals: h must be positive");
    iss.require(d >= 1, "confidence_intervals: d must be at least 1");
    iss.require(p >= 0, "confidence_intervals: p must be nonnegative");
    for (size_t i = 0; i < variances.size(); ++i)
        iss.require(std::isfinite(variances[i]) && variances[i] > 0.0,
                    fmt("confidence_intervals: variances[%zu] must be positive", i));
    for (size_t i = 0; i < estimates.size(); ++i)
        iss.require(std::isfinite(estimates[i]),
                    fmt("confidence_intervals: estimates[%zu] must be finite", i));
    iss.check();
    double q = joint_normal_quantile(static_cast<int>(estimates.size()), tau);

    double denom = static_cast<double>(n) * std::pow(h, d + p);
    std::vector<ci_band> out(estimates.size());
    for (size_t i = 0; i < estimates.size(); ++i) {
        out[i].center = estimates[i];
        out[i].half_width = std::sqrt(variances[i] / denom) * q;
    }
    return out;
}

coverage_report run_coverage_experiment(const experiment_config& cfg) {
    cfg.validate();
    issue_list iss;
    iss.require(cfg.eval_count() >= 1, "run_coverage_experiment: needs evaluation points");
    iss.require(cfg.kind != scenario_kind::levy_field,
                "run_coverage_experiment: needs a closed-form scenario");
    iss.require(cfg.p >= 1, "run_coverage_experiment: needs at least one covariate");
    iss.check();

    int points = static_cast<int>(cfg.eval_count());
    coverage_report rep;
    rep.scenario = cfg.scenario;
    rep.n = cfg.schedule.back().first;
    rep.a_n = cfg.schedule.back().second;
    rep.h = experiment_bandwidth(cfg, rep.n, cfg.d + cfg.p);
    rep.tau = cfg.tau;
    rep.q_tau = joint_normal_quantile(points, cfg.tau);
    rep.seeds = replicate_seeds(cfg.seed, cfg.replicates);

    model_spec model = scenario_model(cfg);
    auto truth = joint_truth(cfg);
    double c0 = static_cast<double>(rep.n) * std::pow(rep.h, cfg.d + cfg.p + 4);

    std::vector<eval_grid> grids;
    std::vector<double> targets(static_cast<size_t>(points));
    rep.theory_variance.resize(static_cast<size_t>(points));
    for (int l = 0; l < points; ++l) {
        std::vector<double> u(cfg.eval_u.begin() + static_cast<size_t>(l) * cfg.d,
                              cfg.eval_u.begin() + static_cast<size_t>(l + 1) * cfg.d);
        std::vector<double> x(cfg.eval_x.begin() + static_cast<size_t>(l) * cfg.p,
                              cfg.eval_x.begin() + static_cast<size_t>(l + 1) * cfg.p);
        grids.push_back(point_grid(u, x, cfg.d, cfg.p));
        targets[static_cast<size_t>(l)] = truth(u.data(), x.data());
        rep.theory_variance[static_cast<size_t>(l)] =
            theoretical_bias_variance(model, u.data(), x.data(), cfg.kernel, cfg.d, cfg.p, c0)
                .variance;
    }

    rep.covered.assign(static_cast<size_t>(cfg.replicates), 0);
    replicate_loop(cfg, cfg.replicates, [&](int64_t r) {
        dataset data =
            generate_scenario(cfg, rep.n, rep.a_n, rep.seeds[static_cast<size_t>(r)], 1);
        std::vector<double> values(static_cast<size_t>(points));
        for (int l = 0; l < points; ++l) {
            estimate_field est =
                nw_regression(data, cfg.kernel, rep.h, grids[static_cast<size_t>(l)],
                              cfg.denom_floor, 1);
            if (est.degenerate[0])
                throw scenario_error(fmt("degenerate estimate at point %d, replicate %lld", l,
                                         static_cast<long long>(r)));
            values[static_cast<size_t>(l)] = est.value[0];
        }
        std::vector<ci_band> bands = confidence_intervals(values, rep.theory_variance, rep.n,
                                                          rep.h, cfg.d, cfg.p, cfg.tau);
        bool all = true;
        for (int l = 0; l < points; ++l) {
            double err = std::fabs(values[static_cast<size_t>(l)] - targets[static_cast<size_t>(l)]);
            if (err > bands[static_cast<size_t>(l)].half_width) all = false;
        }
        rep.covered[static_cast<size_t>(r)] = all ? 1 : 0;
    });

    int64_t hits = 0;
    for (uint8_t c : rep.covered) hits += c;
    rep.coverage = static_cast<double>(hits) / cfg.replicates;
    return rep;
}

double ks_normal_distance(std::vector<double> sample, double mean, double sd) {
    issue_list iss;
    iss.require(sample.size() >= 1, "ks_normal_distance: sample must not be empty");
    iss.require(std::isfinite(mean), "ks_normal_distance: mean must be finite");
    iss.require(std::isfinite(sd) && sd > 0.0, "ks_normal_distance: sd must be positive");
    iss.check();
    std::sort(sample.begin(), sample.end());
    double n = static_cast<double>(sample.size());
    double dist = 0.0;
    for (size_t i = 0; i < sample.size(); ++i) {
        double z = (sample[i] - mean) / sd;
        double cdf = 0.5 * std::erfc(-z / 1.4142135623730951);
        double lo = cdf - static_cast<double>(i) / n;
        double hi = static_cast<double>(i + 1) / n - cdf;
        if (lo > dist) dist = lo;
        if (hi > dist) dist = hi;
    }
    return dist;
}

} // namespace lsrf
