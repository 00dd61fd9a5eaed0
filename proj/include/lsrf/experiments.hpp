#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lsrf/estimators.hpp"
#include "lsrf/kernels.hpp"
#include "lsrf/levy.hpp"
#include "lsrf/sampling.hpp"

namespace lsrf {

// data-generating scenarios for the monte carlo experiments
//   gaussian_iid: X_jl = mu(u_j) + x_scale * Z_jl, Z iid standard normal, so the
//                 design density f(u, x) is known in closed form
//   uniform_iid:  X_jl iid uniform on [0,1], for additive-model experiments
//   levy_field:   X_j is a levy moving-average field at site s_j (p = 1 only)
enum class scenario_kind { gaussian_iid, uniform_iid, levy_field };

std::string to_string(scenario_kind k);
scenario_kind scenario_kind_from_string(const std::string& name);

// raised when generated data violates an experiment-level sanity bound, as
// opposed to validation_error which flags a misconfigured request
struct scenario_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct experiment_config {
    std::string scenario = "experiment"; // free-form id echoed into reports
    scenario_kind kind = scenario_kind::gaussian_iid;
    int d = 2;
    int p = 1;
    std::vector<std::pair<int64_t, double>> schedule; // (n, A_n), n strictly increasing
    density_spec design_density; // site density f_S on the unit cube

    // gaussian_iid design: mu_l(u) = x_center + x_trend * mean(u); the default
    // scale 1/sqrt(2 pi) makes the marginal density equal 1 at x = mu(u)
    double x_center = 0.0;
    double x_trend = 0.0;
    double x_scale = 0.39894228040143268;

    // levy_field design
    exp_sum_kernel field_kernel;
    levy_characteristic field_measure;
    double field_delta = 0.0; // mass grid cell width, 0 = default_cell_width(c0)

    // estimation: h = bandwidth_c * n^bandwidth_exponent, exponent 0 meaning the
    // rate rule -1/(dim + 4) with dim = d+p for the joint fit and d+1 per
    // additive component
    kernel_spec kernel;
    double bandwidth_c = 1.0;
    double bandwidth_exponent = 0.0;
    double denom_floor = 1e-12;

    // monte carlo
    int replicates = 20;
    uint64_t seed = 1;
    int threads = 1;

    // rate-experiment grids: u on the interior set, x on [x_lo, x_hi]^p
    int u_points = 3;
    int x_points = 5;
    double x_lo = -0.5;
    double x_hi = 0.5;

    // point evaluations (clt and coverage runs), row-major L x d and L x p
    std::vector<double> eval_u;
    std::vector<double> eval_x;

    // regression truth m(u, x) and noise scale sigma(u, x); Y = m + sigma * e
    // with e iid standard normal
    std::function<double(const double*, const double*)> m;
    std::function<double(const double*, const double*)> sigma;

    // additive truth m(u, x) = m_base(u) + sum_l m_add[l](u, x_l); when m_add is
    // non-empty it defines the joint truth and m is ignored
    std::function<double(const double*)> m_base;
    std::vector<std::function<double(const double*, double)>> m_add;

    // backfitting controls
    int grid_points = 101;
    double backfit_tol = 1e-8;
    int backfit_max_iter = 200;

    // truncation-decay experiment: taper radii m, residual moment order q
    std::vector<double> taper_radii;
    int moment_order = 2;

    // joint confidence intervals
    double tau = 0.05;

    int64_t eval_count() const; // rows in eval_u / eval_x
    void validate() const;      // structural checks; each op enforces its own pres
};

// deterministic per-replicate seeds derived from the base seed
std::vector<uint64_t> replicate_seeds(uint64_t seed, int replicates);

// one synthetic data set: sites from the design density, covariates per the
// scenario kind, Y = m(u, X) + sigma(u, X) e; replicate r of every schedule
// point reuses seed r, so site uniforms, covariate draws, and noise are common
// random numbers across n
dataset generate_scenario(const experiment_config& cfg, int64_t n, double a_n, uint64_t seed,
                          int threads = 1);

// same covariate and noise streams over a pre-drawn site set
dataset generate_scenario(const experiment_config& cfg, site_set sites, uint64_t seed,
                          int threads = 1);

// h for one schedule point; smoothing_dim = d+p (joint) or d+1 (per component)
double experiment_bandwidth(const experiment_config& cfg, int64_t n, int smoothing_dim);

// closed-form design densities of the scenario (gaussian_iid and uniform_iid);
// levy_field has no closed form and the clt ops reject it
model_spec scenario_model(const experiment_config& cfg);

struct rate_report {
    std::string scenario;
    std::string estimator; // "nw" or "additive"
    int d = 0;
    int p = 0;
    std::vector<int64_t> n;
    std::vector<double> a_n;
    std::vector<double> h;
    std::vector<std::vector<double>> sup_error; // [schedule point][replicate]
    std::vector<double> mean_sup_error;
    // least squares slope of log(mean sup error) on log n, and a 95% interval
    // from the per-replicate slopes (paired seeds)
    double slope = 0.0;
    double predicted_slope = 0.0;
    std::vector<double> replicate_slope;
    double slope_se = 0.0;
    double slope_ci_lo = 0.0;
    double slope_ci_hi = 0.0;
    bool anomalous = false; // mean sup error failed to decrease strictly
    std::vector<uint64_t> seeds;

    void validate() const;
};

struct clt_report {
    std::string scenario;
    int d = 0;
    int p = 0;
    int64_t n = 0;
    double a_n = 0.0;
    double h = 0.0;
    int component = -1;            // additive component index, -1 for the joint fit
    std::vector<double> u, x;      // evaluation point
    std::vector<double> statistic; // sqrt(n h^dim) (estimate - truth) per replicate
    double sample_mean = 0.0;
    double sample_variance = 0.0;
    double theory_bias = 0.0;     // B, meaningful for the plain kernel fit only
    double theory_variance = 0.0; // V, or v_l for a component
    double ks_distance = 0.0;     // mean-centered sample vs Normal(0, theory_variance)
    std::vector<uint64_t> seeds;

    void validate() const;
};

struct decay_report {
    std::string scenario;
    double c0 = 0.0;           // slowest kernel decay rate
    double theory_slope = 0.0; // -c0 / 2
    truncation_estimate estimate;
    std::vector<uint64_t> seeds;
};

struct additive_report {
    rate_report rate;                   // sup errors of the component fits
    std::vector<clt_report> components; // per-component statistics at the last schedule point
    // [schedule point][component] replicate-mean sup error over the interior grid
    std::vector<std::vector<double>> component_mean_sup;
    std::vector<double> correlation; // p x p row-major sample correlation of statistics
};

struct coverage_report {
    std::string scenario;
    int64_t n = 0;
    double a_n = 0.0;
    double h = 0.0;
    double tau = 0.0;
    double q_tau = 0.0;
    std::vector<double> theory_variance; // per evaluation point
    std::vector<uint8_t> covered;        // per replicate, all points inside jointly
    double coverage = 0.0;
    std::vector<uint64_t> seeds;
};

// replicate-averaged sup error of the kernel regression over the interior
// grid times [x_lo, x_hi]^p at each schedule point, with the fitted log-log
// slope against the predicted -2/(d+p+4); schedule length must be >= 3; a
// replicate whose grid is more than 10% degenerate raises scenario_error
rate_report run_rate_experiment(const experiment_config& cfg);

// standardized statistics sqrt(n h^{d+p}) (m_hat - m) at eval point 0 on the
// last schedule entry; sample mean and variance against the theoretical B and
// V, Kolmogorov-Smirnov distance of the mean-centered sample to Normal(0, V);
// needs replicates >= 200 and a closed-form scenario
clt_report run_clt_experiment(const experiment_config& cfg);

// rate and clt statistics for the backfit components: sup errors over the
// component interior [2 C1 h, 1 - 2 C1 h] per schedule point, standardized
// statistics sqrt(n_unit h^{d+1}) (m_tilde_l - m_l) at eval point 0 on the
// last schedule entry with variance target v_l, and the cross-component
// sample correlation; truth must be additive and covariates uniform_iid
additive_report run_additive_experiment(const experiment_config& cfg);

// truncation-error decay: delegates to estimate_truncation_error at the last
// schedule entry and compares the fitted slope of log gamma on m with -c0/2;
// needs a single-term field kernel and at least 3 taper radii
decay_report run_mn_dependence_experiment(const experiment_config& cfg);

// q_tau with P(max_{l <= L} |Z_l| > q_tau) = tau for iid standard normals,
// q_tau = Phi^{-1}((1 + (1 - tau)^{1/L}) / 2)
double joint_normal_quantile(int points, double tau);

struct ci_band {
    double center = 0.0;
    double half_width = 0.0;

    double lo() const { return center - half_width; }
    double hi() const { return center + half_width; }
};

// joint asymptotic 100(1-tau)% intervals m_hat +- sqrt(V / (n h^{d+p})) q_tau
std::vector<ci_band> confidence_intervals(const std::vector<double>& estimates,
                                          const std::vector<double>& variances, int64_t n,
                                          double h, int d, int p, double tau);

// monte carlo joint coverage of the intervals over the configured eval points
// on the last schedule entry; undersmooth via bandwidth_exponent so the bias
// condition h^2 << 1/sqrt(n h^{d+p}) holds
coverage_report run_coverage_experiment(const experiment_config& cfg);

// sup |F_sample - Phi((t - mean)/sd)| over the sample points
double ks_normal_distance(std::vector<double> sample, double mean, double sd);

} // namespace lsrf
