#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lsrf/common.hpp"
#include "lsrf/estimators.hpp"
#include "lsrf/experiments.hpp"
#include "lsrf/kernels.hpp"
#include "lsrf/levy.hpp"
#include "lsrf/sampling.hpp"

namespace lsrf {

// regression truths buildable from a config file, selected by name:
//   zero          m = 0
//   constant      m = value
//   linear        m = value + sum_i u_coef[i] u_i + sum_l x_coef[l] x_l
//   sine-square   m = value + sum_i u_coef[i] sin(pi u_i) + sum_l x_coef[l] x_l^2
//   additive-trig m = value + sum_i u_coef[i] u_i + sum_l x_coef[l] cos(2 pi (x_l - phase[l]))
struct truth_spec {
    std::string name = "zero";
    double value = 0.0;
    std::vector<double> u_coef; // empty = all zero, else size d
    std::vector<double> x_coef; // empty = all zero, else size p
    std::vector<double> phase;  // additive-trig only; empty = all zero, else size p

    bool additive() const { return name == "additive-trig"; }
    void collect_issues(int d, int p, issue_list& issues, const std::string& where) const;
    std::function<double(const double*, const double*)> joint(int d, int p) const;
    // additive decomposition; valid only for additive-trig
    std::function<double(const double*)> base(int d) const;
    std::vector<std::function<double(const double*, double)>> components(int p) const;
};

// moving-average field driving the levy_field scenario
struct field_section {
    std::vector<double> kernel_a = {1.0};
    std::vector<double> kernel_b = {0.0};
    std::vector<double> kernel_c = {1.0};
    double gamma0 = 0.0;
    double sigma0 = 1.0;
    double lambda = 0.0;
    std::string jump_family = "none";
    double jump_a = 0.0;
    double jump_b = 0.0;
    double delta = 0.0;        // mass cell width; 0 = default 0.25 / c0
    double coverage_tol = 0.0; // kernel tail tolerance; 0 = library default
    std::vector<double> taper_radii;
    int moment_order = 2;
    bool save_masses = false; // persist the sampled mass grid next to the data

    exp_sum_kernel kernel() const;
    levy_characteristic measure() const;
};

struct sampling_section {
    int d = 2;
    int64_t n = 1000;
    double A_n = 0.0; // 0 = sqrt(n), constant site intensity in d = 2
    std::string density_family = "uniform";
    std::vector<double> alpha;
    std::vector<double> beta;
    int cells_per_axis = 0;
    std::vector<double> weights;
    double A1 = 0.0; // block scales; 0 = default A_n^0.3 / A_n^0.15
    double A2 = 0.0;
    double flag_constant = 8.0;
    double kappa_max = 100.0;

    density_spec density() const;
    double region_size() const;
};

struct kernel_section {
    std::string family = "epanechnikov";
    std::string rule = "rate"; // rate: h = c n^{-1/(dim+4)}; manual: h as given
    double h = 0.0;
    double c = 1.0;
};

struct estimator_section {
    std::string target = "regression"; // regression | density
    double denom_floor = 1e-12;
    double tol = 1e-8; // backfitting convergence tolerance
    int max_iter = 200;
    int grid_points = 101;
    int u_points = 3;
    int x_points = 5;
    std::vector<double> x_lo; // covariate window; empty = [0,1]^p
    std::vector<double> x_hi;
    std::vector<double> eval_u; // row-major L x d evaluation points
    std::vector<double> eval_x; // row-major L x p
};

struct experiment_section {
    std::string kind = "gaussian_iid"; // gaussian_iid | uniform_iid | levy_field
    int p = 1;
    std::vector<int64_t> schedule_n;
    std::vector<double> schedule_A;
    int replicates = 20;
    truth_spec truth;
    double noise_sigma = 0.0;
    double x_center = 0.5;
    double x_trend = 0.0;
    double x_scale = 0.39894228040143268; // 1 / sqrt(2 pi)
    double tau = 0.05;
    double bandwidth_exponent = 0.0; // 0 = rate rule exponent
};

// one run = one config file; sections mirror the library modules
struct run_config {
    std::string scenario = "run";
    uint64_t seed = 1;
    int threads = 0; // 0 = all hardware threads
    std::string output;
    field_section field;
    sampling_section sampling;
    kernel_section kernel;
    estimator_section estimator;
    experiment_section experiment;
    std::vector<std::string> warnings; // non-fatal notes collected while parsing

    // collects every violation across sections before throwing
    void validate() const;
};

// strict parse: unknown keys, type mismatches, and constraint violations are
// all collected and reported together
run_config parse_config(const std::string& path);
run_config parse_config_text(const std::string& text);

// canonical serialization: fixed key order, 17-digit numbers; parsing the
// output reproduces an equal config
std::string serialize_config(const run_config& cfg);

// FNV-1a 64-bit digest of the canonical serialization
uint64_t config_digest(const run_config& cfg);
std::string digest_hex(uint64_t digest);

// adapters into the library types
sampling_design to_sampling_design(const run_config& cfg);
experiment_config to_experiment_config(const run_config& cfg);
kernel_spec to_kernel_spec(const run_config& cfg);
// manual h when rule = manual, else c n^{-1/(smoothing_dim+4)}
double config_bandwidth(const run_config& cfg, int64_t n, int smoothing_dim);

} // namespace lsrf
