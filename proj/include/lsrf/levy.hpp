#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lsrf/grid.hpp"
#include "lsrf/rng.hpp"

namespace lsrf {

// jump size law of the compound Poisson part
enum class jump_family { none, constant, gaussian, uniform };

std::string to_string(jump_family f);
jump_family jump_family_from_string(const std::string& name);

struct jump_dist {
    jump_family family = jump_family::none;
    // constant: value a; gaussian: mean a, sd b; uniform: endpoints [a, b]
    double a = 0.0;
    double b = 0.0;

    double mean() const;
    double second_moment() const;
    double sample(counter_rng& rng) const;
    void validate() const;
};

// characteristics (gamma0, sigma0, nu0) of the driving random measure;
// nu0 = lambda * law(jumps), jumps are not compensated
struct levy_characteristic {
    double gamma0 = 0.0; // drift density
    double sigma0 = 0.0; // Gaussian variance density
    double lambda = 0.0; // jump intensity density
    jump_dist jumps;

    double mu0() const;  // gamma0 + lambda E[J]
    double var0() const; // sigma0 + lambda E[J^2]
    void validate() const;
    // mass of a cell of the given volume: N(gamma0 vol, sigma0 vol) plus jump sum
    double sample_mass(double volume, counter_rng& rng) const;
};

// continuous-time ARMA spectral data: distinct negative AR roots lambda_i and
// monic MA polynomial P(z) = z^q + ma[q-1] z^{q-1} + ... + ma[0]
struct carma_params {
    std::vector<double> lambda;
    std::vector<double> ma;

    int p() const { return static_cast<int>(lambda.size()); }
    int q() const { return static_cast<int>(ma.size()); }
    void validate() const;
};

// g(r) = sum_i b(lambda_i) / a'(lambda_i) * exp(lambda_i r)
// with a(z) = prod_i (z^2 - lambda_i^2) and b(z) = (-1)^q P(z) P(-z)
double carma_kernel_eval(const carma_params& c, double r);

// radial kernel g(u, r) = sum_k (a_k + b_k * mean(u)) * exp(-c_k r)
struct exp_sum_kernel {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> c;

    int terms() const { return static_cast<int>(c.size()); }
    double c0() const; // slowest decay rate, min_k c_k
    void validate() const;
    double coeff(int k, const double* u, int d) const;
    double eval(const double* u, int d, double r) const;

    static exp_sum_kernel from_carma(const carma_params& params);
};

// taper: 1 on [0, m/2], linear to 0 at m, 0 beyond
double iota(double x, double m);

// cell grid [-R, A_n + R]^d with margin R = -log(coverage_tol) / c0
cell_grid make_field_grid(double A_n, int d, double c0, double delta,
                          double coverage_tol = -1.0);

double default_coverage_tol(); // exp(-18)
double default_cell_width(double c0); // 0.25 / c0

// one mass per grid cell, drawn with a per-cell counter (order independent)
std::vector<double> sample_levy_masses(const cell_grid& grid, const levy_characteristic& chi,
                                       uint64_t seed, uint64_t stream, int threads = 1);

// binary mass-grid file: header (dim, bounds, cell width, field count, seed),
// body holds one row-major mass array per independent driving measure
struct mass_grid_spec {
    box region;
    double delta = 0.0;
    uint32_t fields = 1;
    uint64_t seed = 0;
};

void write_mass_grid(const std::string& path, const mass_grid_spec& spec,
                     const std::vector<std::vector<double>>& masses);
std::pair<mass_grid_spec, std::vector<std::vector<double>>> read_mass_grid(
    const std::string& path);

enum class field_mode { locally_stationary, stationary_companion, truncated };

std::string to_string(field_mode m);
field_mode field_mode_from_string(const std::string& name);

// discretized moving average over the mass grid: X(s) = sum_cells g(., |s - v_c|) mass_c,
// with the kernel window clipped at the radius where the slowest term reaches coverage_tol
class field_evaluator {
public:
    field_evaluator(const exp_sum_kernel& g, const cell_grid& grid,
                    double coverage_tol = -1.0);

    double locally_stationary(const std::vector<double>& masses, const double* s,
                              double A_n) const;
    double stationary(const std::vector<double>& masses, const double* u, const double* s) const;
    double truncated(const std::vector<double>& masses, const double* u, const double* s,
                     double m) const;
    // out[i] = untruncated value minus the taper-m_i value, one cell pass for all i
    void residuals(const std::vector<double>& masses, const double* u, const double* s,
                   const double* ms, int nm, double* out) const;

    double eval_radius() const { return radius_; }
    const cell_grid& grid() const { return grid_; }
    const exp_sum_kernel& kernel() const { return g_; }

private:
    void check_coverage(const double* s, double needed) const;
    void accumulate(const std::vector<double>& masses, const double* s, double window,
                    const double* ms, int nm, bool complement, double* out) const;
    double table_value(int k, double r) const;

    exp_sum_kernel g_;
    cell_grid grid_;
    double coverage_tol_;
    double radius_;
    std::vector<std::vector<double>> tables_; // per term, exp(-c_k r) on a uniform r grid
    std::vector<double> table_step_;
    std::vector<double> table_rmax_;
};

struct field_moments {
    double mean = 0.0;
    double variance = 0.0;
};

// stationary companion mean and variance at rescaled location u via adaptive
// radial quadrature of g and g^2 against the surface measure
field_moments stationary_moments(const exp_sum_kernel& g, const levy_characteristic& chi,
                                 const double* u, int d);

struct truncation_estimate {
    std::vector<double> m;
    std::vector<double> gamma; // (E|eps(m)|^q)^(1/q) per taper radius
    std::vector<double> se;    // Monte Carlo standard error of gamma
    double slope = 0.0;        // least squares slope of log(gamma) on m
};

// q is the even moment order of the residual norm, q >= 2
truncation_estimate estimate_truncation_error(const exp_sum_kernel& g,
                                              const levy_characteristic& chi, double A_n, int d,
                                              double delta, std::vector<double> ms, int q,
                                              int replicates, uint64_t seed, int threads = 1);

} // namespace lsrf
