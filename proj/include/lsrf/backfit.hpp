#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lsrf/estimators.hpp"
#include "lsrf/kernels.hpp"

namespace lsrf {

// Equispaced covariate working grid on [0, 1], endpoints included.
std::vector<double> make_unit_grid(int points = 101);

// Local observation count at space point u: the boundary-kernel weighted
// number of sites whose covariate vector lies in the unit cube, normalized by
// the site density f_S(u). With every covariate inside the cube this equals n.
// Throws when f_S(u) falls below 1e-12 (no sites near u at this bandwidth).
double local_count(const dataset& data, const kernel_spec& ks, double h,
                   const std::vector<double>& u);

// Weighted mean of the responses over unit-cube covariates near u. Equals any
// constant response exactly and the single response when only one site
// contributes.
double model_constant(const dataset& data, const kernel_spec& ks, double h,
                      const std::vector<double>& u);

// Kernel pilots for the additive fit at one space point. All arrays live on
// the shared covariate grid; the joint density p_hat is stored row major with
// the last covariate axis fastest. Pairwise marginals are stored once per
// unordered pair in ascending (l, k) order with the smaller axis indexing
// rows; p_lk(l, k, a, b) resolves either orientation.
struct pilot_estimates {
    int d = 0;
    int p = 0;
    std::vector<double> u;       // space point, size d
    std::vector<double> x_grid;  // shared covariate grid on [0, 1]
    double h = 0.0;
    double f_S = 0.0;            // site density at u
    double f_bar_S = 0.0;        // in-cube weighted site density
    double n_unit = 0.0;         // local observation count
    double m0 = 0.0;             // model constant
    std::vector<double> p_hat;   // joint density, size grid()^p
    std::vector<double> p_l;     // marginal densities, p x grid()
    std::vector<double> p_pair;  // pairwise marginals, pair x grid() x grid()
    std::vector<double> m_l;     // one-dimensional pilots, p x grid()
    std::vector<uint8_t> m_l_degenerate; // p x grid()

    int grid() const { return static_cast<int>(x_grid.size()); }
    double p_lk(int l, int k, int a, int b) const;
    void validate() const;
};

// Computes every pilot at the space point u. Sites whose covariates leave the
// unit cube are excluded by the indicator; boundary-corrected weights act on
// both the space and the covariate arguments. m_l entries with marginal
// density below denom_floor are flagged degenerate and set to NaN.
pilot_estimates compute_pilots(const dataset& data, const kernel_spec& ks, double h,
                               const std::vector<double>& u,
                               const std::vector<double>& x_grid,
                               double denom_floor = 1e-12, int threads = 1);

struct backfit_options {
    double tol = 1e-8;   // sup-norm change between sweeps
    int max_iter = 200;  // sweep limit
    // components start from zero unless an initial guess (p x grid) is given
    std::vector<std::vector<double>> initial;
    void validate() const;
};

// Additive fit at one space point: constant m0 plus one centered component
// function per covariate on the working grid.
struct additive_model {
    std::vector<double> u;
    std::vector<double> x_grid;
    double m0 = 0.0;
    std::vector<std::vector<double>> components; // p vectors on x_grid
    int iterations = 0;
    double final_delta = 0.0;
    bool converged = false;
    std::vector<double> deltas; // sup-norm change after each sweep
    void validate() const;
};

// Gauss-Seidel solution of the coupled component equations
//   m_l <- pilot_l - sum_{k != l} Int m_k * p_lk / p_l - m0
// with each component re-centered against its marginal after every sweep.
// Integrals use the trapezoid rule on the shared grid so the normalization
// and the coupling share one quadrature. Stops when the sup-norm change
// drops below tol; hitting max_iter returns converged = false rather than
// throwing. A NaN in any update signals a numeric failure and throws.
additive_model smooth_backfit(const pilot_estimates& pilots,
                              const backfit_options& opt = {});

// Asymptotic variance ingredients for one additive component.
struct additive_variance_spec {
    std::function<double(const double* u, double x)> sigma_l; // conditional sd
    std::function<double(const double* u)> f_S;               // site density
    std::function<double(const double* u, double x)> p_l;     // marginal density
};

// Per-component asymptotic variance kappa0^(d+1) * sigma_l^2 / (f_S * p_l).
double additive_asymptotics(const additive_variance_spec& spec, const kernel_spec& ks,
                            int d, const double* u, double x_l);

} // namespace lsrf
