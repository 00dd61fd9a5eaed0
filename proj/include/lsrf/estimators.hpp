#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lsrf/kernels.hpp"
#include "lsrf/sampling.hpp"

namespace lsrf {

// regression sample over irregular sites: covariate rows X (n x p) and
// responses Y observed at the scaled sites
struct dataset {
    site_set sites;
    int p = 0;
    std::vector<double> X; // row-major n x p
    std::vector<double> Y; // length n

    int64_t n() const { return sites.n(); }
    void validate() const;
};

// tensor evaluation grid: u axes on [0,1]^d, x axes on a compact window
struct eval_grid {
    std::vector<std::vector<double>> u_axes;
    std::vector<std::vector<double>> x_axes;
    std::vector<uint8_t> u_boundary; // flattened u points outside the interior set

    int dim_u() const { return static_cast<int>(u_axes.size()); }
    int dim_x() const { return static_cast<int>(x_axes.size()); }
    int64_t u_count() const;
    int64_t x_count() const;
    int64_t size() const { return u_count() * x_count(); }
    void u_point(int64_t flat, double* out) const;
    void x_point(int64_t flat, double* out) const;
    void validate() const;
};

// equally spaced grid over the interior set [c1 h, 1 - c1 h]^d and the covariate
// window; full_cube widens the u axes to [0,1] and marks boundary points
eval_grid make_eval_grid(int d, int p, double h, double c1, int u_points_per_axis,
                         const std::vector<double>& x_lo, const std::vector<double>& x_hi,
                         int x_points_per_axis, bool full_cube = false);

// values over the evaluation grid, u index slow and x index fast
struct estimate_field {
    eval_grid grid;
    std::vector<double> value;
    std::vector<double> denom; // kernel density scale denominator
    std::vector<double> ess;   // effective sample size (sum w)^2 / sum w^2
    std::vector<uint8_t> degenerate;

    int64_t degenerate_count() const;
    // non-finite values may appear only at degenerate points
    void validate() const;
};

// psi_hat(u,x) = (n h^{p+d})^{-1} sum_j Kbar_h(u, s_j/A_n) prod_l K_h(x_l - X_jl) W_j
estimate_field general_kernel_estimate(const dataset& data, const std::vector<double>& W,
                                       const kernel_spec& ks, double h, const eval_grid& grid,
                                       int threads = 1);

// ratio of Y-weighted to unweighted kernel sums; denominators under the floor
// are flagged degenerate and reported, never divided
estimate_field nw_regression(const dataset& data, const kernel_spec& ks, double h,
                             const eval_grid& grid, double denom_floor = 1e-12, int threads = 1);

// joint site-covariate density estimate (unit weights)
estimate_field density_estimate(const dataset& data, const kernel_spec& ks, double h,
                                const eval_grid& grid, int threads = 1);

// quadratic-time references that visit every site for every grid point; the
// indexed estimators must reproduce them bit for bit
estimate_field general_kernel_estimate_reference(const dataset& data, const std::vector<double>& W,
                                                 const kernel_spec& ks, double h,
                                                 const eval_grid& grid, int threads = 1);
estimate_field nw_regression_reference(const dataset& data, const kernel_spec& ks, double h,
                                       const eval_grid& grid, double denom_floor = 1e-12,
                                       int threads = 1);
estimate_field density_estimate_reference(const dataset& data, const kernel_spec& ks, double h,
                                          const eval_grid& grid, int threads = 1);

// ascending indices of sites whose spatial kernel weight at u is positive
std::vector<int64_t> contributing_sites(const site_set& sites, const kernel_spec& ks, double h,
                                        const double* u);

// boundary-weighted site density n^{-1} sum_j prod_i Kbar_h(u_i, s_ji) at each
// flattened point of u_points (row-major k x d)
std::vector<double> site_density(const site_set& sites, const kernel_spec& ks, double h,
                                 const std::vector<double>& u_points, int threads = 1);

// simulation truth and its derivatives for the asymptotic formulas; partials
// left empty fall back to central differences with step 1e-5
struct model_spec {
    std::function<double(const double* u, const double* x)> m;
    std::function<double(const double* u, const double* x)> f;
    std::function<double(const double* u)> f_S;
    std::function<double(const double* u, const double* x)> sigma;
    std::function<double(const double* u, const double* x, int axis)> m_du, m_dx, m_duu, m_dxx,
        f_du, f_dx;
};

struct bias_variance {
    double bias = 0.0;
    double variance = 0.0;
};

// B = sqrt(c0) (kappa2/2) [ sum_i (2 du_i m du_i f + d2u_i m f)
//                         + sum_k (2 dx_k m dx_k f + d2x_k m f) ]
// V = kappa0^{d+p} sigma^2 / (f_S f)
bias_variance theoretical_bias_variance(const model_spec& model, const double* u, const double* x,
                                        const kernel_spec& ks, int d, int p, double c0);

// moment orders governing the uniform convergence rate
struct asymptotics_config {
    double rho = 2.0;  // local stationarity moment order
    double zeta = 4.0; // weight moment order, > 2
    double c0 = 1.0;   // bandwidth limit constant

    double r() const { return rho < 1.0 ? rho : 1.0; }
    void validate() const;
};

// sup-norm rate sqrt(log n / (n h^{d+p})) + h^2 + A_n^{-d r} h^{-p}
double rate_bound(int64_t n, double h, double A_n, int d, int p,
                  const asymptotics_config& cfg);

} // namespace lsrf
