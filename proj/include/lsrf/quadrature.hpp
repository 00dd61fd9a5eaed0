#pragma once

#include <functional>

namespace lsrf {

// Composite Simpson rule on [a,b] with `panels` even subintervals.
double simpson_fixed(const std::function<double(double)>& f, double a, double b, int panels);

// Composite Simpson with panel doubling: starts at `panels0` panels (>= 200,
// i.e. >= 201 nodes) and doubles until two successive results differ by less
// than tol. Throws on non-finite integrand values or failure to settle.
double simpson_adaptive(const std::function<double(double)>& f, double a, double b,
                        double tol, int panels0 = 200, int max_doublings = 14);

// Trapezoid rule for samples y on an equispaced grid with step dx.
double trapezoid(const double* y, int n, double dx);

// Standard normal CDF and quantile.
double normal_cdf(double x);
double normal_quantile(double p);

// Chi-square upper tail probability P(Chi2_dof > x).
double chi_square_tail(double x, double dof);

} // namespace lsrf
