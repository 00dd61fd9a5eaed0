#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lsrf {

enum class kernel_family { epanechnikov, triweight, uniform, custom };

std::string to_string(kernel_family f);
kernel_family kernel_family_from_string(const std::string& name);

// One-dimensional symmetric compact-support kernel. The custom family is a
// piecewise-linear table on an ascending grid; built-in families have
// closed-form values, CDFs, and constants.
struct kernel_spec {
    kernel_family family = kernel_family::epanechnikov;
    std::vector<double> table_x; // custom only
    std::vector<double> table_k; // custom only

    double support() const;   // C1: K(v) = 0 for |v| > C1
    double lipschitz() const; // C2: sup |K'| (infinity for the uniform kernel)
    void validate() const;    // throws validation_error listing all violations
};

struct kernel_constants_t {
    double kappa0; // int K^2
    double kappa2; // int v^2 K
};

// Bandwidth with its selection rule. The rate rule is h = c * n^(-1/(d+p+4)).
struct bandwidth {
    double value = 0.0;
    enum class rule_kind { manual, rate } rule = rule_kind::manual;
    double c = 1.0;

    static bandwidth manual(double h);
    static bandwidth rate(double c, int64_t n, int d, int p);
};

// Base kernel K(v); 0 outside the support.
double kernel_value(const kernel_spec& spec, double v);

// Product kernel over k coordinates.
double kernel_value(const kernel_spec& spec, const double* v, int k);

// Exact kernel CDF: int_{-C1}^{t} K. Clamps outside the support.
double kernel_cdf(const kernel_spec& spec, double t);

// (kappa0, kappa2) by Simpson quadrature with panel doubling, abs error < 1e-10.
kernel_constants_t kernel_constants(const kernel_spec& spec);

// Boundary-corrected weight K_h(v,w) = K((v-w)/h) / int_0^1 K((s-w)/h) ds for
// v,w in [0,1]; 0 when either argument lies outside the unit interval. The
// denominator uses the exact kernel CDF. For every w the weight integrates to
// 1 over v in [0,1], which removes boundary bias.
double boundary_weight(const kernel_spec& spec, double h, double v, double w);

// kappa_j(v) = int_0^1 w^j K_h(v,w) dw for j in {0,1,2}; Simpson quadrature
// with >= 201 nodes and panel doubling, abs error < 1e-8.
double kappa_moment(const kernel_spec& spec, double h, double v, int j);

} // namespace lsrf
