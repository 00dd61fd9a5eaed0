#include "lsrf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lsrf/common.hpp"
#include "lsrf/quadrature.hpp"

namespace lsrf {

std::string to_string(kernel_family f) {
    switch (f) {
        case kernel_family::epanechnikov: return "epanechnikov";
        case kernel_family::triweight: return "triweight";
        case kernel_family::uniform: return "uniform";
        case kernel_family::custom: return "custom";
    }
    return "unknown";
}

kernel_family kernel_family_from_string(const std::string& name) {
    if (name == "epanechnikov") return kernel_family::epanechnikov;
    if (name == "triweight") return kernel_family::triweight;
    if (name == "uniform") return kernel_family::uniform;
    if (name == "custom") return kernel_family::custom;
    throw validation_error({"kernel.family: unknown family '" + name + "'"});
}

double kernel_spec::support() const {
    if (family != kernel_family::custom) return 1.0;
    // smallest radius beyond which the piecewise-linear kernel is identically zero
    double c1 = 0.0;
    size_t m = std::min(table_x.size(), table_k.size());
    for (size_t i = 1; i < m; ++i)
        if (table_k[i - 1] > 0.0 || table_k[i] > 0.0)
            c1 = std::max({c1, std::fabs(table_x[i - 1]), std::fabs(table_x[i])});
    return c1;
}

double kernel_spec::lipschitz() const {
    switch (family) {
        case kernel_family::epanechnikov:
            return 1.5;
        case kernel_family::triweight:
            // sup |K'| = (35/32) * 6 * max_x x(1-x^2)^2 attained at x = 1/sqrt(5)
            return 21.0 * std::sqrt(5.0) / 25.0;
        case kernel_family::uniform:
            return std::numeric_limits<double>::infinity();
        case kernel_family::custom: {
            double c2 = 0.0;
            size_t m = std::min(table_x.size(), table_k.size());
            for (size_t i = 1; i < m; ++i) {
                double dx = table_x[i] - table_x[i - 1];
                if (dx > 0.0) c2 = std::max(c2, std::fabs(table_k[i] - table_k[i - 1]) / dx);
            }
            return c2;
        }
    }
    return 0.0;
}

namespace {

double interp_table(const std::vector<double>& xs, const std::vector<double>& ks, double v) {
    if (xs.empty() || v <= xs.front() || v >= xs.back()) {
        // outside the table counts as outside the support unless endpoints are interior
        if (!xs.empty() && v == xs.front()) return ks.front();
        if (!xs.empty() && v == xs.back()) return ks.back();
        return 0.0;
    }
    auto it = std::upper_bound(xs.begin(), xs.end(), v);
    size_t i = static_cast<size_t>(it - xs.begin());
    double t = (v - xs[i - 1]) / (xs[i] - xs[i - 1]);
    return ks[i - 1] + t * (ks[i] - ks[i - 1]);
}

// Exact integral of the piecewise-linear table from its left end to t.
double table_cdf(const std::vector<double>& xs, const std::vector<double>& ks, double t) {
    if (xs.empty() || t <= xs.front()) return 0.0;
    double acc = 0.0;
    for (size_t i = 1; i < xs.size(); ++i) {
        double a = xs[i - 1], b = xs[i];
        if (t >= b) {
            acc += 0.5 * (ks[i - 1] + ks[i]) * (b - a);
        } else {
            double frac = (t - a) / (b - a);
            double kt = ks[i - 1] + frac * (ks[i] - ks[i - 1]);
            acc += 0.5 * (ks[i - 1] + kt) * (t - a);
            break;
        }
    }
    return acc;
}

} // namespace

void kernel_spec::validate() const {
    issue_list iss;
    if (family == kernel_family::custom) {
        iss.require(table_x.size() >= 3, "kernel.table: needs at least 3 points");
        iss.require(table_x.size() == table_k.size(), "kernel.table: x/k length mismatch");
        bool sorted = true, finite = true, nonneg = true;
        for (size_t i = 0; i < table_x.size(); ++i) {
            if (i && table_x[i] <= table_x[i - 1]) sorted = false;
            if (!std::isfinite(table_x[i]) || (i < table_k.size() && !std::isfinite(table_k[i])))
                finite = false;
            if (i < table_k.size() && table_k[i] < 0.0) nonneg = false;
        }
        iss.require(sorted, "kernel.table: x grid must be strictly ascending");
        iss.require(finite, "kernel.table: non-finite entries");
        iss.require(nonneg, "kernel.table: negative kernel values");
        if (iss.empty()) {
            // symmetry on the table's own grid
            bool symmetric = true;
            for (double x : table_x)
                if (std::fabs(interp_table(table_x, table_k, x) -
                              interp_table(table_x, table_k, -x)) > 1e-12)
                    symmetric = false;
            iss.require(symmetric, "kernel.table: kernel must be symmetric about 0");
            double mass = table_cdf(table_x, table_k, table_x.back());
            iss.require(std::fabs(mass - 1.0) <= 1e-8,
                        "kernel.table: kernel must integrate to 1 (got " + format17(mass) + ")");
        }
    } else {
        iss.require(table_x.empty() && table_k.empty(),
                    "kernel.table: only valid with the custom family");
    }
    iss.check();
}

double kernel_value(const kernel_spec& spec, double v) {
    switch (spec.family) {
        case kernel_family::epanechnikov: {
            double a = std::fabs(v);
            return a > 1.0 ? 0.0 : 0.75 * (1.0 - v * v);
        }
        case kernel_family::triweight: {
            double a = std::fabs(v);
            if (a > 1.0) return 0.0;
            double w = 1.0 - v * v;
            return (35.0 / 32.0) * w * w * w;
        }
        case kernel_family::uniform:
            return std::fabs(v) > 1.0 ? 0.0 : 0.5;
        case kernel_family::custom:
            return interp_table(spec.table_x, spec.table_k, v);
    }
    return 0.0;
}

double kernel_value(const kernel_spec& spec, const double* v, int k) {
    double prod = 1.0;
    for (int i = 0; i < k; ++i) prod *= kernel_value(spec, v[i]);
    return prod;
}

double kernel_cdf(const kernel_spec& spec, double t) {
    switch (spec.family) {
        case kernel_family::epanechnikov:
            if (t <= -1.0) return 0.0;
            if (t >= 1.0) return 1.0;
            return 0.5 + 0.75 * t - 0.25 * t * t * t;
        case kernel_family::triweight: {
            if (t <= -1.0) return 0.0;
            if (t >= 1.0) return 1.0;
            double t2 = t * t;
            return 0.5 + (35.0 / 32.0) * t * (1.0 + t2 * (-1.0 + t2 * (0.6 - t2 / 7.0)));
        }
        case kernel_family::uniform:
            if (t <= -1.0) return 0.0;
            if (t >= 1.0) return 1.0;
            return 0.5 * (t + 1.0);
        case kernel_family::custom:
            return table_cdf(spec.table_x, spec.table_k, t);
    }
    return 0.0;
}

kernel_constants_t kernel_constants(const kernel_spec& spec) {
    spec.validate();
    const double c1 = spec.support();
    auto k2 = [&spec](double x) { double k = kernel_value(spec, x); return k * k; };
    auto x2k = [&spec](double x) { return x * x * kernel_value(spec, x); };
    kernel_constants_t out;
    out.kappa0 = simpson_adaptive(k2, -c1, c1, 1e-11);
    out.kappa2 = simpson_adaptive(x2k, -c1, c1, 1e-11);
    return out;
}

bandwidth bandwidth::manual(double h) {
    if (!(h > 0.0)) throw validation_error({"kernel.h: bandwidth must be positive"});
    bandwidth b;
    b.value = h;
    b.rule = rule_kind::manual;
    return b;
}

bandwidth bandwidth::rate(double c, int64_t n, int d, int p) {
    issue_list iss;
    iss.require(c > 0.0, "kernel.c: rate constant must be positive");
    iss.require(n >= 1, "kernel rate rule: n must be >= 1");
    iss.require(d >= 1 && p >= 0, "kernel rate rule: invalid dimensions");
    iss.check();
    bandwidth b;
    b.rule = rule_kind::rate;
    b.c = c;
    b.value = c * std::pow(static_cast<double>(n), -1.0 / (d + p + 4));
    return b;
}

double boundary_weight(const kernel_spec& spec, double h, double v, double w) {
    if (v < 0.0 || v > 1.0 || w < 0.0 || w > 1.0) return 0.0;
    double num = kernel_value(spec, (v - w) / h);
    if (num == 0.0) return 0.0;
    // int_0^1 K((s-w)/h) ds = h * (CDF((1-w)/h) - CDF(-w/h))
    double den = h * (kernel_cdf(spec, (1.0 - w) / h) - kernel_cdf(spec, -w / h));
    if (den < 1e-300)
        throw std::runtime_error("boundary_weight: vanishing normalizer at w = " + format17(w));
    return num / den;
}

double kappa_moment(const kernel_spec& spec, double h, double v, int j) {
    if (v < 0.0 || v > 1.0) throw std::invalid_argument("kappa_moment: v must be in [0,1]");
    if (j < 0 || j > 2) throw std::invalid_argument("kappa_moment: j must be 0, 1, or 2");
    const double c1 = spec.support();
    // substitute w = v - h t so the kernel support edge sits exactly on a panel endpoint
    double t_lo = std::max(-c1, (v - 1.0) / h);
    double t_hi = std::min(c1, v / h);
    if (t_hi <= t_lo) return 0.0;
    auto f = [&](double t) {
        double w = v - h * t;
        if (w < 0.0) w = 0.0;
        if (w > 1.0) w = 1.0;
        double den = h * (kernel_cdf(spec, (1.0 - w) / h) - kernel_cdf(spec, -w / h));
        if (den < 1e-300)
            throw std::runtime_error("kappa_moment: vanishing normalizer at w = " + format17(w));
        double wj = j == 0 ? 1.0 : (j == 1 ? w : w * w);
        return wj * kernel_value(spec, t) * h / den;
    };
    return simpson_adaptive(f, t_lo, t_hi, 1e-9);
}

} // namespace lsrf
