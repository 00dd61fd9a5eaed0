#include "lsrf/quadrature.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace lsrf {

double simpson_fixed(const std::function<double(double)>& f, double a, double b, int panels) {
    if (panels < 2) panels = 2;
    if (panels % 2) ++panels;
    const double step = (b - a) / panels;
    double acc = f(a) + f(b);
    for (int i = 1; i < panels; ++i) {
        double x = a + step * i;
        acc += f(x) * (i % 2 ? 4.0 : 2.0);
    }
    double value = acc * step / 3.0;
    if (!std::isfinite(value))
        throw std::runtime_error("simpson: non-finite integrand on [" + std::to_string(a) +
                                 ", " + std::to_string(b) + "]");
    return value;
}

double simpson_adaptive(const std::function<double(double)>& f, double a, double b,
                        double tol, int panels0, int max_doublings) {
    if (b <= a) return 0.0;
    double prev = simpson_fixed(f, a, b, panels0);
    int panels = panels0;
    for (int k = 0; k < max_doublings; ++k) {
        panels *= 2;
        double cur = simpson_fixed(f, a, b, panels);
        if (std::fabs(cur - prev) < tol) return cur;
        prev = cur;
    }
    throw std::runtime_error("simpson: failed to reach tolerance " + std::to_string(tol));
}

double trapezoid(const double* y, int n, double dx) {
    if (n < 2) return 0.0;
    double acc = 0.5 * (y[0] + y[n - 1]);
    for (int i = 1; i < n - 1; ++i) acc += y[i];
    return acc * dx;
}

double normal_cdf(double x) {
    static const boost::math::normal_distribution<double> nd(0.0, 1.0);
    return boost::math::cdf(nd, x);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
    static const boost::math::normal_distribution<double> nd(0.0, 1.0);
    return boost::math::quantile(nd, p);
}

double chi_square_tail(double x, double dof) {
    if (x <= 0.0) return 1.0;
    boost::math::chi_squared_distribution<double> dist(dof);
    return boost::math::cdf(boost::math::complement(dist, x));
}

} // namespace lsrf
