#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "lsrf/common.hpp"
#include "lsrf/grid.hpp"
#include "lsrf/kernels.hpp"
#include "lsrf/quadrature.hpp"
#include "lsrf/rng.hpp"

using namespace lsrf;

namespace {

kernel_spec epan() { return kernel_spec{}; }

kernel_spec triweight() {
    kernel_spec s;
    s.family = kernel_family::triweight;
    return s;
}

kernel_spec uniform_kernel() {
    kernel_spec s;
    s.family = kernel_family::uniform;
    return s;
}

kernel_spec triangle_kernel() {
    kernel_spec s;
    s.family = kernel_family::custom;
    s.table_x = {-1.0, 0.0, 1.0};
    s.table_k = {0.0, 1.0, 0.0};
    return s;
}

} // namespace

TEST_CASE("kernel values match closed forms") {
    auto e = epan();
    CHECK(kernel_value(e, 0.0) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(kernel_value(e, 0.5) == doctest::Approx(0.5625).epsilon(1e-15));
    CHECK(kernel_value(e, 1.2) == 0.0);
    CHECK(kernel_value(e, -1.2) == 0.0);

    auto t = triweight();
    CHECK(kernel_value(t, 0.0) == doctest::Approx(35.0 / 32.0).epsilon(1e-15));
    CHECK(kernel_value(t, 0.5) == doctest::Approx((35.0 / 32.0) * 0.421875).epsilon(1e-15));
    CHECK(kernel_value(t, 1.0001) == 0.0);

    auto u = uniform_kernel();
    CHECK(kernel_value(u, 0.3) == 0.5);
    CHECK(kernel_value(u, 1.0) == 0.5);
    CHECK(kernel_value(u, 1.0001) == 0.0);

    auto tri = triangle_kernel();
    CHECK(kernel_value(tri, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(kernel_value(tri, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(kernel_value(tri, -0.25) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(kernel_value(tri, 1.5) == 0.0);
}

TEST_CASE("product kernel multiplies coordinates") {
    auto e = epan();
    double v[3] = {0.0, 0.5, 0.2};
    double expect = 0.75 * 0.5625 * 0.75 * (1.0 - 0.04);
    CHECK(kernel_value(e, v, 3) == doctest::Approx(expect).epsilon(1e-14));
    double w[2] = {0.0, 2.0};
    CHECK(kernel_value(e, w, 2) == 0.0);
}

TEST_CASE("kernels are symmetric and Lipschitz on a grid") {
    for (auto s : {epan(), triweight(), triangle_kernel()}) {
        double c2 = s.lipschitz();
        for (int i = 0; i <= 400; ++i) {
            double x = -2.0 + 4.0 * i / 400.0;
            CHECK(std::fabs(kernel_value(s, x) - kernel_value(s, -x)) <= 1e-12);
            if (i > 0) {
                double xp = -2.0 + 4.0 * (i - 1) / 400.0;
                double lhs = std::fabs(kernel_value(s, x) - kernel_value(s, xp));
                CHECK(lhs <= c2 * (x - xp) + 1e-12);
            }
        }
    }
}

TEST_CASE("first moment vanishes") {
    for (auto s : {epan(), triweight(), uniform_kernel(), triangle_kernel()}) {
        double c1 = s.support();
        auto xk = [&](double x) { return x * kernel_value(s, x); };
        CHECK(std::fabs(simpson_fixed(xk, -c1, c1, 2000)) <= 1e-12);
    }
}

TEST_CASE("kernel constants by quadrature") {
    auto ce = kernel_constants(epan());
    CHECK(std::fabs(ce.kappa0 - 0.6) <= 1e-10);
    CHECK(std::fabs(ce.kappa2 - 0.2) <= 1e-10);

    auto cu = kernel_constants(uniform_kernel());
    CHECK(std::fabs(cu.kappa0 - 0.5) <= 1e-10);
    CHECK(std::fabs(cu.kappa2 - 1.0 / 3.0) <= 1e-10);

    auto ct = kernel_constants(triweight());
    CHECK(std::fabs(ct.kappa0 - 350.0 / 429.0) <= 1e-10);
    CHECK(std::fabs(ct.kappa2 - 1.0 / 9.0) <= 1e-10);

    auto ctri = kernel_constants(triangle_kernel());
    CHECK(std::fabs(ctri.kappa0 - 2.0 / 3.0) <= 1e-10);
    CHECK(std::fabs(ctri.kappa2 - 1.0 / 6.0) <= 1e-10);
}

TEST_CASE("support and Lipschitz constants") {
    CHECK(epan().support() == 1.0);
    CHECK(epan().lipschitz() == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(triweight().lipschitz() == doctest::Approx(21.0 * std::sqrt(5.0) / 25.0).epsilon(1e-15));
    CHECK(std::isinf(uniform_kernel().lipschitz()));
    CHECK(triangle_kernel().support() == 1.0);
    CHECK(triangle_kernel().lipschitz() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("kernel cdf matches quadrature and endpoints") {
    for (auto s : {epan(), triweight(), uniform_kernel(), triangle_kernel()}) {
        CHECK(kernel_cdf(s, -1.0) == 0.0);
        CHECK(kernel_cdf(s, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(kernel_cdf(s, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
        for (double t : {-0.7, -0.3, 0.2, 0.6, 0.9}) {
            auto k = [&](double x) { return kernel_value(s, x); };
            // split at 0 so piecewise kernels have no interior kink per panel range
            double direct = simpson_fixed(k, -1.0, std::min(t, 0.0), 4000);
            if (t > 0.0) direct += simpson_fixed(k, 0.0, t, 4000);
            CHECK(kernel_cdf(s, t) == doctest::Approx(direct).epsilon(1e-9));
        }
    }
}

TEST_CASE("boundary weight interior values") {
    auto e = epan();
    double h = 0.1;
    CHECK(boundary_weight(e, h, 0.5, 0.5) == doctest::Approx(7.5).epsilon(1e-12));
    // interior identity: normalizer equals h away from the edges
    CHECK(boundary_weight(e, h, 0.5, 0.45) ==
          doctest::Approx(kernel_value(e, 0.5) / h).epsilon(1e-10));
    CHECK(boundary_weight(triangle_kernel(), h, 0.5, 0.5) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("boundary weight vanishes outside the unit interval") {
    auto e = epan();
    CHECK(boundary_weight(e, 0.1, -0.01, 0.5) == 0.0);
    CHECK(boundary_weight(e, 0.1, 1.01, 0.5) == 0.0);
    CHECK(boundary_weight(e, 0.1, 0.5, -0.01) == 0.0);
    CHECK(boundary_weight(e, 0.1, 0.5, 1.01) == 0.0);
}

TEST_CASE("boundary weight at the edge uses the clipped normalizer") {
    auto e = epan();
    double h = 0.1;
    // at w = 0 the normalizer is h * (1 - 1/2) = h/2
    CHECK(boundary_weight(e, h, 0.05, 0.0) ==
          doctest::Approx(kernel_value(e, 0.5) / (0.5 * h)).epsilon(1e-12));
    auto u = uniform_kernel();
    CHECK(boundary_weight(u, h, 0.05, 0.0) == doctest::Approx(1.0 / h).epsilon(1e-12));
}

namespace {

// midpoint rule: avoids sampling support-edge discontinuities at range endpoints
template <class F>
double midpoint_rule(F f, double a, double b, int n) {
    double dx = (b - a) / n, s = 0.0;
    for (int i = 0; i < n; ++i) s += f(a + (i + 0.5) * dx);
    return s * dx;
}

} // namespace

TEST_CASE("boundary weight integrates to one in its first argument") {
    for (auto s : {epan(), triweight(), uniform_kernel()}) {
        double h = 0.1, c1 = s.support();
        for (int i = 0; i <= 50; ++i) {
            double w = i / 50.0;
            double a = std::max(0.0, w - c1 * h);
            double b = std::min(1.0, w + c1 * h);
            auto f = [&](double v) { return boundary_weight(s, h, v, w); };
            CHECK(std::fabs(midpoint_rule(f, a, b, 200000) - 1.0) <= 1e-8);
        }
    }
}

TEST_CASE("kappa moments on the interior") {
    auto e = epan();
    double h = 0.1;
    CHECK(std::fabs(kappa_moment(e, h, 0.5, 0) - 1.0) <= 1e-8);
    CHECK(std::fabs(kappa_moment(e, h, 0.5, 1) - 0.5) <= 1e-8);
    CHECK(std::fabs(kappa_moment(e, h, 0.5, 2) - 0.252) <= 1e-6);
    // direct quadrature oracle with a fixed fine rule
    auto f2 = [&](double w) { return w * w * kernel_value(e, (0.5 - w) / h) / h; };
    double oracle = simpson_fixed(f2, 0.4, 0.6, 20000);
    CHECK(kappa_moment(e, h, 0.5, 2) == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("kappa moments near the edge match a fixed-rule oracle") {
    auto e = epan();
    double h = 0.1;
    for (double v : {0.0, 0.05, 0.97, 1.0}) {
        for (int j = 0; j <= 2; ++j) {
            double a = std::max(0.0, v - h), b = std::min(1.0, v + h);
            auto f = [&](double w) {
                double wj = j == 0 ? 1.0 : (j == 1 ? w : w * w);
                return wj * boundary_weight(e, h, v, w);
            };
            double oracle = simpson_fixed(f, a, b, 40000);
            CHECK(kappa_moment(e, h, v, j) == doctest::Approx(oracle).epsilon(1e-7));
        }
    }
}

TEST_CASE("bandwidth rules") {
    auto m = bandwidth::manual(0.2);
    CHECK(m.value == 0.2);
    CHECK(m.rule == bandwidth::rule_kind::manual);
    CHECK_THROWS_AS(bandwidth::manual(0.0), validation_error);
    CHECK_THROWS_AS(bandwidth::manual(-1.0), validation_error);

    // h = c * n^{-1/(d+p+4)}; with d=2, p=1 the exponent is -1/7
    auto r = bandwidth::rate(1.0, 128, 2, 1);
    CHECK(r.value == doctest::Approx(0.5).epsilon(1e-12));
    auto r2 = bandwidth::rate(2.0, 128, 2, 1);
    CHECK(r2.value == doctest::Approx(1.0).epsilon(1e-12));
    auto r3 = bandwidth::rate(1.0, 64000, 2, 1);
    CHECK(r3.value == doctest::Approx(std::pow(64000.0, -1.0 / 7.0)).epsilon(1e-14));
    CHECK_THROWS_AS(bandwidth::rate(-1.0, 100, 2, 1), validation_error);
}

TEST_CASE("custom table validation lists every violation") {
    kernel_spec bad;
    bad.family = kernel_family::custom;
    bad.table_x = {0.0, 1.0};
    bad.table_k = {-1.0, 0.5};
    try {
        bad.validate();
        CHECK(false);
    } catch (const validation_error& err) {
        std::string msg = err.what();
        CHECK(msg.find("at least 3 points") != std::string::npos);
        CHECK(msg.find("negative") != std::string::npos);
    }

    kernel_spec asym;
    asym.family = kernel_family::custom;
    asym.table_x = {-1.0, 0.0, 1.0};
    asym.table_k = {0.0, 1.0, 0.5};
    CHECK_THROWS_AS(asym.validate(), validation_error);

    kernel_spec unnorm;
    unnorm.family = kernel_family::custom;
    unnorm.table_x = {-1.0, 0.0, 1.0};
    unnorm.table_k = {0.0, 2.0, 0.0};
    try {
        unnorm.validate();
        CHECK(false);
    } catch (const validation_error& err) {
        CHECK(std::string(err.what()).find("integrate") != std::string::npos);
    }

    kernel_spec builtin_with_table;
    builtin_with_table.table_x = {-1.0, 0.0, 1.0};
    builtin_with_table.table_k = {0.0, 1.0, 0.0};
    CHECK_THROWS_AS(builtin_with_table.validate(), validation_error);

    CHECK_NOTHROW(epan().validate());
    CHECK_NOTHROW(triangle_kernel().validate());
}

TEST_CASE("kernel family names round trip") {
    for (auto f : {kernel_family::epanechnikov, kernel_family::triweight,
                   kernel_family::uniform, kernel_family::custom})
        CHECK(kernel_family_from_string(to_string(f)) == f);
    CHECK_THROWS_AS(kernel_family_from_string("gauss"), validation_error);
}

TEST_CASE("counter rng is reproducible and counter-sensitive") {
    counter_rng a(42, 7, 3), b(42, 7, 3);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    counter_rng c(42, 7, 4);
    CHECK(counter_rng(42, 7, 3).next_u64() != c.next_u64());
    CHECK(counter_rng(42, 8, 3).next_u64() != counter_rng(42, 7, 3).next_u64());
    CHECK(counter_rng(43, 7, 3).next_u64() != counter_rng(42, 7, 3).next_u64());
}

TEST_CASE("uniform01 stays inside the open unit interval") {
    counter_rng r(1, 0, 0);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 100000; ++i) {
        double u = r.uniform01();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("gaussian draws have the right moments") {
    counter_rng r(2024, 0, 0);
    int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = r.gaussian();
        s += z;
        s2 += z * z;
    }
    double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::fabs(mean) < 0.01);
    CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("poisson draws have the right mean across regimes") {
    counter_rng r(7, 1, 0);
    for (double lambda : {0.3, 5.0, 80.0}) {
        int n = 40000;
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += static_cast<double>(r.poisson(lambda));
        double se = std::sqrt(lambda / n);
        CHECK(std::fabs(s / n - lambda) < 5.0 * se);
    }
    CHECK(r.poisson(0.0) == 0);
}

TEST_CASE("cell grid snaps outward and indexes edges correctly") {
    box region;
    region.lo = {0.0, 0.0};
    region.hi = {1.0, 1.0};
    cell_grid g(region, 0.25);
    CHECK(g.dims()[0] == 4);
    CHECK(g.dims()[1] == 4);
    CHECK(g.cell_count() == 16);
    CHECK(g.cell_volume() == doctest::Approx(0.0625).epsilon(1e-15));

    CHECK(g.axis_cell(0.0, 0) == 0);
    CHECK(g.axis_cell(0.25, 0) == 0);
    CHECK(g.axis_cell(0.2500001, 0) == 1);
    CHECK(g.axis_cell(1.0, 0) == 3);
    CHECK(g.axis_cell(1.01, 0) == -1);
    CHECK(g.axis_cell(-0.01, 0) == -1);

    box r1;
    r1.lo = {0.0};
    r1.hi = {1.0};
    cell_grid g2(r1, 0.3);
    CHECK(g2.dims()[0] == 4);
    std::vector<double> pt = {1.1};
    CHECK(g2.locate(pt.data()) == 3);
}

TEST_CASE("grid index decomposition round trips") {
    box region;
    region.lo = {0.0, 0.0, 0.0};
    region.hi = {3.0, 4.0, 5.0};
    cell_grid g(region, 1.0);
    CHECK(g.cell_count() == 60);
    std::vector<int64_t> multi(3);
    for (int64_t idx = 0; idx < g.cell_count(); ++idx) {
        g.decompose(idx, multi.data());
        CHECK(g.index_of(multi.data()) == idx);
    }
    std::vector<double> center(3);
    g.decompose(0, multi.data());
    g.cell_center(multi.data(), center.data());
    CHECK(center[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("quadrature helpers") {
    auto cubic = [](double x) { return x * x * x; };
    CHECK(simpson_fixed(cubic, 0.0, 1.0, 2) == doctest::Approx(0.25).epsilon(1e-15));
    auto ex = [](double x) { return std::exp(x); };
    CHECK(simpson_adaptive(ex, 0.0, 1.0, 1e-12) ==
          doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-12));
    std::vector<double> y = {0.0, 1.0, 2.0};
    CHECK(trapezoid(y.data(), 3, 0.5) == doctest::Approx(1.0).epsilon(1e-15));

    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-8));
    CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021049).epsilon(1e-9));
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(chi_square_tail(3.841458821, 1) == doctest::Approx(0.05).epsilon(1e-7));
}

TEST_CASE("format17 round trips doubles exactly") {
    for (double x : {1.0 / 3.0, 0.1, 1e300, -2.5e-13, 0.0}) {
        std::string s = format17(x);
        CHECK(std::stod(s) == x);
    }
}

TEST_CASE("parallel_for covers the range exactly once") {
    std::vector<int> hits(1000, 0);
    parallel_for(1000, 4, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) hits[static_cast<size_t>(i)] += 1;
    });
    for (int h : hits) CHECK(h == 1);
    parallel_for(0, 4, [&](int64_t, int64_t) { CHECK(false); });
}
