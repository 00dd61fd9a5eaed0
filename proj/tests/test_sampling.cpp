#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "lsrf/quadrature.hpp"
#include "lsrf/rng.hpp"
#include "lsrf/sampling.hpp"

using namespace lsrf;

namespace {

sampling_design uniform_design(int d, int64_t n, double A_n, uint64_t seed) {
    sampling_design dsn;
    dsn.d = d;
    dsn.n = n;
    dsn.A_n = A_n;
    dsn.seed = seed;
    return dsn;
}

// chi-square statistic of observed counts against expected probabilities
double chi_square_stat(const std::vector<int64_t>& obs, const std::vector<double>& prob,
                       int64_t n) {
    double stat = 0.0;
    for (size_t i = 0; i < obs.size(); ++i) {
        double e = prob[i] * static_cast<double>(n);
        double diff = static_cast<double>(obs[i]) - e;
        stat += diff * diff / e;
    }
    return stat;
}

} // namespace

TEST_CASE("density family names round trip") {
    for (auto f : {density_family::uniform, density_family::product_beta,
                   density_family::piecewise_constant})
        CHECK(density_family_from_string(to_string(f)) == f);
    CHECK_THROWS_AS(density_family_from_string("normal"), validation_error);
}

TEST_CASE("density validation lists problems") {
    density_spec ok;
    CHECK_NOTHROW(ok.validate(2));

    density_spec stray;
    stray.alpha = {2.0};
    CHECK_THROWS_WITH_AS(stray.validate(1),
                         doctest::Contains("only product_beta uses shape parameters"),
                         validation_error);

    density_spec small_shape;
    small_shape.family = density_family::product_beta;
    small_shape.alpha = {0.5, 2.0};
    small_shape.beta = {1.0, 1.0};
    CHECK_THROWS_WITH_AS(small_shape.validate(2), doctest::Contains(">= 1"), validation_error);

    density_spec arity;
    arity.family = density_family::product_beta;
    arity.alpha = {2.0};
    arity.beta = {2.0};
    CHECK_THROWS_AS(arity.validate(2), validation_error);

    density_spec negw;
    negw.family = density_family::piecewise_constant;
    negw.cells_per_axis = 2;
    negw.weights = {1.0, -1.0, 2.0, 2.0};
    CHECK_THROWS_WITH_AS(negw.validate(2), doctest::Contains("positive"), validation_error);

    density_spec off_mass;
    off_mass.family = density_family::piecewise_constant;
    off_mass.cells_per_axis = 2;
    off_mass.weights = {1.0, 1.0, 1.0, 2.0};
    CHECK_THROWS_WITH_AS(off_mass.validate(2), doctest::Contains("integrate"), validation_error);

    density_spec good_cells;
    good_cells.family = density_family::piecewise_constant;
    good_cells.cells_per_axis = 2;
    good_cells.weights = {0.4, 0.8, 1.2, 1.6};
    CHECK_NOTHROW(good_cells.validate(2));

    density_spec good_beta;
    good_beta.family = density_family::product_beta;
    good_beta.alpha = {2.0, 1.5};
    good_beta.beta = {2.0, 3.0};
    CHECK_NOTHROW(good_beta.validate(2));
    CHECK(good_beta.integral(2) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("density values match the closed forms") {
    density_spec beta22;
    beta22.family = density_family::product_beta;
    beta22.alpha = {2.0};
    beta22.beta = {2.0};
    double u = 0.3;
    // Beta(2,2) density 6u(1-u)
    CHECK(beta22.value(&u, 1) == doctest::Approx(6.0 * 0.3 * 0.7).epsilon(1e-12));
    double outside = 1.2;
    CHECK(beta22.value(&outside, 1) == 0.0);

    density_spec cells;
    cells.family = density_family::piecewise_constant;
    cells.cells_per_axis = 2;
    cells.weights = {0.4, 0.8, 1.2, 1.6};
    double p1[2] = {0.25, 0.25};
    double p2[2] = {0.25, 0.75};
    double p3[2] = {0.75, 0.25};
    double p4[2] = {0.75, 0.75};
    CHECK(cells.value(p1, 2) == 0.4);
    CHECK(cells.value(p2, 2) == 0.8);
    CHECK(cells.value(p3, 2) == 1.2);
    CHECK(cells.value(p4, 2) == 1.6);
    // points exactly at zero belong to the first cell
    double origin[2] = {0.0, 0.0};
    CHECK(cells.value(origin, 2) == 0.4);
}

TEST_CASE("design validation enforces the site density bound") {
    auto dsn = uniform_design(2, 100, 10.0, 1);
    CHECK_NOTHROW(dsn.validate());
    dsn.c0_lower = 2.0; // ratio is exactly 1 here
    CHECK_THROWS_WITH_AS(dsn.validate(), doctest::Contains("lower bound"), validation_error);
    dsn = uniform_design(2, 0, 10.0, 1);
    CHECK_THROWS_AS(dsn.validate(), validation_error);
}

TEST_CASE("uniform sites have the right moments and stay in the region") {
    const int64_t n = 100000;
    const double A_n = 20.0;
    auto dsn = uniform_design(2, n, A_n, 99);
    auto s = draw_sites(dsn);
    REQUIRE(s.n() == n);
    CHECK_NOTHROW(s.validate());
    double mean[2] = {0.0, 0.0};
    for (int64_t i = 0; i < n; ++i)
        for (int j = 0; j < 2; ++j) {
            double x = s.sites[static_cast<size_t>(2 * i + j)];
            CHECK(x >= 0.0);
            CHECK(x <= A_n);
            mean[j] += x;
        }
    for (int j = 0; j < 2; ++j) {
        mean[j] /= static_cast<double>(n);
        CHECK(std::fabs(mean[j] - A_n / 2.0) <=
              3.0 * A_n / std::sqrt(12.0 * static_cast<double>(n)));
    }
}

TEST_CASE("site draws are deterministic and thread invariant") {
    auto dsn = uniform_design(3, 4000, 5.0, 7);
    auto a = draw_sites(dsn, 1);
    auto b = draw_sites(dsn, 1);
    CHECK(a.sites == b.sites);
    auto c = draw_sites(dsn, 4);
    CHECK(a.sites == c.sites);
    dsn.seed = 8;
    auto other = draw_sites(dsn);
    CHECK(a.sites != other.sites);
}

TEST_CASE("scaling relation holds to full precision") {
    sampling_design dsn = uniform_design(2, 2000, 7.3, 21);
    dsn.density.family = density_family::product_beta;
    dsn.density.alpha = {2.0, 1.5};
    dsn.density.beta = {2.0, 3.0};
    auto s = draw_sites(dsn);
    for (size_t k = 0; k < s.sites.size(); ++k) CHECK(s.sites[k] == 7.3 * s.unit[k]);
}

TEST_CASE("unit histogram matches the target density") {
    const int64_t n = 100000;

    // uniform: 5 x 5 equal-probability bins
    {
        auto s = draw_sites(uniform_design(2, n, 1.0, 11));
        std::vector<int64_t> obs(25, 0);
        for (int64_t i = 0; i < n; ++i) {
            int bx = std::min(4, static_cast<int>(s.unit[static_cast<size_t>(2 * i)] * 5));
            int by = std::min(4, static_cast<int>(s.unit[static_cast<size_t>(2 * i + 1)] * 5));
            ++obs[static_cast<size_t>(5 * bx + by)];
        }
        std::vector<double> prob(25, 1.0 / 25.0);
        double stat = chi_square_stat(obs, prob, n);
        CHECK(chi_square_tail(stat, 24) > 0.01);
    }

    // product beta: 8 bins per axis with exact cell probabilities
    {
        sampling_design dsn = uniform_design(2, n, 1.0, 12);
        dsn.density.family = density_family::product_beta;
        dsn.density.alpha = {2.0, 1.5};
        dsn.density.beta = {2.0, 3.0};
        auto s = draw_sites(dsn);
        const int k = 8;
        auto edge_prob = [&](double a, double b, int bin) {
            double lo = static_cast<double>(bin) / k, hi = static_cast<double>(bin + 1) / k;
            return boost::math::ibeta(a, b, hi) - boost::math::ibeta(a, b, lo);
        };
        std::vector<double> prob(static_cast<size_t>(k * k));
        for (int bx = 0; bx < k; ++bx)
            for (int by = 0; by < k; ++by)
                prob[static_cast<size_t>(k * bx + by)] =
                    edge_prob(2.0, 2.0, bx) * edge_prob(1.5, 3.0, by);
        std::vector<int64_t> obs(static_cast<size_t>(k * k), 0);
        for (int64_t i = 0; i < n; ++i) {
            int bx = std::min(k - 1, static_cast<int>(s.unit[static_cast<size_t>(2 * i)] * k));
            int by = std::min(k - 1, static_cast<int>(s.unit[static_cast<size_t>(2 * i + 1)] * k));
            ++obs[static_cast<size_t>(k * bx + by)];
        }
        double stat = chi_square_stat(obs, prob, n);
        CHECK(chi_square_tail(stat, k * k - 1) > 0.01);
    }

    // piecewise constant: bins aligned with the weight cells
    {
        sampling_design dsn = uniform_design(2, n, 1.0, 13);
        dsn.density.family = density_family::piecewise_constant;
        dsn.density.cells_per_axis = 2;
        dsn.density.weights = {0.4, 0.8, 1.2, 1.6};
        auto s = draw_sites(dsn);
        std::vector<int64_t> obs(4, 0);
        for (int64_t i = 0; i < n; ++i) {
            int bx = s.unit[static_cast<size_t>(2 * i)] > 0.5 ? 1 : 0;
            int by = s.unit[static_cast<size_t>(2 * i + 1)] > 0.5 ? 1 : 0;
            ++obs[static_cast<size_t>(2 * bx + by)];
        }
        std::vector<double> prob = {0.1, 0.2, 0.3, 0.4};
        double stat = chi_square_stat(obs, prob, n);
        CHECK(chi_square_tail(stat, 3) > 0.01);
    }
}

TEST_CASE("regime classification reports the density ratio") {
    auto r1 = classify_regime(1000, 10.0 * std::sqrt(10.0), 2);
    CHECK(r1.ratio == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r1.pure);

    auto r2 = classify_regime(1000000, 10.0, 2);
    CHECK(r2.ratio == doctest::Approx(1e4).epsilon(1e-12));
    CHECK_FALSE(r2.pure);

    // n equal to the region volume gives ratio exactly 1
    auto r3 = classify_regime(100, 10.0, 2);
    CHECK(r3.ratio == 1.0);
    CHECK(r3.pure);

    auto strict = classify_regime(100, 10.0, 2, 0.5);
    CHECK_FALSE(strict.pure);
    CHECK(strict.threshold == 0.5);

    CHECK_THROWS_AS(classify_regime(0, 10.0, 2), validation_error);
    CHECK_THROWS_AS(classify_regime(10, -1.0, 2), validation_error);
}

TEST_CASE("one dimensional partition matches the interval definitions") {
    auto part = build_block_partition(10.0, 4.0, 1.0, 1);
    CHECK(part.per_axis == 2);
    CHECK(part.block_count() == 2);
    CHECK(part.sub_block_count() == 4);
    CHECK(part.sub_interval(0, 1) == std::pair<double, double>{0.0, 4.0});
    CHECK(part.sub_interval(0, 2) == std::pair<double, double>{4.0, 5.0});
    CHECK(part.sub_interval(1, 1) == std::pair<double, double>{5.0, 9.0});
    CHECK(part.sub_interval(1, 2) == std::pair<double, double>{9.0, 10.0});
    int64_t ell0 = 0, ell1 = 1;
    CHECK(part.interior(&ell0));
    CHECK(part.interior(&ell1));

    auto tight = build_block_partition(9.5, 4.0, 1.0, 1);
    CHECK(tight.per_axis == 2);
    int64_t last = 1;
    CHECK_FALSE(tight.interior(&last)); // second block sticks out past 9.5

    CHECK_THROWS_WITH_AS(build_block_partition(10.0, 1.0, 4.0, 1),
                         doctest::Contains("0 < A2 < A1 < A_n"), validation_error);
    CHECK_THROWS_AS(build_block_partition(3.0, 4.0, 1.0, 1), validation_error);
}

TEST_CASE("sub-block volumes are exact and sum to the block volume") {
    const double A1 = 3.7, A2 = 1.3;
    for (int d = 1; d <= 4; ++d) {
        double total = 0.0;
        for (int mask = 0; mask < (1 << d); ++mask) {
            int q = 0;
            for (int j = 0; j < d; ++j) q += (mask >> j) & 1;
            double v = block_volume(A1, A2, q, d);
            // canonical multiplication order pins the exact double
            double want = 1.0;
            for (int i = 0; i < q; ++i) want *= A1;
            for (int i = q; i < d; ++i) want *= A2;
            CHECK(v == want);
            total += v;
        }
        double a3 = std::pow(A1 + A2, d);
        CHECK(total == doctest::Approx(a3).epsilon(1e-12));
    }
    // all-big label gives A1^d
    CHECK(block_volume(A1, A2, 3, 3) == A1 * A1 * A1);
    CHECK_THROWS_AS(block_volume(A1, A2, 4, 3), std::invalid_argument);
}

TEST_CASE("default block scales follow the region size") {
    CHECK(default_block_scale_big(32.0) == doctest::Approx(std::pow(32.0, 0.3)).epsilon(1e-15));
    CHECK(default_block_scale_small(32.0) == doctest::Approx(std::pow(32.0, 0.15)).epsilon(1e-15));
    CHECK(default_block_scale_small(32.0) < default_block_scale_big(32.0));
}

TEST_CASE("every point lands in exactly one sub-block") {
    const double A_n = 10.0;
    auto part = build_block_partition(A_n, 4.0, 1.0, 2);
    const int64_t n = 100000;
    auto sites = draw_sites(uniform_design(2, n, A_n, 31));
    auto assign = assign_sites_to_blocks(sites, part);

    // brute force interval membership over all sub-blocks
    std::vector<int64_t> brute(static_cast<size_t>(part.sub_block_count()), 0);
    for (int64_t i = 0; i < n; ++i) {
        const double* s = sites.sites.data() + static_cast<size_t>(2 * i);
        int hits = 0;
        for (int64_t blk = 0; blk < part.block_count(); ++blk) {
            int64_t ell[2];
            part.decompose(blk, ell);
            for (int mask = 0; mask < 4; ++mask) {
                bool inside = true;
                for (int j = 0; j < 2; ++j) {
                    int eps = ((mask >> j) & 1) ? 1 : 2;
                    auto [lo, hi] = part.sub_interval(ell[j], eps);
                    bool in_j = (s[j] > lo && s[j] <= hi) || (s[j] == 0.0 && lo == 0.0);
                    if (!in_j) inside = false;
                }
                if (inside) {
                    ++hits;
                    ++brute[static_cast<size_t>((blk << 2) | mask)];
                }
            }
        }
        CHECK(hits == 1);
    }
    CHECK(brute == assign.counts);

    int64_t total = 0;
    for (int64_t c : assign.counts) total += c;
    CHECK(total == n);
    int64_t cube_total = 0;
    for (int64_t c : assign.cube_counts) cube_total += c;
    CHECK(cube_total == n);
}

TEST_CASE("assignment flags stay quiet under the uniform design") {
    const double A_n = 100.0;
    const int64_t n = 10000; // density ratio exactly 1
    auto part = build_block_partition(A_n, default_block_scale_big(A_n),
                                      default_block_scale_small(A_n), 2);
    for (uint64_t seed : {1u, 2u, 3u}) {
        auto sites = draw_sites(uniform_design(2, n, A_n, seed));
        auto assign = assign_sites_to_blocks(sites, part);
        CHECK(assign.flagged_cubes() == 0);
        CHECK(assign.flagged_sub_blocks() == 0);
        CHECK(assign.cube_bound ==
              doctest::Approx(2.0 * (std::log(1e4) + 1.0)).epsilon(1e-12));
    }
}

TEST_CASE("empty site sets produce no flags") {
    site_set empty;
    empty.d = 2;
    empty.A_n = 10.0;
    auto part = build_block_partition(10.0, 4.0, 1.0, 2);
    auto assign = assign_sites_to_blocks(empty, part);
    CHECK(assign.n == 0);
    CHECK(assign.flagged_cubes() == 0);
    CHECK(assign.flagged_sub_blocks() == 0);
    for (int64_t c : assign.counts) CHECK(c == 0);
}

TEST_CASE("sites at the origin follow the first-cell convention") {
    site_set one;
    one.d = 2;
    one.A_n = 10.0;
    one.unit = {0.0, 0.0};
    one.sites = {0.0, 0.0};
    auto part = build_block_partition(10.0, 4.0, 1.0, 2);
    auto assign = assign_sites_to_blocks(one, part);
    // block (0,0), both axes in the big part: mask 0b11
    CHECK(assign.counts[3] == 1);
    CHECK(assign.cube_counts[0] == 1);
}

TEST_CASE("invalid site sets are rejected") {
    site_set bad;
    bad.d = 2;
    bad.A_n = 10.0;
    bad.unit = {0.5, 1.2};
    bad.sites = {5.0, 12.0};
    auto part = build_block_partition(10.0, 4.0, 1.0, 2);
    CHECK_THROWS_WITH_AS(assign_sites_to_blocks(bad, part), doctest::Contains("outside"),
                         validation_error);

    site_set broken_scale;
    broken_scale.d = 2;
    broken_scale.A_n = 10.0;
    broken_scale.unit = {0.5, 0.5};
    broken_scale.sites = {5.0, 5.0000001};
    CHECK_THROWS_WITH_AS(broken_scale.validate(), doctest::Contains("scaling"), validation_error);

    site_set mismatch;
    mismatch.d = 2;
    mismatch.A_n = 5.0;
    auto good = draw_sites(uniform_design(2, 10, 10.0, 3));
    CHECK_THROWS_AS(assign_sites_to_blocks(good, part, -1.0), std::invalid_argument);
    mismatch = good;
    mismatch.A_n = 5.0;
    CHECK_THROWS_AS(assign_sites_to_blocks(mismatch, part), validation_error);
}
