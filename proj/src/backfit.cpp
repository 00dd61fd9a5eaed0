#include "lsrf/backfit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>

#include "lsrf/common.hpp"
#include "lsrf/quadrature.hpp"

namespace lsrf {

std::vector<double> make_unit_grid(int points) {
    if (points < 2) throw validation_error({"unit grid needs at least 2 points"});
    std::vector<double> x(static_cast<size_t>(points));
    for (int t = 0; t < points; ++t) x[static_cast<size_t>(t)] = t / (points - 1.0);
    return x;
}

namespace {

void check_space_args(const dataset& data, const kernel_spec& ks, double h,
                      const std::vector<double>& u) {
    data.validate();
    ks.validate();
    issue_list iss;
    iss.require(std::isfinite(h) && h > 0.0, "h: bandwidth must be positive, got " + format17(h));
    iss.require(static_cast<int>(u.size()) == data.sites.d,
                "u: expected " + std::to_string(data.sites.d) + " coordinates, got " +
                    std::to_string(u.size()));
    for (size_t i = 0; i < u.size(); ++i)
        iss.require(u[i] >= 0.0 && u[i] <= 1.0,
                    "u[" + std::to_string(i) + "]: must lie in [0,1], got " + format17(u[i]));
    iss.check();
}

// Space weights, cube indicator sums, and the derived local quantities shared
// by every pilot. S_all and S_cube accumulate in the same site order so that
// an all-inside data set gives S_cube == S_all bitwise.
struct local_sums {
    std::vector<double> w;      // boundary space weight per site
    std::vector<uint8_t> cube;  // covariate vector inside [0,1]^p
    double s_all = 0.0;
    double s_cube = 0.0;
    double s_y = 0.0;
    double f_S = 0.0;
    double n_unit = 0.0;
};

local_sums accumulate_local(const dataset& data, const kernel_spec& ks, double h,
                            const std::vector<double>& u) {
    const int d = data.sites.d;
    const int p = data.p;
    const int64_t n = data.n();
    local_sums ls;
    ls.w.resize(static_cast<size_t>(n));
    ls.cube.resize(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j) {
        double w = 1.0;
        for (int i = 0; i < d; ++i)
            w *= boundary_weight(ks, h, u[static_cast<size_t>(i)],
                                 data.sites.unit[static_cast<size_t>(j * d + i)]);
        bool inside = true;
        for (int l = 0; l < p; ++l) {
            double x = data.X[static_cast<size_t>(j * p + l)];
            if (x < 0.0 || x > 1.0) inside = false;
        }
        ls.w[static_cast<size_t>(j)] = w;
        ls.cube[static_cast<size_t>(j)] = inside ? 1 : 0;
        ls.s_all += w;
        if (inside) {
            ls.s_cube += w;
            ls.s_y += w * data.Y[static_cast<size_t>(j)];
        }
    }
    ls.f_S = ls.s_all / static_cast<double>(n);
    if (!(ls.f_S >= 1e-12))
        throw std::runtime_error("backfit: degenerate location, site density " +
                                 format17(ls.f_S) + " below 1e-12");
    ls.n_unit = ls.s_cube / ls.s_all * static_cast<double>(n);
    return ls;
}

} // namespace

double local_count(const dataset& data, const kernel_spec& ks, double h,
                   const std::vector<double>& u) {
    check_space_args(data, ks, h, u);
    return accumulate_local(data, ks, h, u).n_unit;
}

double model_constant(const dataset& data, const kernel_spec& ks, double h,
                      const std::vector<double>& u) {
    check_space_args(data, ks, h, u);
    auto ls = accumulate_local(data, ks, h, u);
    if (!(ls.s_cube > 0.0))
        throw std::runtime_error("backfit: degenerate location, no unit-cube covariates near u");
    return ls.s_y / ls.s_cube;
}

double pilot_estimates::p_lk(int l, int k, int a, int b) const {
    const int g = grid();
    if (l == k || l < 0 || k < 0 || l >= p || k >= p || a < 0 || a >= g || b < 0 || b >= g)
        throw std::out_of_range("p_lk: need two distinct covariate axes and grid indices");
    if (l > k) return p_lk(k, l, b, a);
    size_t pair = static_cast<size_t>(l) * p - static_cast<size_t>(l) * (l + 1) / 2 +
                  static_cast<size_t>(k - l - 1);
    return p_pair[(pair * g + static_cast<size_t>(a)) * g + static_cast<size_t>(b)];
}

void pilot_estimates::validate() const {
    issue_list iss;
    iss.require(d >= 1, "pilots.d: need d >= 1");
    iss.require(p >= 1, "pilots.p: need p >= 1");
    iss.require(static_cast<int>(u.size()) == d, "pilots.u: size must equal d");
    for (double v : u)
        iss.require(v >= 0.0 && v <= 1.0, "pilots.u: coordinates must lie in [0,1]");
    const int g = grid();
    iss.require(g >= 2, "pilots.x_grid: need at least 2 points");
    bool grid_ok = g >= 2 && x_grid.front() == 0.0 && x_grid.back() == 1.0;
    for (int t = 0; t + 1 < g; ++t)
        if (!(x_grid[static_cast<size_t>(t)] < x_grid[static_cast<size_t>(t) + 1]))
            grid_ok = false;
    iss.require(grid_ok, "pilots.x_grid: must increase strictly from 0 to 1");
    iss.require(std::isfinite(h) && h > 0.0, "pilots.h: must be positive");
    iss.require(std::isfinite(f_S) && f_S >= 0.0, "pilots.f_S: must be finite and nonnegative");
    iss.require(std::isfinite(n_unit) && n_unit > 0.0, "pilots.n_unit: must be positive");
    iss.require(std::isfinite(m0), "pilots.m0: must be finite");

    double cells = std::pow(static_cast<double>(g), p);
    iss.require(cells == static_cast<double>(p_hat.size()),
                "pilots.p_hat: size must be grid^p");
    size_t pg = static_cast<size_t>(p) * static_cast<size_t>(g);
    iss.require(p_l.size() == pg, "pilots.p_l: size must be p * grid");
    iss.require(m_l.size() == pg, "pilots.m_l: size must be p * grid");
    iss.require(m_l_degenerate.size() == pg, "pilots.m_l_degenerate: size must be p * grid");
    size_t pairs = static_cast<size_t>(p) * (p - 1) / 2;
    iss.require(p_pair.size() == pairs * static_cast<size_t>(g) * static_cast<size_t>(g),
                "pilots.p_pair: size must be p(p-1)/2 * grid^2");
    iss.check();

    for (double v : p_hat)
        iss.require(std::isfinite(v) && v >= 0.0, "pilots.p_hat: entries must be finite and >= 0");
    for (double v : p_l)
        iss.require(std::isfinite(v) && v >= 0.0, "pilots.p_l: entries must be finite and >= 0");
    for (double v : p_pair)
        iss.require(std::isfinite(v) && v >= 0.0,
                    "pilots.p_pair: entries must be finite and >= 0");
    for (size_t e = 0; e < m_l.size(); ++e)
        if (!m_l_degenerate[e])
            iss.require(std::isfinite(m_l[e]),
                        "pilots.m_l: non-degenerate entries must be finite");
    iss.check();
}

pilot_estimates compute_pilots(const dataset& data, const kernel_spec& ks, double h,
                               const std::vector<double>& u,
                               const std::vector<double>& x_grid, double denom_floor,
                               int threads) {
    check_space_args(data, ks, h, u);
    const int d = data.sites.d;
    const int p = data.p;
    const int g = static_cast<int>(x_grid.size());
    issue_list iss;
    iss.require(p >= 1, "data.p: the additive model needs at least one covariate");
    bool grid_ok = g >= 2 && x_grid.front() == 0.0 && x_grid.back() == 1.0;
    for (int t = 0; t + 1 < g; ++t)
        if (!(x_grid[static_cast<size_t>(t)] < x_grid[static_cast<size_t>(t) + 1]))
            grid_ok = false;
    iss.require(grid_ok, "x_grid: must increase strictly from 0 to 1");
    iss.require(std::isfinite(denom_floor) && denom_floor >= 0.0,
                "denom_floor: must be finite and nonnegative");
    if (p >= 1 && g >= 2)
        iss.require(std::pow(static_cast<double>(g), p) <= 2e7,
                    "x_grid: grid^p exceeds 2e7 cells, too fine for " + std::to_string(p) +
                        " covariates");
    iss.check();

    auto ls = accumulate_local(data, ks, h, u);
    if (!(ls.s_cube > 0.0))
        throw std::runtime_error("backfit: degenerate location, no unit-cube covariates near u");

    pilot_estimates out;
    out.d = d;
    out.p = p;
    out.u = u;
    out.x_grid = x_grid;
    out.h = h;
    out.f_S = ls.f_S;
    out.n_unit = ls.n_unit;
    out.f_bar_S = ls.s_cube / ls.n_unit;
    out.m0 = ls.s_y / ls.s_cube;

    // sites inside the unit cube, ascending so accumulators are order-stable
    std::vector<int64_t> J;
    for (int64_t j = 0; j < data.n(); ++j)
        if (ls.cube[static_cast<size_t>(j)]) J.push_back(j);

    const double reach = ks.support() * h;
    auto axis_range = [&](double x, int* lo, int* hi) {
        // grid points t with |x_t - x| < reach; kernel is exactly 0 outside
        *lo = static_cast<int>(std::lower_bound(x_grid.begin(), x_grid.end(), x - reach) -
                               x_grid.begin());
        *hi = static_cast<int>(std::upper_bound(x_grid.begin(), x_grid.end(), x + reach) -
                               x_grid.begin());
    };

    // per-site covariate normalizers: int_0^1 K((s-w)/h) ds, shared by every
    // evaluation against the same covariate value
    std::vector<double> cov_den(J.size() * static_cast<size_t>(p));
    for (size_t jj = 0; jj < J.size(); ++jj)
        for (int l = 0; l < p; ++l) {
            double w = data.X[static_cast<size_t>(J[jj] * p + l)];
            cov_den[jj * static_cast<size_t>(p) + static_cast<size_t>(l)] =
                h * (kernel_cdf(ks, (1.0 - w) / h) - kernel_cdf(ks, -w / h));
        }
    auto cov_weight = [&](size_t jj, int l, double x) {
        double w = data.X[static_cast<size_t>(J[jj] * p + l)];
        double num = kernel_value(ks, (x - w) / h);
        return num == 0.0 ? 0.0
                          : num / cov_den[jj * static_cast<size_t>(p) + static_cast<size_t>(l)];
    };

    size_t pg = static_cast<size_t>(p) * static_cast<size_t>(g);
    std::vector<double> p_l_raw(pg, 0.0), m_num(pg, 0.0);
    parallel_for(static_cast<int64_t>(pg), threads, [&](int64_t b, int64_t e) {
        for (int64_t row = b; row < e; ++row) {
            int l = static_cast<int>(row / g);
            double x = x_grid[static_cast<size_t>(row % g)];
            double acc = 0.0, accy = 0.0;
            for (size_t jj = 0; jj < J.size(); ++jj) {
                double xv = data.X[static_cast<size_t>(J[jj] * p + l)];
                if (std::fabs(x - xv) >= reach) continue;
                double t = ls.w[static_cast<size_t>(J[jj])] * cov_weight(jj, l, x);
                acc += t;
                accy += t * data.Y[static_cast<size_t>(J[jj])];
            }
            p_l_raw[static_cast<size_t>(row)] = acc;
            m_num[static_cast<size_t>(row)] = accy;
        }
    });

    size_t pairs = static_cast<size_t>(p) * (p - 1) / 2;
    std::vector<double> pair_raw(pairs * static_cast<size_t>(g) * static_cast<size_t>(g), 0.0);
    if (pairs > 0) {
        // enumerate (l, k) with l < k in the same order as the storage layout
        std::vector<std::pair<int, int>> axes;
        for (int l = 0; l < p; ++l)
            for (int k = l + 1; k < p; ++k) axes.emplace_back(l, k);
        parallel_for(static_cast<int64_t>(pairs) * g, threads, [&](int64_t b, int64_t e) {
            for (int64_t row = b; row < e; ++row) {
                auto [l, k] = axes[static_cast<size_t>(row / g)];
                int t = static_cast<int>(row % g);
                double x = x_grid[static_cast<size_t>(t)];
                double* dst = pair_raw.data() + static_cast<size_t>(row) * g;
                for (size_t jj = 0; jj < J.size(); ++jj) {
                    double xv = data.X[static_cast<size_t>(J[jj] * p + l)];
                    if (std::fabs(x - xv) >= reach) continue;
                    double wl = ls.w[static_cast<size_t>(J[jj])] * cov_weight(jj, l, x);
                    if (wl == 0.0) continue;
                    int lo, hi;
                    axis_range(data.X[static_cast<size_t>(J[jj] * p + k)], &lo, &hi);
                    for (int s = lo; s < hi; ++s)
                        dst[s] += wl * cov_weight(jj, k, x_grid[static_cast<size_t>(s)]);
                }
            }
        });
    }

    double cells_d = std::pow(static_cast<double>(g), p);
    size_t cells = static_cast<size_t>(cells_d);
    std::vector<double> joint_raw(cells, 0.0);
    size_t slab = cells / static_cast<size_t>(g); // entries per first-axis value
    parallel_for(g, threads, [&](int64_t b, int64_t e) {
        std::vector<int> idx(static_cast<size_t>(p)), lo(static_cast<size_t>(p)),
            hi(static_cast<size_t>(p));
        for (int64_t t1 = b; t1 < e; ++t1) {
            double x1 = x_grid[static_cast<size_t>(t1)];
            double* dst = joint_raw.data() + static_cast<size_t>(t1) * slab;
            for (size_t jj = 0; jj < J.size(); ++jj) {
                double xv = data.X[static_cast<size_t>(J[jj] * p)];
                if (std::fabs(x1 - xv) >= reach) continue;
                double w1 = ls.w[static_cast<size_t>(J[jj])] * cov_weight(jj, 0, x1);
                if (w1 == 0.0) continue;
                if (p == 1) {
                    dst[0] += w1;
                    continue;
                }
                // odometer over the support ranges of the remaining axes
                bool empty = false;
                for (int l = 1; l < p; ++l) {
                    axis_range(data.X[static_cast<size_t>(J[jj] * p + l)],
                               &lo[static_cast<size_t>(l)], &hi[static_cast<size_t>(l)]);
                    if (lo[static_cast<size_t>(l)] >= hi[static_cast<size_t>(l)]) empty = true;
                }
                if (empty) continue;
                for (int l = 1; l < p; ++l) idx[static_cast<size_t>(l)] = lo[static_cast<size_t>(l)];
                while (true) {
                    double v = w1;
                    size_t flat = 0;
                    for (int l = 1; l < p; ++l) {
                        v *= cov_weight(jj, l,
                                        x_grid[static_cast<size_t>(idx[static_cast<size_t>(l)])]);
                        flat = flat * static_cast<size_t>(g) +
                               static_cast<size_t>(idx[static_cast<size_t>(l)]);
                    }
                    dst[flat] += v;
                    int axis = p - 1;
                    while (axis >= 1) {
                        if (++idx[static_cast<size_t>(axis)] < hi[static_cast<size_t>(axis)]) break;
                        idx[static_cast<size_t>(axis)] = lo[static_cast<size_t>(axis)];
                        --axis;
                    }
                    if (axis < 1) break;
                }
            }
        }
    });

    out.p_l.resize(pg);
    out.m_l.resize(pg);
    out.m_l_degenerate.assign(pg, 0);
    for (size_t e = 0; e < pg; ++e) {
        out.p_l[e] = p_l_raw[e] / ls.n_unit;
        if (!(out.p_l[e] >= denom_floor)) {
            out.m_l_degenerate[e] = 1;
            out.m_l[e] = std::numeric_limits<double>::quiet_NaN();
        } else {
            out.m_l[e] = m_num[e] / p_l_raw[e];
        }
    }
    out.p_pair.resize(pair_raw.size());
    for (size_t e = 0; e < pair_raw.size(); ++e) out.p_pair[e] = pair_raw[e] / ls.n_unit;
    out.p_hat.resize(cells);
    for (size_t e = 0; e < cells; ++e) out.p_hat[e] = joint_raw[e] / ls.n_unit;
    out.validate();
    return out;
}

void backfit_options::validate() const {
    issue_list iss;
    iss.require(std::isfinite(tol) && tol > 0.0, "backfit.tol: must be positive");
    iss.require(max_iter >= 1, "backfit.max_iter: must be at least 1");
    iss.check();
}

void additive_model::validate() const {
    issue_list iss;
    for (double v : u)
        iss.require(v >= 0.0 && v <= 1.0, "model.u: coordinates must lie in [0,1]");
    iss.require(x_grid.size() >= 2, "model.x_grid: need at least 2 points");
    iss.require(std::isfinite(m0), "model.m0: must be finite");
    iss.require(iterations >= 0, "model.iterations: must be nonnegative");
    iss.require(std::isfinite(final_delta) && final_delta >= 0.0,
                "model.final_delta: must be finite and nonnegative");
    for (const auto& comp : components) {
        iss.require(comp.size() == x_grid.size(), "model.components: size must match x_grid");
        for (double v : comp)
            iss.require(std::isfinite(v), "model.components: entries must be finite");
    }
    iss.check();
}

additive_model smooth_backfit(const pilot_estimates& pilots, const backfit_options& opt) {
    pilots.validate();
    opt.validate();
    const int p = pilots.p;
    const int g = pilots.grid();
    const size_t gs = static_cast<size_t>(g);

    issue_list iss;
    int bad = 0;
    for (int l = 0; l < p && bad <= 3; ++l)
        for (int t = 0; t < g && bad <= 3; ++t)
            if (pilots.m_l_degenerate[static_cast<size_t>(l) * gs + static_cast<size_t>(t)]) {
                iss.add("pilots.p_l: marginal density degenerate at component " +
                        std::to_string(l + 1) + ", grid point " + std::to_string(t));
                ++bad;
            }
    if (!opt.initial.empty()) {
        iss.require(opt.initial.size() == static_cast<size_t>(p),
                    "backfit.initial: need one vector per covariate");
        for (const auto& comp : opt.initial) {
            iss.require(comp.size() == gs, "backfit.initial: size must match the grid");
            for (double v : comp)
                iss.require(std::isfinite(v), "backfit.initial: entries must be finite");
        }
    }
    iss.check();

    // trapezoid weights shared by the coupling integrals and the centering
    std::vector<double> qw(gs, 0.0);
    for (int t = 0; t + 1 < g; ++t) {
        double dx = pilots.x_grid[static_cast<size_t>(t) + 1] - pilots.x_grid[static_cast<size_t>(t)];
        qw[static_cast<size_t>(t)] += 0.5 * dx;
        qw[static_cast<size_t>(t) + 1] += 0.5 * dx;
    }
    std::vector<double> mass(static_cast<size_t>(p), 0.0); // Int p_l per component
    for (int l = 0; l < p; ++l)
        for (int t = 0; t < g; ++t)
            mass[static_cast<size_t>(l)] +=
                qw[static_cast<size_t>(t)] * pilots.p_l[static_cast<size_t>(l) * gs + static_cast<size_t>(t)];

    additive_model out;
    out.u = pilots.u;
    out.x_grid = pilots.x_grid;
    out.m0 = pilots.m0;
    out.components.assign(static_cast<size_t>(p), std::vector<double>(gs, 0.0));
    if (!opt.initial.empty()) out.components = opt.initial;

    std::vector<double> fresh(gs);
    for (int sweep = 1; sweep <= opt.max_iter; ++sweep) {
        double delta = 0.0;
        for (int l = 0; l < p; ++l) {
            auto& cur = out.components[static_cast<size_t>(l)];
            for (int t = 0; t < g; ++t) {
                double coupling = 0.0;
                for (int k = 0; k < p; ++k) {
                    if (k == l) continue;
                    const auto& mk = out.components[static_cast<size_t>(k)];
                    double integral = 0.0;
                    for (int s = 0; s < g; ++s)
                        integral += qw[static_cast<size_t>(s)] * mk[static_cast<size_t>(s)] *
                                    pilots.p_lk(l, k, t, s);
                    coupling += integral;
                }
                double pl = pilots.p_l[static_cast<size_t>(l) * gs + static_cast<size_t>(t)];
                fresh[static_cast<size_t>(t)] =
                    pilots.m_l[static_cast<size_t>(l) * gs + static_cast<size_t>(t)] -
                    coupling / pl - pilots.m0;
            }
            // re-center against the marginal so Int m_l p_l stays zero
            double lift = 0.0;
            for (int t = 0; t < g; ++t)
                lift += qw[static_cast<size_t>(t)] * fresh[static_cast<size_t>(t)] *
                        pilots.p_l[static_cast<size_t>(l) * gs + static_cast<size_t>(t)];
            lift /= mass[static_cast<size_t>(l)];
            for (int t = 0; t < g; ++t) {
                fresh[static_cast<size_t>(t)] -= lift;
                if (!std::isfinite(fresh[static_cast<size_t>(t)]))
                    throw std::runtime_error(
                        "backfit: numeric failure, non-finite update in component " +
                        std::to_string(l + 1));
                double change = std::fabs(fresh[static_cast<size_t>(t)] - cur[static_cast<size_t>(t)]);
                if (change > delta) delta = change;
            }
            cur = fresh;
        }
        out.deltas.push_back(delta);
        out.iterations = sweep;
        out.final_delta = delta;
        if (delta < opt.tol) {
            out.converged = true;
            break;
        }
    }
    out.validate();
    return out;
}

double additive_asymptotics(const additive_variance_spec& spec, const kernel_spec& ks,
                            int d, const double* u, double x_l) {
    ks.validate();
    issue_list iss;
    iss.require(static_cast<bool>(spec.sigma_l), "sigma_l: function is required");
    iss.require(static_cast<bool>(spec.f_S), "f_S: function is required");
    iss.require(static_cast<bool>(spec.p_l), "p_l: function is required");
    iss.require(d >= 1, "d: need d >= 1");
    iss.check();
    double sd = spec.sigma_l(u, x_l);
    double den = spec.f_S(u) * spec.p_l(u, x_l);
    if (!(den > 0.0) || !std::isfinite(den) || !std::isfinite(sd))
        throw std::runtime_error("backfit: singular point, f_S(u) p_l(u,x) = " + format17(den));
    double kappa0 = kernel_constants(ks).kappa0;
    return std::pow(kappa0, d + 1) * sd * sd / den;
}

} // namespace lsrf
