#include "lsrf/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace lsrf {

void dataset::validate() const {
    sites.validate();
    issue_list iss;
    const int64_t nn = n();
    iss.require(p >= 0 && p <= 8, "data.p: covariate count must be between 0 and 8");
    iss.require(static_cast<int64_t>(X.size()) == nn * p,
                "data.X: need one covariate row per site");
    iss.require(static_cast<int64_t>(Y.size()) == nn, "data.Y: need one response per site");
    iss.check();
    int listed = 0, extra = 0;
    for (size_t k = 0; k < X.size(); ++k)
        if (!std::isfinite(X[k])) {
            if (listed < 10) {
                iss.add("data.X: non-finite entry at site " + std::to_string(k / p) +
                        ", covariate " + std::to_string(k % p));
                ++listed;
            } else
                ++extra;
        }
    for (size_t k = 0; k < Y.size(); ++k)
        if (!std::isfinite(Y[k])) {
            if (listed < 10) {
                iss.add("data.Y: non-finite entry at site " + std::to_string(k));
                ++listed;
            } else
                ++extra;
        }
    if (extra > 0) iss.add("data: " + std::to_string(extra) + " further non-finite entries");
    iss.check();
}

int64_t eval_grid::u_count() const {
    int64_t out = 1;
    for (const auto& a : u_axes) out *= static_cast<int64_t>(a.size());
    return out;
}

int64_t eval_grid::x_count() const {
    int64_t out = 1;
    for (const auto& a : x_axes) out *= static_cast<int64_t>(a.size());
    return out;
}

void eval_grid::u_point(int64_t flat, double* out) const {
    for (int j = dim_u() - 1; j >= 0; --j) {
        const auto& axis = u_axes[static_cast<size_t>(j)];
        out[j] = axis[static_cast<size_t>(flat % static_cast<int64_t>(axis.size()))];
        flat /= static_cast<int64_t>(axis.size());
    }
}

void eval_grid::x_point(int64_t flat, double* out) const {
    for (int j = dim_x() - 1; j >= 0; --j) {
        const auto& axis = x_axes[static_cast<size_t>(j)];
        out[j] = axis[static_cast<size_t>(flat % static_cast<int64_t>(axis.size()))];
        flat /= static_cast<int64_t>(axis.size());
    }
}

void eval_grid::validate() const {
    issue_list iss;
    iss.require(!u_axes.empty(), "grid.u: need at least one spatial axis");
    iss.require(u_axes.size() <= 8, "grid.u: at most 8 spatial axes");
    iss.require(x_axes.size() <= 8, "grid.x: at most 8 covariate axes");
    for (const auto& a : u_axes) {
        if (a.empty()) {
            iss.add("grid.u: axes must be nonempty");
            continue;
        }
        for (size_t k = 0; k < a.size(); ++k) {
            if (!std::isfinite(a[k]) || a[k] < 0.0 || a[k] > 1.0) {
                iss.add("grid.u: axis values must lie in [0,1]");
                break;
            }
            if (k > 0 && a[k] <= a[k - 1]) {
                iss.add("grid.u: axis values must increase strictly");
                break;
            }
        }
    }
    for (const auto& a : x_axes) {
        if (a.empty()) {
            iss.add("grid.x: axes must be nonempty");
            continue;
        }
        for (size_t k = 0; k < a.size(); ++k) {
            if (!std::isfinite(a[k])) {
                iss.add("grid.x: axis values must be finite");
                break;
            }
            if (k > 0 && a[k] <= a[k - 1]) {
                iss.add("grid.x: axis values must increase strictly");
                break;
            }
        }
    }
    iss.check();
    if (u_boundary.size() != static_cast<size_t>(u_count()))
        throw validation_error({"grid: boundary marks must cover every spatial point"});
}

namespace {

std::vector<double> linspace(double a, double b, int k) {
    std::vector<double> out(static_cast<size_t>(k));
    if (k == 1) {
        out[0] = 0.5 * (a + b);
        return out;
    }
    for (int i = 0; i < k; ++i)
        out[static_cast<size_t>(i)] = a + (b - a) * static_cast<double>(i) / (k - 1);
    return out;
}

} // namespace

eval_grid make_eval_grid(int d, int p, double h, double c1, int u_points_per_axis,
                         const std::vector<double>& x_lo, const std::vector<double>& x_hi,
                         int x_points_per_axis, bool full_cube) {
    issue_list iss;
    iss.require(d >= 1 && d <= 8, "grid.d: dimension must be between 1 and 8");
    iss.require(p >= 0 && p <= 8, "grid.p: covariate count must be between 0 and 8");
    iss.require(std::isfinite(h) && h > 0.0, "grid.h: bandwidth must be positive");
    iss.require(std::isfinite(c1) && c1 > 0.0, "grid.c1: kernel support must be positive");
    iss.require(u_points_per_axis >= 1, "grid.u_points: need at least one point per axis");
    iss.require(p == 0 || x_points_per_axis >= 1, "grid.x_points: need at least one point per axis");
    iss.require(static_cast<int>(x_lo.size()) == p && static_cast<int>(x_hi.size()) == p,
                "grid.x_lo/x_hi: need one bound pair per covariate");
    iss.check();
    for (int k = 0; k < p; ++k)
        if (!(std::isfinite(x_lo[static_cast<size_t>(k)]) &&
              std::isfinite(x_hi[static_cast<size_t>(k)]) &&
              x_lo[static_cast<size_t>(k)] < x_hi[static_cast<size_t>(k)]))
            iss.add("grid.x_lo/x_hi: bounds must be finite with x_lo < x_hi");
    iss.check();
    const double margin = c1 * h;
    if (!full_cube && !(margin < 0.5))
        throw validation_error({"grid: bandwidth too large, interior set [c1 h, 1 - c1 h] is "
                                "empty at c1 h = " +
                                format17(margin)});
    eval_grid out;
    double a = full_cube ? 0.0 : margin;
    double b = full_cube ? 1.0 : 1.0 - margin;
    for (int j = 0; j < d; ++j) out.u_axes.push_back(linspace(a, b, u_points_per_axis));
    for (int k = 0; k < p; ++k)
        out.x_axes.push_back(linspace(x_lo[static_cast<size_t>(k)], x_hi[static_cast<size_t>(k)],
                                      x_points_per_axis));
    out.u_boundary.assign(static_cast<size_t>(out.u_count()), 0);
    std::vector<double> u(static_cast<size_t>(d));
    for (int64_t f = 0; f < out.u_count(); ++f) {
        out.u_point(f, u.data());
        for (int j = 0; j < d; ++j)
            if (u[static_cast<size_t>(j)] < margin || u[static_cast<size_t>(j)] > 1.0 - margin)
                out.u_boundary[static_cast<size_t>(f)] = 1;
    }
    return out;
}

int64_t estimate_field::degenerate_count() const {
    int64_t out = 0;
    for (uint8_t f : degenerate) out += f;
    return out;
}

void estimate_field::validate() const {
    issue_list iss;
    iss.require(value.size() == static_cast<size_t>(grid.size()), "field: value size mismatch");
    iss.require(denom.size() == value.size() && ess.size() == value.size() &&
                    degenerate.size() == value.size(),
                "field: column sizes disagree");
    iss.check();
    for (size_t k = 0; k < value.size(); ++k)
        if (!std::isfinite(value[k]) && !degenerate[k])
            iss.add("field: non-finite value at non-degenerate point " + std::to_string(k));
    iss.check();
}

namespace {

// product of boundary-corrected spatial weights, axes in ascending order
inline double spatial_weight(const kernel_spec& ks, double h, const double* u, const double* s0,
                             int d) {
    double out = 1.0;
    for (int i = 0; i < d; ++i) out *= boundary_weight(ks, h, u[i], s0[i]);
    return out;
}

// uniform cell buckets over the unit cube in rescaled coordinates
struct site_bucket_index {
    int d = 1;
    int64_t per_axis = 1;
    std::vector<int64_t> order; // site ids grouped by cell
    std::vector<int64_t> start; // prefix offsets, one per cell plus sentinel

    int64_t axis_cell(double x) const {
        if (x <= 0.0) return 0;
        int64_t c = static_cast<int64_t>(std::ceil(x * static_cast<double>(per_axis))) - 1;
        return std::min(std::max<int64_t>(c, 0), per_axis - 1);
    }
};

site_bucket_index build_bucket_index(const site_set& sites, double window) {
    site_bucket_index idx;
    idx.d = sites.d;
    const int64_t n = sites.n();
    // cap the bucket count near n so degenerate bandwidths cannot blow memory
    int64_t wanted = window >= 1.0 ? 1 : static_cast<int64_t>(std::ceil(1.0 / window));
    int64_t cap = std::max<int64_t>(
        1, static_cast<int64_t>(std::pow(static_cast<double>(std::max<int64_t>(n, 1)),
                                         1.0 / sites.d)) +
               1);
    idx.per_axis = std::min(wanted, cap);
    int64_t cells = 1;
    for (int j = 0; j < idx.d; ++j) cells *= idx.per_axis;
    std::vector<int64_t> cell_of(static_cast<size_t>(n));
    std::vector<int64_t> count(static_cast<size_t>(cells) + 1, 0);
    for (int64_t i = 0; i < n; ++i) {
        const double* s = sites.unit.data() + static_cast<size_t>(i) * idx.d;
        int64_t flat = 0;
        for (int j = 0; j < idx.d; ++j) flat = flat * idx.per_axis + idx.axis_cell(s[j]);
        cell_of[static_cast<size_t>(i)] = flat;
        ++count[static_cast<size_t>(flat) + 1];
    }
    for (size_t c = 1; c < count.size(); ++c) count[c] += count[c - 1];
    idx.start = count;
    idx.order.resize(static_cast<size_t>(n));
    std::vector<int64_t> cursor(idx.start.begin(), idx.start.end() - 1);
    for (int64_t i = 0; i < n; ++i)
        idx.order[static_cast<size_t>(cursor[static_cast<size_t>(
            cell_of[static_cast<size_t>(i)])]++)] = i;
    return idx;
}

// ascending site ids drawn from every cell overlapping the search box
void gather_candidates(const site_bucket_index& idx, const double* u, double reach,
                       std::vector<int64_t>& out) {
    out.clear();
    const int d = idx.d;
    int64_t lo[8], hi[8], cur[8];
    for (int j = 0; j < d; ++j) {
        lo[j] = idx.axis_cell(u[j] - reach);
        hi[j] = idx.axis_cell(u[j] + reach);
        cur[j] = lo[j];
    }
    while (true) {
        int64_t flat = 0;
        for (int j = 0; j < d; ++j) flat = flat * idx.per_axis + cur[j];
        for (int64_t k = idx.start[static_cast<size_t>(flat)];
             k < idx.start[static_cast<size_t>(flat) + 1]; ++k)
            out.push_back(idx.order[static_cast<size_t>(k)]);
        int j = d - 1;
        while (j >= 0 && ++cur[j] > hi[j]) {
            cur[j] = lo[j];
            --j;
        }
        if (j < 0) break;
    }
    std::sort(out.begin(), out.end());
}

estimate_field kernel_field_core(const dataset& data, const double* W, const kernel_spec& ks,
                                 double h, const eval_grid& grid, double denom_floor, bool ratio,
                                 int threads, bool naive) {
    data.validate();
    ks.validate();
    grid.validate();
    issue_list iss;
    iss.require(std::isfinite(h) && h > 0.0, "estimate.h: bandwidth must be positive");
    iss.require(grid.dim_u() == data.sites.d, "estimate: grid and sites disagree on dimension");
    iss.require(grid.dim_x() == data.p, "estimate: grid and data disagree on covariate count");
    if (ratio) iss.require(denom_floor > 0.0, "estimate.denom_floor: must be positive");
    iss.check();

    const int d = data.sites.d, p = data.p;
    const int64_t n = data.n();
    const double c1 = ks.support();
    const double reach = c1 * h;
    const int64_t nu = grid.u_count(), nx = grid.x_count();

    estimate_field out;
    out.grid = grid;
    out.value.assign(static_cast<size_t>(nu * nx), 0.0);
    out.denom.assign(out.value.size(), 0.0);
    out.ess.assign(out.value.size(), 0.0);
    out.degenerate.assign(out.value.size(), 0);

    site_bucket_index idx;
    if (!naive && n > 0) idx = build_bucket_index(data.sites, reach);
    const double norm = static_cast<double>(n) * std::pow(h, p);

    parallel_for(nu, threads, [&](int64_t ulo, int64_t uhi) {
        std::vector<int64_t> cand;
        std::vector<double> bw, u(static_cast<size_t>(d)), x(static_cast<size_t>(std::max(p, 1)));
        for (int64_t uf = ulo; uf < uhi; ++uf) {
            grid.u_point(uf, u.data());
            if (naive) {
                cand.resize(static_cast<size_t>(n));
                for (int64_t i = 0; i < n; ++i) cand[static_cast<size_t>(i)] = i;
            } else if (n > 0) {
                gather_candidates(idx, u.data(), reach, cand);
            } else {
                cand.clear();
            }
            bw.resize(cand.size());
            for (size_t k = 0; k < cand.size(); ++k)
                bw[k] = spatial_weight(ks, h, u.data(),
                                       data.sites.unit.data() +
                                           static_cast<size_t>(cand[k]) * static_cast<size_t>(d),
                                       d);
            for (int64_t xf = 0; xf < nx; ++xf) {
                grid.x_point(xf, x.data());
                double s_w = 0.0, s_1 = 0.0, s_2 = 0.0;
                for (size_t k = 0; k < cand.size(); ++k) {
                    const int64_t j = cand[k];
                    double base = bw[k];
                    const double* row = data.X.data() + static_cast<size_t>(j) * p;
                    for (int l = 0; l < p; ++l)
                        base *= kernel_value(ks, (x[static_cast<size_t>(l)] - row[l]) / h);
                    s_1 += base;
                    s_w += base * (W ? W[j] : 1.0);
                    s_2 += base * base;
                }
                const size_t o = static_cast<size_t>(uf * nx + xf);
                const double dn = s_1 / norm;
                out.denom[o] = dn;
                out.ess[o] = s_2 > 0.0 ? s_1 * s_1 / s_2 : 0.0;
                if (ratio) {
                    if (!(dn >= denom_floor)) {
                        out.degenerate[o] = 1;
                        out.value[o] = std::numeric_limits<double>::quiet_NaN();
                    } else {
                        out.value[o] = s_w / s_1;
                    }
                } else {
                    out.value[o] = s_w / norm;
                }
            }
        }
    });
    return out;
}

const double* checked_weights(const dataset& data, const std::vector<double>& W) {
    if (static_cast<int64_t>(W.size()) != data.n())
        throw validation_error({"estimate.W: need one weight per site"});
    for (double w : W)
        if (!std::isfinite(w)) throw validation_error({"estimate.W: weights must be finite"});
    return W.data();
}

} // namespace

estimate_field general_kernel_estimate(const dataset& data, const std::vector<double>& W,
                                       const kernel_spec& ks, double h, const eval_grid& grid,
                                       int threads) {
    return kernel_field_core(data, checked_weights(data, W), ks, h, grid, 0.0, false, threads,
                             false);
}

estimate_field nw_regression(const dataset& data, const kernel_spec& ks, double h,
                             const eval_grid& grid, double denom_floor, int threads) {
    return kernel_field_core(data, data.Y.data(), ks, h, grid, denom_floor, true, threads, false);
}

estimate_field density_estimate(const dataset& data, const kernel_spec& ks, double h,
                                const eval_grid& grid, int threads) {
    return kernel_field_core(data, nullptr, ks, h, grid, 0.0, false, threads, false);
}

estimate_field general_kernel_estimate_reference(const dataset& data, const std::vector<double>& W,
                                                 const kernel_spec& ks, double h,
                                                 const eval_grid& grid, int threads) {
    return kernel_field_core(data, checked_weights(data, W), ks, h, grid, 0.0, false, threads,
                             true);
}

estimate_field nw_regression_reference(const dataset& data, const kernel_spec& ks, double h,
                                       const eval_grid& grid, double denom_floor, int threads) {
    return kernel_field_core(data, data.Y.data(), ks, h, grid, denom_floor, true, threads, true);
}

estimate_field density_estimate_reference(const dataset& data, const kernel_spec& ks, double h,
                                          const eval_grid& grid, int threads) {
    return kernel_field_core(data, nullptr, ks, h, grid, 0.0, false, threads, true);
}

std::vector<int64_t> contributing_sites(const site_set& sites, const kernel_spec& ks, double h,
                                        const double* u) {
    sites.validate();
    ks.validate();
    if (!(std::isfinite(h) && h > 0.0))
        throw validation_error({"estimate.h: bandwidth must be positive"});
    std::vector<int64_t> out;
    for (int64_t j = 0; j < sites.n(); ++j)
        if (spatial_weight(ks, h, u,
                           sites.unit.data() + static_cast<size_t>(j) * sites.d,
                           sites.d) > 0.0)
            out.push_back(j);
    return out;
}

std::vector<double> site_density(const site_set& sites, const kernel_spec& ks, double h,
                                 const std::vector<double>& u_points, int threads) {
    sites.validate();
    ks.validate();
    issue_list iss;
    iss.require(std::isfinite(h) && h > 0.0, "estimate.h: bandwidth must be positive");
    iss.require(sites.d > 0 && u_points.size() % static_cast<size_t>(sites.d) == 0,
                "density.u_points: flat array length must be a multiple of the dimension");
    iss.check();
    const int d = sites.d;
    const int64_t k = static_cast<int64_t>(u_points.size()) / d;
    const int64_t n = sites.n();
    std::vector<double> out(static_cast<size_t>(k), 0.0);
    parallel_for(k, threads, [&](int64_t lo, int64_t hi) {
        for (int64_t q = lo; q < hi; ++q) {
            const double* u = u_points.data() + static_cast<size_t>(q) * d;
            double s = 0.0;
            for (int64_t j = 0; j < n; ++j)
                s += spatial_weight(ks, h, u,
                                    sites.unit.data() + static_cast<size_t>(j) * d, d);
            out[static_cast<size_t>(q)] = s / static_cast<double>(n);
        }
    });
    return out;
}

namespace {

// central difference in one coordinate of either argument block; wig aliases
// the block being perturbed, other is the untouched block
double fd_first(const std::function<double(const double*, const double*)>& g, double* wig,
                int axis, bool first_block, const double* other) {
    const double step = 1e-5;
    double keep = wig[axis];
    wig[axis] = keep + step;
    double up = first_block ? g(wig, other) : g(other, wig);
    wig[axis] = keep - step;
    double dn = first_block ? g(wig, other) : g(other, wig);
    wig[axis] = keep;
    return (up - dn) / (2.0 * step);
}

double fd_second(const std::function<double(const double*, const double*)>& g, double* wig,
                 int axis, bool first_block, const double* other) {
    const double step = 1e-5;
    double keep = wig[axis];
    double mid = first_block ? g(wig, other) : g(other, wig);
    wig[axis] = keep + step;
    double up = first_block ? g(wig, other) : g(other, wig);
    wig[axis] = keep - step;
    double dn = first_block ? g(wig, other) : g(other, wig);
    wig[axis] = keep;
    return (up - 2.0 * mid + dn) / (step * step);
}

} // namespace

bias_variance theoretical_bias_variance(const model_spec& model, const double* u, const double* x,
                                        const kernel_spec& ks, int d, int p, double c0) {
    issue_list iss;
    iss.require(d >= 1 && d <= 8, "asymptotics.d: dimension must be between 1 and 8");
    iss.require(p >= 0 && p <= 8, "asymptotics.p: covariate count must be between 0 and 8");
    iss.require(std::isfinite(c0) && c0 > 0.0, "asymptotics.c0: constant must be positive");
    iss.require(static_cast<bool>(model.m), "asymptotics.model: regression function required");
    iss.require(static_cast<bool>(model.f), "asymptotics.model: joint density required");
    iss.require(static_cast<bool>(model.f_S), "asymptotics.model: site density required");
    iss.require(static_cast<bool>(model.sigma), "asymptotics.model: noise scale required");
    iss.check();

    auto constants = kernel_constants(ks);
    std::vector<double> ub(u, u + d), xb(x, x + p);

    auto dm_du = [&](int i) {
        return model.m_du ? model.m_du(u, x, i) : fd_first(model.m, ub.data(), i, true, x);
    };
    auto dm_dx = [&](int k) {
        return model.m_dx ? model.m_dx(u, x, k) : fd_first(model.m, xb.data(), k, false, u);
    };
    auto d2m_du = [&](int i) {
        return model.m_duu ? model.m_duu(u, x, i) : fd_second(model.m, ub.data(), i, true, x);
    };
    auto d2m_dx = [&](int k) {
        return model.m_dxx ? model.m_dxx(u, x, k) : fd_second(model.m, xb.data(), k, false, u);
    };
    auto df_du = [&](int i) {
        return model.f_du ? model.f_du(u, x, i) : fd_first(model.f, ub.data(), i, true, x);
    };
    auto df_dx = [&](int k) {
        return model.f_dx ? model.f_dx(u, x, k) : fd_first(model.f, xb.data(), k, false, u);
    };

    const double fv = model.f(u, x);
    double curvature = 0.0;
    for (int i = 0; i < d; ++i) curvature += 2.0 * dm_du(i) * df_du(i) + d2m_du(i) * fv;
    for (int k = 0; k < p; ++k) curvature += 2.0 * dm_dx(k) * df_dx(k) + d2m_dx(k) * fv;

    bias_variance out;
    out.bias = std::sqrt(c0) * 0.5 * constants.kappa2 * curvature;

    const double fs = model.f_S(u);
    const double den = fs * fv;
    if (!(den > 0.0))
        throw std::runtime_error("asymptotics: singular point, f_S(u) f(u,x) = " + format17(den));
    const double sg = model.sigma(u, x);
    out.variance = std::pow(constants.kappa0, d + p) * sg * sg / den;
    return out;
}

void asymptotics_config::validate() const {
    issue_list iss;
    iss.require(std::isfinite(rho) && rho > 0.0, "asymptotics.rho: moment order must be positive");
    iss.require(std::isfinite(zeta) && zeta > 2.0,
                "asymptotics.zeta: weight moment order must exceed 2");
    iss.require(std::isfinite(c0) && c0 > 0.0, "asymptotics.c0: constant must be positive");
    iss.check();
}

double rate_bound(int64_t n, double h, double A_n, int d, int p, const asymptotics_config& cfg) {
    cfg.validate();
    issue_list iss;
    iss.require(n >= 2, "rate.n: need at least two sites");
    iss.require(std::isfinite(h) && h > 0.0, "rate.h: bandwidth must be positive");
    iss.require(std::isfinite(A_n) && A_n > 0.0, "rate.A_n: region edge must be positive");
    iss.require(d >= 1 && d <= 8 && p >= 0 && p <= 8, "rate.d/p: dimensions out of range");
    iss.check();
    double nn = static_cast<double>(n);
    double stochastic = std::sqrt(std::log(nn) / (nn * std::pow(h, d + p)));
    double smoothing = h * h;
    double nonstationary = std::pow(A_n, -static_cast<double>(d) * cfg.r()) * std::pow(h, -p);
    return stochastic + smoothing + nonstationary;
}

} // namespace lsrf
