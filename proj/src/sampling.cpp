#include "lsrf/sampling.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>

#include "lsrf/quadrature.hpp"

namespace lsrf {

std::string to_string(density_family f) {
    switch (f) {
        case density_family::uniform: return "uniform";
        case density_family::product_beta: return "product_beta";
        case density_family::piecewise_constant: return "piecewise_constant";
    }
    return "unknown";
}

density_family density_family_from_string(const std::string& name) {
    if (name == "uniform") return density_family::uniform;
    if (name == "product_beta") return density_family::product_beta;
    if (name == "piecewise_constant") return density_family::piecewise_constant;
    throw validation_error({"density.family: unknown family '" + name + "'"});
}

namespace {

int64_t ipow(int64_t base, int exp) {
    int64_t out = 1;
    for (int i = 0; i < exp; ++i) out *= base;
    return out;
}

// half-open cell index over [0,1] split into k cells, 0 maps to the first cell
int64_t unit_cell_index(double u, int k) {
    if (u <= 0.0) return 0;
    int64_t idx = static_cast<int64_t>(std::ceil(u * k)) - 1;
    return std::min<int64_t>(std::max<int64_t>(idx, 0), k - 1);
}

} // namespace

void density_spec::validate(int d) const {
    issue_list iss;
    iss.require(d >= 1 && d <= 8, "density.d: dimension must be between 1 and 8");
    auto require_empty_beta = [&] {
        iss.require(alpha.empty() && beta.empty(),
                    "density.alpha/beta: only product_beta uses shape parameters");
    };
    auto require_empty_cells = [&] {
        iss.require(cells_per_axis == 0 && weights.empty(),
                    "density.cells/weights: only piecewise_constant uses cell weights");
    };
    switch (family) {
        case density_family::uniform:
            require_empty_beta();
            require_empty_cells();
            break;
        case density_family::product_beta: {
            require_empty_cells();
            if (static_cast<int>(alpha.size()) != d || static_cast<int>(beta.size()) != d) {
                iss.add("density.alpha/beta: need one shape pair per coordinate");
                break;
            }
            for (int j = 0; j < d; ++j) {
                if (!std::isfinite(alpha[static_cast<size_t>(j)]) ||
                    alpha[static_cast<size_t>(j)] < 1.0)
                    iss.add("density.alpha: shapes must be finite and >= 1 so the density stays "
                            "positive on the interior");
                if (!std::isfinite(beta[static_cast<size_t>(j)]) ||
                    beta[static_cast<size_t>(j)] < 1.0)
                    iss.add("density.beta: shapes must be finite and >= 1 so the density stays "
                            "positive on the interior");
            }
            break;
        }
        case density_family::piecewise_constant: {
            require_empty_beta();
            if (cells_per_axis < 1) {
                iss.add("density.cells_per_axis: must be at least 1");
                break;
            }
            int64_t want = ipow(cells_per_axis, d);
            if (static_cast<int64_t>(weights.size()) != want) {
                iss.add("density.weights: need cells_per_axis^d entries");
                break;
            }
            for (double w : weights)
                if (!std::isfinite(w) || w <= 0.0) {
                    iss.add("density.weights: all cell weights must be finite and positive");
                    break;
                }
            break;
        }
    }
    iss.check();
    double total = integral(d);
    if (std::fabs(total - 1.0) > 1e-6)
        throw validation_error({"density: must integrate to 1 over the unit cube, got " +
                                format17(total)});
}

double density_spec::value(const double* u, int d) const {
    for (int j = 0; j < d; ++j)
        if (u[j] < 0.0 || u[j] > 1.0) return 0.0;
    switch (family) {
        case density_family::uniform: return 1.0;
        case density_family::product_beta: {
            double out = 1.0;
            for (int j = 0; j < d; ++j)
                out *= boost::math::ibeta_derivative(alpha[static_cast<size_t>(j)],
                                                     beta[static_cast<size_t>(j)], u[j]);
            return out;
        }
        case density_family::piecewise_constant: {
            int64_t flat = 0;
            for (int j = 0; j < d; ++j)
                flat = flat * cells_per_axis + unit_cell_index(u[j], cells_per_axis);
            // weight is density times cell volume scale: stored weights are the
            // density values themselves
            return weights[static_cast<size_t>(flat)];
        }
    }
    return 0.0;
}

double density_spec::integral(int d) const {
    switch (family) {
        case density_family::uniform: return 1.0;
        case density_family::product_beta: {
            double out = 1.0;
            for (int j = 0; j < d; ++j) {
                double a = alpha[static_cast<size_t>(j)], b = beta[static_cast<size_t>(j)];
                out *= simpson_adaptive(
                    [&](double u) { return boost::math::ibeta_derivative(a, b, u); }, 0.0, 1.0,
                    1e-9);
            }
            return out;
        }
        case density_family::piecewise_constant: {
            double cell_vol = 1.0;
            for (int j = 0; j < d; ++j) cell_vol /= cells_per_axis;
            double out = 0.0;
            for (double w : weights) out += w * cell_vol;
            return out;
        }
    }
    return 0.0;
}

void sampling_design::validate() const {
    issue_list iss;
    iss.require(d >= 1 && d <= 8, "design.d: dimension must be between 1 and 8");
    iss.require(n >= 1, "design.n: need at least one site");
    iss.require(std::isfinite(A_n) && A_n > 0.0, "design.A_n: region edge must be positive");
    iss.require(c0_lower > 0.0, "design.c0_lower: site density bound must be positive");
    iss.check();
    density.validate(d);
    double ratio = static_cast<double>(n) / std::pow(A_n, d);
    if (ratio < c0_lower)
        throw validation_error({"design: site density n A_n^-d = " + format17(ratio) +
                                " falls below the lower bound " + format17(c0_lower)});
}

void site_set::validate() const {
    issue_list iss;
    iss.require(d >= 1 && d <= 8, "sites.d: dimension must be between 1 and 8");
    iss.require(std::isfinite(A_n) && A_n > 0.0, "sites.A_n: region edge must be positive");
    iss.require(sites.size() == unit.size(), "sites: unit and scaled arrays must pair up");
    iss.require(d == 0 || sites.size() % static_cast<size_t>(d) == 0,
                "sites: flat array length must be a multiple of the dimension");
    iss.check();
    int bad_range = 0, bad_scale = 0;
    for (size_t k = 0; k < sites.size(); ++k) {
        if (!(sites[k] >= 0.0 && sites[k] <= A_n)) ++bad_range;
        if (sites[k] != A_n * unit[k]) ++bad_scale;
    }
    if (bad_range > 0)
        iss.add("sites: " + std::to_string(bad_range) + " coordinates fall outside [0, A_n]");
    if (bad_scale > 0)
        iss.add("sites: " + std::to_string(bad_scale) +
                " coordinates break the exact scaling sites = A_n * unit");
    iss.check();
}

namespace {

// Vose alias table for O(1) draws from a finite distribution
struct alias_table {
    std::vector<double> prob;
    std::vector<int64_t> alias;

    explicit alias_table(const std::vector<double>& w) {
        const int64_t k = static_cast<int64_t>(w.size());
        prob.assign(static_cast<size_t>(k), 0.0);
        alias.assign(static_cast<size_t>(k), 0);
        double total = 0.0;
        for (double v : w) total += v;
        std::vector<double> scaled(static_cast<size_t>(k));
        std::vector<int64_t> small, large;
        for (int64_t i = 0; i < k; ++i) {
            scaled[static_cast<size_t>(i)] = w[static_cast<size_t>(i)] * k / total;
            (scaled[static_cast<size_t>(i)] < 1.0 ? small : large).push_back(i);
        }
        while (!small.empty() && !large.empty()) {
            int64_t s = small.back(), l = large.back();
            small.pop_back();
            large.pop_back();
            prob[static_cast<size_t>(s)] = scaled[static_cast<size_t>(s)];
            alias[static_cast<size_t>(s)] = l;
            scaled[static_cast<size_t>(l)] -= 1.0 - scaled[static_cast<size_t>(s)];
            (scaled[static_cast<size_t>(l)] < 1.0 ? small : large).push_back(l);
        }
        for (int64_t i : large) prob[static_cast<size_t>(i)] = 1.0;
        for (int64_t i : small) prob[static_cast<size_t>(i)] = 1.0;
    }

    int64_t pick(double u1, double u2) const {
        int64_t k = static_cast<int64_t>(prob.size());
        int64_t i = std::min(static_cast<int64_t>(u1 * k), k - 1);
        return u2 < prob[static_cast<size_t>(i)] ? i : alias[static_cast<size_t>(i)];
    }
};

} // namespace

site_set draw_sites(const sampling_design& design, int threads) {
    design.validate();
    const int d = design.d;
    const int64_t n = design.n;
    site_set out;
    out.d = d;
    out.A_n = design.A_n;
    out.unit.resize(static_cast<size_t>(n) * static_cast<size_t>(d));
    out.sites.resize(out.unit.size());

    const density_spec& f = design.density;
    // cell selection table for the piecewise family, shared read-only
    const alias_table* cells = nullptr;
    alias_table table{{1.0}};
    if (f.family == density_family::piecewise_constant) {
        table = alias_table(f.weights);
        cells = &table;
    }

    parallel_for(n, threads, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            counter_rng rng(design.seed, 0, static_cast<uint64_t>(i));
            double* u = out.unit.data() + static_cast<size_t>(i) * static_cast<size_t>(d);
            switch (f.family) {
                case density_family::uniform:
                    for (int j = 0; j < d; ++j) u[j] = rng.uniform01();
                    break;
                case density_family::product_beta:
                    for (int j = 0; j < d; ++j)
                        u[j] = boost::math::ibeta_inv(f.alpha[static_cast<size_t>(j)],
                                                      f.beta[static_cast<size_t>(j)],
                                                      rng.uniform01());
                    break;
                case density_family::piecewise_constant: {
                    double u1 = rng.uniform01(), u2 = rng.uniform01();
                    int64_t flat = cells->pick(u1, u2);
                    // decode row-major cell coordinates, first axis slowest
                    for (int j = d - 1; j >= 0; --j) {
                        int64_t cj = flat % f.cells_per_axis;
                        flat /= f.cells_per_axis;
                        u[j] = (cj + rng.uniform01()) / f.cells_per_axis;
                    }
                    break;
                }
            }
            double* s = out.sites.data() + static_cast<size_t>(i) * static_cast<size_t>(d);
            for (int j = 0; j < d; ++j) s[j] = design.A_n * u[j];
        }
    });
    return out;
}

regime_report classify_regime(int64_t n, double A_n, int d, double kappa_max) {
    issue_list iss;
    iss.require(n >= 1, "regime.n: need at least one site");
    iss.require(std::isfinite(A_n) && A_n > 0.0, "regime.A_n: region edge must be positive");
    iss.require(d >= 1 && d <= 8, "regime.d: dimension must be between 1 and 8");
    iss.require(std::isfinite(kappa_max) && kappa_max > 0.0,
                "regime.kappa_max: threshold must be positive");
    iss.check();
    regime_report out;
    out.ratio = static_cast<double>(n) / std::pow(A_n, d);
    out.threshold = kappa_max;
    out.pure = out.ratio <= kappa_max;
    return out;
}

int64_t block_partition::block_count() const { return ipow(per_axis, d); }

int64_t block_partition::sub_block_count() const { return block_count() << d; }

void block_partition::decompose(int64_t flat, int64_t* ell) const {
    for (int j = d - 1; j >= 0; --j) {
        ell[j] = flat % per_axis;
        flat /= per_axis;
    }
}

int64_t block_partition::flatten(const int64_t* ell) const {
    int64_t flat = 0;
    for (int j = 0; j < d; ++j) flat = flat * per_axis + ell[j];
    return flat;
}

bool block_partition::interior(const int64_t* ell) const {
    for (int j = 0; j < d; ++j)
        if ((ell[j] + 1) * A3() > A_n) return false;
    return true;
}

std::pair<double, double> block_partition::sub_interval(int64_t ell_j, int eps) const {
    double base = static_cast<double>(ell_j) * A3();
    if (eps == 1) return {base, base + A1};
    if (eps == 2) return {base + A1, base + A3()};
    throw std::invalid_argument("block: sub-interval label must be 1 or 2");
}

block_partition build_block_partition(double A_n, double A1, double A2, int d) {
    issue_list iss;
    iss.require(d >= 1 && d <= 8, "blocks.d: dimension must be between 1 and 8");
    iss.require(std::isfinite(A_n) && A_n > 0.0, "blocks.A_n: region edge must be positive");
    if (!(std::isfinite(A1) && std::isfinite(A2) && 0.0 < A2 && A2 < A1 && A1 < A_n))
        iss.add("blocks.A1/A2: scales must satisfy 0 < A2 < A1 < A_n, got A1 = " + format17(A1) +
                ", A2 = " + format17(A2));
    iss.check();
    block_partition out;
    out.A_n = A_n;
    out.A1 = A1;
    out.A2 = A2;
    out.d = d;
    out.per_axis = static_cast<int64_t>(std::ceil(A_n / (A1 + A2)));
    return out;
}

double default_block_scale_big(double A_n) { return std::pow(A_n, 0.3); }

double default_block_scale_small(double A_n) { return std::pow(A_n, 0.15); }

double block_volume(double A1, double A2, int q, int d) {
    if (q < 0 || q > d) throw std::invalid_argument("block volume: need 0 <= q <= d");
    // fixed multiplication order so every caller gets bit-identical volumes
    double out = 1.0;
    for (int i = 0; i < q; ++i) out *= A1;
    for (int i = q; i < d; ++i) out *= A2;
    return out;
}

int64_t block_assignment::flagged_sub_blocks() const {
    int64_t out = 0;
    for (uint8_t f : flagged) out += f;
    return out;
}

int64_t block_assignment::flagged_cubes() const {
    int64_t out = 0;
    for (uint8_t f : cube_flagged) out += f;
    return out;
}

block_assignment assign_sites_to_blocks(const site_set& sites, const block_partition& part,
                                        double flag_constant, int threads) {
    sites.validate();
    if (sites.d != part.d || sites.A_n != part.A_n)
        throw std::invalid_argument("block assignment: sites and partition disagree on the region");
    if (!(flag_constant > 0.0))
        throw std::invalid_argument("block assignment: flag constant must be positive");
    const int d = part.d;
    const int64_t n = sites.n();
    const double A3 = part.A3();

    block_assignment out;
    out.n = n;
    out.flag_constant = flag_constant;
    out.counts.assign(static_cast<size_t>(part.sub_block_count()), 0);
    out.flagged.assign(out.counts.size(), 0);
    out.cubes_per_axis = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(part.A_n)));
    out.cube_counts.assign(static_cast<size_t>(ipow(out.cubes_per_axis, d)), 0);
    out.cube_flagged.assign(out.cube_counts.size(), 0);

    // membership already validated; the counting pass is serial so that counts
    // never depend on the thread schedule
    (void)threads;
    for (int64_t i = 0; i < n; ++i) {
        const double* s = sites.sites.data() + static_cast<size_t>(i) * static_cast<size_t>(d);
        int64_t block_flat = 0, cube_flat = 0;
        int mask = 0;
        for (int j = 0; j < d; ++j) {
            double x = s[j];
            int64_t b = x <= 0.0 ? 0 : static_cast<int64_t>(std::ceil(x / A3)) - 1;
            b = std::min(std::max<int64_t>(b, 0), part.per_axis - 1);
            double offset = x - static_cast<double>(b) * A3;
            if (offset <= part.A1) mask |= 1 << j;
            block_flat = block_flat * part.per_axis + b;
            int64_t c = x <= 0.0 ? 0 : static_cast<int64_t>(std::ceil(x)) - 1;
            c = std::min(std::max<int64_t>(c, 0), out.cubes_per_axis - 1);
            cube_flat = cube_flat * out.cubes_per_axis + c;
        }
        ++out.counts[static_cast<size_t>((block_flat << d) | mask)];
        ++out.cube_counts[static_cast<size_t>(cube_flat)];
    }

    if (n > 0) {
        const double density_ratio =
            static_cast<double>(n) / std::pow(part.A_n, d);
        out.cube_bound = 2.0 * (std::log(static_cast<double>(n)) + density_ratio);
        for (size_t c = 0; c < out.cube_counts.size(); ++c)
            out.cube_flagged[c] = static_cast<double>(out.cube_counts[c]) > out.cube_bound;
        for (size_t b = 0; b < out.counts.size(); ++b) {
            int mask = static_cast<int>(b) & ((1 << d) - 1);
            int q = std::popcount(static_cast<unsigned>(mask));
            double bound = flag_constant * block_volume(part.A1, part.A2, q, d) * density_ratio;
            out.flagged[b] = static_cast<double>(out.counts[b]) > bound;
        }
    }
    return out;
}

} // namespace lsrf
