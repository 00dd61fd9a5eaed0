#include "lsrf/levy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "lsrf/common.hpp"
#include "lsrf/quadrature.hpp"

namespace lsrf {

std::string to_string(jump_family f) {
    switch (f) {
        case jump_family::none: return "none";
        case jump_family::constant: return "constant";
        case jump_family::gaussian: return "gaussian";
        case jump_family::uniform: return "uniform";
    }
    return "unknown";
}

jump_family jump_family_from_string(const std::string& name) {
    if (name == "none") return jump_family::none;
    if (name == "constant") return jump_family::constant;
    if (name == "gaussian") return jump_family::gaussian;
    if (name == "uniform") return jump_family::uniform;
    throw validation_error({"jumps.family: unknown family '" + name + "'"});
}

double jump_dist::mean() const {
    switch (family) {
        case jump_family::none: return 0.0;
        case jump_family::constant: return a;
        case jump_family::gaussian: return a;
        case jump_family::uniform: return 0.5 * (a + b);
    }
    return 0.0;
}

double jump_dist::second_moment() const {
    switch (family) {
        case jump_family::none: return 0.0;
        case jump_family::constant: return a * a;
        case jump_family::gaussian: return a * a + b * b;
        case jump_family::uniform: return (a * a + a * b + b * b) / 3.0;
    }
    return 0.0;
}

double jump_dist::sample(counter_rng& rng) const {
    switch (family) {
        case jump_family::none: return 0.0;
        case jump_family::constant: return a;
        case jump_family::gaussian: return a + b * rng.gaussian();
        case jump_family::uniform: return rng.uniform(a, b);
    }
    return 0.0;
}

void jump_dist::validate() const {
    issue_list iss;
    iss.require(std::isfinite(a) && std::isfinite(b), "jumps: parameters must be finite");
    if (family == jump_family::gaussian)
        iss.require(b >= 0.0, "jumps: gaussian sd must be nonnegative");
    if (family == jump_family::uniform)
        iss.require(a <= b, "jumps: uniform endpoints must satisfy a <= b");
    iss.check();
}

double levy_characteristic::mu0() const { return gamma0 + lambda * jumps.mean(); }

double levy_characteristic::var0() const { return sigma0 + lambda * jumps.second_moment(); }

void levy_characteristic::validate() const {
    issue_list iss;
    iss.require(std::isfinite(gamma0), "levy.gamma0: must be finite");
    iss.require(std::isfinite(sigma0) && sigma0 >= 0.0, "levy.sigma0: must be nonnegative");
    iss.require(std::isfinite(lambda) && lambda >= 0.0, "levy.lambda: must be nonnegative");
    if (lambda > 0.0)
        iss.require(jumps.family != jump_family::none,
                    "levy.jumps: a jump law is required when lambda > 0");
    iss.check();
    jumps.validate();
}

double levy_characteristic::sample_mass(double volume, counter_rng& rng) const {
    double m = gamma0 * volume;
    if (sigma0 > 0.0) m += std::sqrt(sigma0 * volume) * rng.gaussian();
    if (lambda > 0.0) {
        int64_t nj = rng.poisson(lambda * volume);
        for (int64_t i = 0; i < nj; ++i) m += jumps.sample(rng);
    }
    return m;
}

void carma_params::validate() const {
    issue_list iss;
    iss.require(!lambda.empty(), "carma.lambda: at least one autoregressive root required");
    iss.require(static_cast<int>(ma.size()) < static_cast<int>(lambda.size()),
                "carma.ma: moving average order must be below the autoregressive order");
    bool neg = true, fin = true;
    for (double l : lambda) {
        if (!(l < 0.0)) neg = false;
        if (!std::isfinite(l)) fin = false;
    }
    for (double m : ma)
        if (!std::isfinite(m)) fin = false;
    iss.require(neg, "carma.lambda: roots must be negative");
    iss.require(fin, "carma: parameters must be finite");
    for (size_t i = 0; i < lambda.size(); ++i)
        for (size_t j = i + 1; j < lambda.size(); ++j)
            if (lambda[i] == lambda[j]) {
                iss.add("carma.lambda: roots must be distinct");
                i = lambda.size();
                break;
            }
    iss.check();
}

namespace {

// monic polynomial z^q + ma[q-1] z^{q-1} + ... + ma[0]
double monic_eval(const std::vector<double>& ma, double z) {
    double acc = 1.0;
    for (size_t i = ma.size(); i-- > 0;) acc = acc * z + ma[i];
    return acc;
}

double carma_b(const carma_params& c, double z) {
    double sign = c.q() % 2 == 0 ? 1.0 : -1.0;
    return sign * monic_eval(c.ma, z) * monic_eval(c.ma, -z);
}

double carma_aprime(const carma_params& c, int i) {
    double li = c.lambda[static_cast<size_t>(i)];
    double prod = 2.0 * li;
    for (int j = 0; j < c.p(); ++j)
        if (j != i) {
            double lj = c.lambda[static_cast<size_t>(j)];
            prod *= li * li - lj * lj;
        }
    return prod;
}

} // namespace

double carma_kernel_eval(const carma_params& c, double r) {
    c.validate();
    double g = 0.0;
    for (int i = 0; i < c.p(); ++i) {
        double li = c.lambda[static_cast<size_t>(i)];
        g += carma_b(c, li) / carma_aprime(c, i) * std::exp(li * r);
    }
    return g;
}

double exp_sum_kernel::c0() const {
    double m = std::numeric_limits<double>::infinity();
    for (double ck : c) m = std::min(m, ck);
    return m;
}

void exp_sum_kernel::validate() const {
    issue_list iss;
    iss.require(!c.empty(), "kernel_g: at least one term required");
    iss.require(a.size() == c.size() && b.size() == c.size(),
                "kernel_g: coefficient arrays must have equal length");
    iss.require(c.size() <= 64, "kernel_g: too many terms");
    bool pos = true, fin = true;
    for (double ck : c) {
        if (!(ck > 0.0)) pos = false;
        if (!std::isfinite(ck)) fin = false;
    }
    for (size_t k = 0; k < a.size() && k < b.size(); ++k)
        if (!std::isfinite(a[k]) || !std::isfinite(b[k])) fin = false;
    iss.require(pos, "kernel_g.c: decay rates must be positive");
    iss.require(fin, "kernel_g: coefficients must be finite");
    iss.check();
}

double exp_sum_kernel::coeff(int k, const double* u, int d) const {
    double bk = b[static_cast<size_t>(k)];
    double mean_u = 0.0;
    if (bk != 0.0 && u != nullptr && d > 0) {
        for (int i = 0; i < d; ++i) mean_u += u[i];
        mean_u /= d;
    }
    return a[static_cast<size_t>(k)] + bk * mean_u;
}

double exp_sum_kernel::eval(const double* u, int d, double r) const {
    double g = 0.0;
    for (int k = 0; k < terms(); ++k)
        g += coeff(k, u, d) * std::exp(-c[static_cast<size_t>(k)] * r);
    return g;
}

exp_sum_kernel exp_sum_kernel::from_carma(const carma_params& params) {
    params.validate();
    exp_sum_kernel g;
    for (int i = 0; i < params.p(); ++i) {
        double li = params.lambda[static_cast<size_t>(i)];
        g.a.push_back(carma_b(params, li) / carma_aprime(params, i));
        g.b.push_back(0.0);
        g.c.push_back(-li);
    }
    return g;
}

double iota(double x, double m) {
    if (!(m > 0.0)) throw std::invalid_argument("iota: m must be positive");
    if (!(x >= 0.0)) throw std::invalid_argument("iota: x must be nonnegative");
    if (x <= 0.5 * m) return 1.0;
    if (x >= m) return 0.0;
    return 2.0 - 2.0 * x / m;
}

double default_coverage_tol() { return std::exp(-18.0); }

double default_cell_width(double c0) {
    if (!(c0 > 0.0)) throw std::invalid_argument("cell width: c0 must be positive");
    return 0.25 / c0;
}

cell_grid make_field_grid(double A_n, int d, double c0, double delta, double coverage_tol) {
    if (coverage_tol < 0.0) coverage_tol = default_coverage_tol();
    issue_list iss;
    iss.require(A_n > 0.0, "field.A_n: must be positive");
    iss.require(d >= 1 && d <= 8, "field.d: must be between 1 and 8");
    iss.require(c0 > 0.0, "field.kernel: decay rate must be positive");
    iss.require(delta > 0.0, "field.delta: must be positive");
    iss.require(coverage_tol > 0.0 && coverage_tol < 1.0,
                "field.coverage_tol: must lie in (0, 1)");
    iss.check();
    double r = -std::log(coverage_tol) / c0;
    box region;
    region.lo.assign(static_cast<size_t>(d), -r);
    region.hi.assign(static_cast<size_t>(d), A_n + r);
    return cell_grid(region, delta);
}

std::vector<double> sample_levy_masses(const cell_grid& grid, const levy_characteristic& chi,
                                       uint64_t seed, uint64_t stream, int threads) {
    chi.validate();
    std::vector<double> out(static_cast<size_t>(grid.cell_count()));
    const double vol = grid.cell_volume();
    parallel_for(grid.cell_count(), threads, [&](int64_t lo, int64_t hi) {
        for (int64_t c = lo; c < hi; ++c) {
            counter_rng rng(seed, stream, static_cast<uint64_t>(c));
            out[static_cast<size_t>(c)] = chi.sample_mass(vol, rng);
        }
    });
    return out;
}

namespace {

constexpr char mass_magic[8] = {'L', 'S', 'R', 'F', 'M', 'G', '0', '1'};

template <class T>
void write_pod(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::ifstream& f, T& v) {
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
}

} // namespace

void write_mass_grid(const std::string& path, const mass_grid_spec& spec,
                     const std::vector<std::vector<double>>& masses) {
    spec.region.validate();
    cell_grid grid(spec.region, spec.delta);
    if (masses.size() != spec.fields || spec.fields == 0)
        throw std::invalid_argument("mass grid: field count does not match the payload");
    for (const auto& arr : masses)
        if (static_cast<int64_t>(arr.size()) != grid.cell_count())
            throw std::invalid_argument("mass grid: payload size does not match the cell count");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("mass grid: cannot open '" + path + "' for writing");
    f.write(mass_magic, sizeof(mass_magic));
    uint32_t d = static_cast<uint32_t>(spec.region.dim());
    write_pod(f, d);
    for (double v : spec.region.lo) write_pod(f, v);
    for (double v : spec.region.hi) write_pod(f, v);
    write_pod(f, spec.delta);
    write_pod(f, spec.fields);
    write_pod(f, spec.seed);
    uint64_t count = static_cast<uint64_t>(grid.cell_count());
    write_pod(f, count);
    for (const auto& arr : masses)
        f.write(reinterpret_cast<const char*>(arr.data()),
                static_cast<std::streamsize>(arr.size() * sizeof(double)));
    if (!f) throw std::runtime_error("mass grid: write to '" + path + "' failed");
}

std::pair<mass_grid_spec, std::vector<std::vector<double>>> read_mass_grid(
    const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("mass grid: cannot open '" + path + "'");
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, mass_magic, sizeof(magic)) != 0)
        throw std::runtime_error("mass grid: '" + path + "' has the wrong header");
    uint32_t d = 0;
    read_pod(f, d);
    if (!f || d < 1 || d > 8) throw std::runtime_error("mass grid: corrupt dimension field");
    mass_grid_spec spec;
    spec.region.lo.resize(d);
    spec.region.hi.resize(d);
    for (auto& v : spec.region.lo) read_pod(f, v);
    for (auto& v : spec.region.hi) read_pod(f, v);
    read_pod(f, spec.delta);
    read_pod(f, spec.fields);
    read_pod(f, spec.seed);
    uint64_t count = 0;
    read_pod(f, count);
    if (!f) throw std::runtime_error("mass grid: truncated header in '" + path + "'");
    if (spec.fields == 0 || spec.fields > 64)
        throw std::runtime_error("mass grid: corrupt field count in '" + path + "'");
    cell_grid grid(spec.region, spec.delta);
    if (count != static_cast<uint64_t>(grid.cell_count()))
        throw std::runtime_error("mass grid: payload count disagrees with the grid in '" + path +
                                 "'");
    std::vector<std::vector<double>> masses(spec.fields);
    for (auto& arr : masses) {
        arr.resize(count);
        f.read(reinterpret_cast<char*>(arr.data()),
               static_cast<std::streamsize>(count * sizeof(double)));
    }
    if (!f) throw std::runtime_error("mass grid: truncated payload in '" + path + "'");
    return {spec, std::move(masses)};
}

std::string to_string(field_mode m) {
    switch (m) {
        case field_mode::locally_stationary: return "locally_stationary";
        case field_mode::stationary_companion: return "stationary_companion";
        case field_mode::truncated: return "truncated";
    }
    return "unknown";
}

field_mode field_mode_from_string(const std::string& name) {
    if (name == "locally_stationary") return field_mode::locally_stationary;
    if (name == "stationary_companion") return field_mode::stationary_companion;
    if (name == "truncated") return field_mode::truncated;
    throw validation_error({"field.mode: unknown mode '" + name + "'"});
}

field_evaluator::field_evaluator(const exp_sum_kernel& g, const cell_grid& grid,
                                 double coverage_tol)
    : g_(g), grid_(grid),
      coverage_tol_(coverage_tol < 0.0 ? default_coverage_tol() : coverage_tol) {
    g_.validate();
    if (!(coverage_tol_ > 0.0 && coverage_tol_ < 1.0))
        throw validation_error({"field.coverage_tol: must lie in (0, 1)"});
    if (grid_.dim() > 8) throw validation_error({"field: grid dimension above 8"});
    radius_ = -std::log(coverage_tol_) / g_.c0();
    const int k = g_.terms();
    tables_.resize(static_cast<size_t>(k));
    table_step_.resize(static_cast<size_t>(k));
    table_rmax_.resize(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        double ck = g_.c[static_cast<size_t>(i)];
        // per-term range where exp(-ck r) stays above 1e-9, clipped to the window
        double rmax = std::min(radius_, -std::log(1e-9) / ck);
        double step = 8.9e-5 / ck;
        auto npts = static_cast<int64_t>(std::ceil(rmax / step)) + 2;
        auto& tbl = tables_[static_cast<size_t>(i)];
        tbl.resize(static_cast<size_t>(npts));
        for (int64_t j = 0; j < npts; ++j)
            tbl[static_cast<size_t>(j)] = std::exp(-ck * step * static_cast<double>(j));
        table_step_[static_cast<size_t>(i)] = step;
        table_rmax_[static_cast<size_t>(i)] = step * static_cast<double>(npts - 2);
    }
}

double field_evaluator::table_value(int k, double r) const {
    if (r >= table_rmax_[static_cast<size_t>(k)]) return 0.0;
    double t = r / table_step_[static_cast<size_t>(k)];
    auto i = static_cast<int64_t>(t);
    double frac = t - static_cast<double>(i);
    const auto& tbl = tables_[static_cast<size_t>(k)];
    double lo = tbl[static_cast<size_t>(i)];
    return lo + frac * (tbl[static_cast<size_t>(i) + 1] - lo);
}

void field_evaluator::check_coverage(const double* s, double needed) const {
    const int d = grid_.dim();
    double avail = std::numeric_limits<double>::infinity();
    for (int i = 0; i < d; ++i) {
        avail = std::min(avail, s[i] - grid_.region().lo[static_cast<size_t>(i)]);
        avail = std::min(avail, grid_.region().hi[static_cast<size_t>(i)] - s[i]);
    }
    if (avail + 1e-9 * needed < needed) {
        std::string pt = "(";
        for (int i = 0; i < d; ++i) pt += (i ? ", " : "") + format17(s[i]);
        pt += ")";
        throw std::runtime_error("field: evaluation point " + pt +
                                 " is closer than the kernel margin " + format17(needed) +
                                 " to the mass grid boundary");
    }
}

void field_evaluator::accumulate(const std::vector<double>& masses, const double* s,
                                 double window, const double* ms, int nm, bool complement,
                                 double* out) const {
    const int d = grid_.dim();
    const int k = g_.terms();
    const int cols = ms == nullptr ? 1 : nm;
    std::fill(out, out + static_cast<size_t>(k) * static_cast<size_t>(cols), 0.0);

    int64_t idx_lo[8], idx_hi[8], cur[8];
    for (int i = 0; i < d; ++i) {
        double wlo = std::max(grid_.region().lo[static_cast<size_t>(i)], s[i] - window);
        double whi = std::min(grid_.region().hi[static_cast<size_t>(i)], s[i] + window);
        idx_lo[i] = grid_.axis_cell(wlo, i);
        idx_hi[i] = grid_.axis_cell(whi, i);
        if (idx_lo[i] < 0 || idx_hi[i] < idx_lo[i]) return;
        cur[i] = idx_lo[i];
    }

    const auto& dims = grid_.dims();
    int64_t stride[8];
    stride[d - 1] = 1;
    for (int i = d - 2; i >= 0; --i) stride[i] = stride[i + 1] * dims[static_cast<size_t>(i + 1)];

    const double delta = grid_.delta();
    const double w2 = window * window;
    const int last = d - 1;
    const double lo_last = grid_.region().lo[static_cast<size_t>(last)];
    double co[16];

    while (true) {
        double ps = 0.0;
        int64_t base = 0;
        for (int i = 0; i < last; ++i) {
            double dc = grid_.region().lo[static_cast<size_t>(i)] +
                        (static_cast<double>(cur[i]) + 0.5) * delta - s[i];
            ps += dc * dc;
            base += cur[i] * stride[i];
        }
        for (int64_t j = idx_lo[last]; j <= idx_hi[last]; ++j) {
            double dc = lo_last + (static_cast<double>(j) + 0.5) * delta - s[last];
            double r2 = ps + dc * dc;
            if (r2 > w2) continue;
            double mass = masses[static_cast<size_t>(base + j)];
            if (mass == 0.0) continue;
            double r = std::sqrt(r2);
            if (ms == nullptr) {
                for (int t = 0; t < k; ++t) out[t] += table_value(t, r) * mass;
            } else if (!complement) {
                double io = iota(r, ms[0]);
                if (io == 0.0) continue;
                double iom = io * mass;
                for (int t = 0; t < k; ++t) out[t] += table_value(t, r) * iom;
            } else {
                bool any = false;
                for (int i = 0; i < nm; ++i) {
                    co[i] = 1.0 - iota(r, ms[i]);
                    any = any || co[i] != 0.0;
                }
                if (!any) continue;
                for (int t = 0; t < k; ++t) {
                    double tvm = table_value(t, r) * mass;
                    if (tvm == 0.0) continue;
                    double* row = out + static_cast<size_t>(t) * static_cast<size_t>(nm);
                    for (int i = 0; i < nm; ++i)
                        if (co[i] != 0.0) row[i] += tvm * co[i];
                }
            }
        }
        int ax = last - 1;
        while (ax >= 0) {
            if (++cur[ax] <= idx_hi[ax]) break;
            cur[ax] = idx_lo[ax];
            --ax;
        }
        if (ax < 0) break;
    }
}

double field_evaluator::stationary(const std::vector<double>& masses, const double* u,
                                   const double* s) const {
    if (static_cast<int64_t>(masses.size()) != grid_.cell_count())
        throw std::invalid_argument("field: mass vector does not match the grid");
    check_coverage(s, radius_);
    const int k = g_.terms();
    std::vector<double> sums(static_cast<size_t>(k));
    accumulate(masses, s, radius_, nullptr, 1, false, sums.data());
    double out = 0.0;
    for (int t = 0; t < k; ++t) out += g_.coeff(t, u, grid_.dim()) * sums[static_cast<size_t>(t)];
    return out;
}

double field_evaluator::locally_stationary(const std::vector<double>& masses, const double* s,
                                           double A_n) const {
    if (!(A_n > 0.0)) throw std::invalid_argument("field: A_n must be positive");
    double u[8];
    const int d = grid_.dim();
    for (int i = 0; i < d; ++i) u[i] = s[i] / A_n;
    return stationary(masses, u, s);
}

double field_evaluator::truncated(const std::vector<double>& masses, const double* u,
                                  const double* s, double m) const {
    if (static_cast<int64_t>(masses.size()) != grid_.cell_count())
        throw std::invalid_argument("field: mass vector does not match the grid");
    if (!(m > 0.0)) throw std::invalid_argument("field: truncation radius must be positive");
    double window = std::min(m, radius_);
    check_coverage(s, window);
    const int k = g_.terms();
    std::vector<double> sums(static_cast<size_t>(k));
    accumulate(masses, s, window, &m, 1, false, sums.data());
    double out = 0.0;
    for (int t = 0; t < k; ++t) out += g_.coeff(t, u, grid_.dim()) * sums[static_cast<size_t>(t)];
    return out;
}

void field_evaluator::residuals(const std::vector<double>& masses, const double* u,
                                const double* s, const double* ms, int nm, double* out) const {
    if (static_cast<int64_t>(masses.size()) != grid_.cell_count())
        throw std::invalid_argument("field: mass vector does not match the grid");
    if (nm < 1) throw std::invalid_argument("field: at least one truncation radius required");
    check_coverage(s, radius_);
    const int k = g_.terms();
    for (int start = 0; start < nm; start += 16) {
        int chunk = std::min(16, nm - start);
        std::vector<double> sums(static_cast<size_t>(k) * static_cast<size_t>(chunk));
        accumulate(masses, s, radius_, ms + start, chunk, true, sums.data());
        for (int i = 0; i < chunk; ++i) {
            double v = 0.0;
            for (int t = 0; t < k; ++t)
                v += g_.coeff(t, u, grid_.dim()) *
                     sums[static_cast<size_t>(t) * static_cast<size_t>(chunk) +
                          static_cast<size_t>(i)];
            out[start + i] = v;
        }
    }
}

field_moments stationary_moments(const exp_sum_kernel& g, const levy_characteristic& chi,
                                 const double* u, int d) {
    g.validate();
    chi.validate();
    if (d < 1 || d > 8) throw validation_error({"moments.d: must be between 1 and 8"});
    const double surface =
        2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
    const double rcut = 60.0 / g.c0();
    auto f1 = [&](double r) { return g.eval(u, d, r) * std::pow(r, d - 1); };
    auto f2 = [&](double r) {
        double v = g.eval(u, d, r);
        return v * v * std::pow(r, d - 1);
    };
    auto integrate = [&](auto f) {
        double rough = simpson_fixed(f, 0.0, rcut, 4000);
        double tol = 1e-9 * std::max(std::fabs(rough), 1e-12);
        return simpson_adaptive(f, 0.0, rcut, tol);
    };
    field_moments out;
    out.mean = chi.mu0() * surface * integrate(f1);
    out.variance = chi.var0() * surface * integrate(f2);
    return out;
}

truncation_estimate estimate_truncation_error(const exp_sum_kernel& g,
                                              const levy_characteristic& chi, double A_n, int d,
                                              double delta, std::vector<double> ms, int q,
                                              int replicates, uint64_t seed, int threads) {
    g.validate();
    chi.validate();
    issue_list iss;
    iss.require(A_n > 0.0, "truncation.A_n: must be positive");
    iss.require(d >= 1 && d <= 8, "truncation.d: must be between 1 and 8");
    iss.require(delta > 0.0, "truncation.delta: must be positive");
    iss.require(!ms.empty(), "truncation.m: at least one radius required");
    iss.require(q >= 2 && q % 2 == 0, "truncation.q: moment order must be even and >= 2");
    iss.require(replicates >= 2, "truncation.replicates: need at least 2");
    for (double m : ms)
        if (!(m > 0.0)) {
            iss.add("truncation.m: radii must be positive");
            break;
        }
    iss.check();

    cell_grid grid = make_field_grid(A_n, d, g.c0(), delta);
    field_evaluator ev(g, grid);
    std::vector<double> s(static_cast<size_t>(d), 0.5 * A_n);
    std::vector<double> u(static_cast<size_t>(d), 0.5);
    const int nm = static_cast<int>(ms.size());

    // per replicate residuals, filled in parallel, reduced in replicate order
    std::vector<double> res(static_cast<size_t>(replicates) * static_cast<size_t>(nm));
    parallel_for(replicates, threads, [&](int64_t lo, int64_t hi) {
        for (int64_t rep = lo; rep < hi; ++rep) {
            auto masses = sample_levy_masses(grid, chi, seed, static_cast<uint64_t>(rep));
            ev.residuals(masses, u.data(), s.data(), ms.data(), nm,
                         res.data() + static_cast<size_t>(rep) * static_cast<size_t>(nm));
        }
    });

    truncation_estimate out;
    out.m = ms;
    out.gamma.resize(static_cast<size_t>(nm));
    out.se.resize(static_cast<size_t>(nm));
    for (int i = 0; i < nm; ++i) {
        double s1 = 0.0, sq = 0.0;
        for (int rep = 0; rep < replicates; ++rep) {
            double r = res[static_cast<size_t>(rep) * static_cast<size_t>(nm) +
                           static_cast<size_t>(i)];
            double p = std::pow(std::fabs(r), q);
            s1 += p;
            sq += p * p;
        }
        double mq = s1 / replicates;
        double gamma = std::pow(mq, 1.0 / q);
        // delta method: se(gamma) = se(mq) * (1/q) * mq^(1/q - 1)
        double var_mq = (sq - s1 * s1 / replicates) / (replicates - 1.0) / replicates;
        out.gamma[static_cast<size_t>(i)] = gamma;
        out.se[static_cast<size_t>(i)] =
            gamma > 0.0 ? std::sqrt(std::max(0.0, var_mq)) * std::pow(mq, 1.0 / q - 1.0) / q : 0.0;
    }

    // least squares slope of log(gamma) on m over positive estimates
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int npos = 0;
    for (int i = 0; i < nm; ++i)
        if (out.gamma[static_cast<size_t>(i)] > 0.0) {
            double x = ms[static_cast<size_t>(i)];
            double y = std::log(out.gamma[static_cast<size_t>(i)]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++npos;
        }
    out.slope = npos >= 2 ? (npos * sxy - sx * sy) / (npos * sxx - sx * sx) : 0.0;
    return out;
}

} // namespace lsrf
