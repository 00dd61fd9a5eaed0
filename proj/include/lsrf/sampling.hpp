#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lsrf/common.hpp"
#include "lsrf/rng.hpp"

namespace lsrf {

// site density families on the unit cube
enum class density_family { uniform, product_beta, piecewise_constant };

std::string to_string(density_family f);
density_family density_family_from_string(const std::string& name);

// f_S on [0,1]^d: uniform, per-coordinate beta product, or piecewise constant
// on a k^d cell grid (row-major weights, first axis slowest)
struct density_spec {
    density_family family = density_family::uniform;
    std::vector<double> alpha; // beta shape per coordinate, >= 1
    std::vector<double> beta;  // beta shape per coordinate, >= 1
    int cells_per_axis = 0;
    std::vector<double> weights;

    // checks shape arity, positivity, and unit integral (tol 1e-6)
    void validate(int d) const;
    double value(const double* u, int d) const;
    // exact integral of f_S over [0,1]^d
    double integral(int d) const;
};

// stochastic sampling design: n i.i.d. sites on [0,A_n]^d drawn as A_n times
// unit-cube draws from f_S
struct sampling_design {
    int d = 1;
    int64_t n = 0;
    double A_n = 0.0;
    density_spec density;
    uint64_t seed = 0;
    double c0_lower = 1e-6; // lower bound required of n * A_n^{-d}

    void validate() const;
};

struct site_set {
    int d = 0;
    double A_n = 0.0;
    std::vector<double> unit;  // row-major n x d, entries in [0,1]
    std::vector<double> sites; // row-major n x d, sites = A_n * unit exactly

    int64_t n() const {
        return d == 0 ? 0 : static_cast<int64_t>(sites.size()) / d;
    }
    // membership in [0,A_n]^d and the exact scaling relation
    void validate() const;
};

// deterministic given the seed; coordinates via per-site counter streams
site_set draw_sites(const sampling_design& design, int threads = 1);

// asymptotic regime by the site density ratio n * A_n^{-d}
struct regime_report {
    double ratio = 0.0;
    double threshold = 0.0;
    bool pure = false; // pure increasing domain when ratio <= threshold
};

regime_report classify_regime(int64_t n, double A_n, int d, double kappa_max = 100.0);

// big/small block decomposition of [0,A_n]^d: blocks of edge A3 = A1 + A2,
// each split along every axis into a big part (ell*A3, ell*A3 + A1] and a
// small part (ell*A3 + A1, (ell+1)*A3]
struct block_partition {
    double A_n = 0.0;
    double A1 = 0.0;
    double A2 = 0.0;
    int d = 1;
    int64_t per_axis = 0; // ceil(A_n / A3) blocks per axis

    double A3() const { return A1 + A2; }
    int64_t block_count() const;
    int64_t sub_block_count() const; // block_count * 2^d
    void decompose(int64_t flat, int64_t* ell) const;
    int64_t flatten(const int64_t* ell) const;
    // block fully inside [0,A_n]^d: (ell_j + 1) A3 <= A_n for every axis
    bool interior(const int64_t* ell) const;
    // half-open interval of the axis-j factor, eps = 1 big, eps = 2 small
    std::pair<double, double> sub_interval(int64_t ell_j, int eps) const;
};

block_partition build_block_partition(double A_n, double A1, double A2, int d);

// default block scales A1 = A_n^0.3 and A2 = A_n^0.15
double default_block_scale_big(double A_n);
double default_block_scale_small(double A_n);

// exact sub-block volume A1^q * A2^(d-q), multiplied in one canonical order
double block_volume(double A1, double A2, int q, int d);

// per-sub-block site counts plus occupancy bound report; sub-block flat index
// is block_index * 2^d + mask with bit j set when eps_j = 1
struct block_assignment {
    int64_t n = 0;
    std::vector<int64_t> counts;
    std::vector<uint8_t> flagged;
    double flag_constant = 0.0; // C in the sub-block bound C |Gamma| n A_n^{-d}
    std::vector<int64_t> cube_counts; // unit-cube histogram, row-major
    std::vector<uint8_t> cube_flagged;
    double cube_bound = 0.0; // 2 (log n + n A_n^{-d})
    int64_t cubes_per_axis = 0;

    int64_t flagged_sub_blocks() const;
    int64_t flagged_cubes() const;
};

block_assignment assign_sites_to_blocks(const site_set& sites, const block_partition& part,
                                        double flag_constant = 8.0, int threads = 1);

} // namespace lsrf
