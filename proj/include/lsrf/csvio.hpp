#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lsrf/backfit.hpp"
#include "lsrf/estimators.hpp"
#include "lsrf/experiments.hpp"
#include "lsrf/sampling.hpp"

namespace lsrf {

// `# key value` comment lines written before the header row; readers skip and
// collect them. Every report carries the config digest and the seed list so a
// file identifies the run that produced it.
using csv_preamble = std::vector<std::pair<std::string, std::string>>;

csv_preamble report_preamble(const std::string& digest, const std::vector<uint64_t>& seeds);

// header: site_1..site_d, unit_1..unit_d
void write_sites_csv(const std::string& path, const site_set& sites,
                     const csv_preamble& preamble);
site_set read_sites_csv(const std::string& path);

// header: site_1..site_d, unit_1..unit_d, x_1..x_p, y
void write_dataset_csv(const std::string& path, const dataset& data,
                       const csv_preamble& preamble);
dataset read_dataset_csv(const std::string& path);

// header: u_1..u_d, x_1..x_p, value, denom, ess, degenerate
void write_estimates_csv(const std::string& path, const estimate_field& field,
                         const csv_preamble& preamble);

// header: component, x, value; fit-level scalars ride in the preamble
void write_additive_csv(const std::string& path, const additive_model& fit,
                        const std::vector<double>& x_grid, const csv_preamble& preamble);

// header: scenario, estimator, n, A_n, h, point, replicate, sup_error
void write_rate_csv(const std::string& path, const rate_report& rep,
                    const csv_preamble& preamble);

// header: scenario, n, A_n, h, component, replicate, statistic
void write_clt_csv(const std::string& path, const clt_report& rep,
                   const csv_preamble& preamble);

// header: scenario, c0, taper_m, gamma_hat, se, log_gamma
void write_decay_csv(const std::string& path, const decay_report& rep,
                     const csv_preamble& preamble);

// rate rows plus one clt block per component and the correlation matrix
void write_additive_report_csv(const std::string& path, const additive_report& rep,
                               const csv_preamble& preamble);

// header: scenario, n, A_n, h, replicate, covered
void write_coverage_csv(const std::string& path, const coverage_report& rep,
                        const csv_preamble& preamble);

// header: u_1..u_d, x_1..x_p, value, half_width, lo, hi
void write_bands_csv(const std::string& path, const std::vector<double>& eval_u,
                     const std::vector<double>& eval_x, int d, int p,
                     const std::vector<ci_band>& bands, const csv_preamble& preamble);

// plain-text companions: one human-readable line per headline quantity
std::string rate_summary(const rate_report& rep);
std::string clt_summary(const clt_report& rep);
std::string decay_summary(const decay_report& rep);
std::string additive_summary(const additive_report& rep);
std::string coverage_summary(const coverage_report& rep);

void write_text_file(const std::string& path, const std::string& content);

// run manifest, written even when the run fails
struct manifest_info {
    std::string scenario;
    std::string subcommand;
    std::string config_digest;
    uint64_t seed = 0;
    std::vector<uint64_t> replicate_seeds;
    std::string status; // ok | scenario-error | config-error
    std::string error;
    double wall_seconds = 0.0;
    std::vector<std::string> outputs;
    std::vector<std::string> warnings;
};

void write_manifest(const std::string& path, const manifest_info& info);

} // namespace lsrf
