#pragma once

#include <string>

#include "lsrf/config.hpp"

namespace lsrf {

// cfg.output when set, else $LSRF_OUTPUT_ROOT/scenario, else ./scenario
std::string resolve_output_dir(const run_config& cfg);

// runs one subcommand end to end: creates out_dir, writes the documented CSV
// outputs, and always writes manifest.json (recording the error on failure).
// Partial CSV outputs are deleted when the run fails. Returns the process
// exit code: 0 success, 1 scenario error, 2 configuration error.
// Subcommands: simulate, sample, fit, backfit, experiment-rate,
// experiment-clt, experiment-additive, experiment-mn-dep, ci.
int dispatch(const std::string& subcommand, const run_config& cfg, const std::string& out_dir);

} // namespace lsrf
