#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "lsrf/config.hpp"
#include "lsrf/csvio.hpp"
#include "lsrf/dispatch.hpp"

namespace {

// config parsing failed: record the error where the run would have landed
int fail_before_dispatch(const std::string& subcommand, const std::string& out_override,
                         const std::string& message) {
    std::fprintf(stderr, "%s\n", message.c_str());
    namespace fs = std::filesystem;
    fs::path dir;
    if (!out_override.empty()) {
        dir = out_override;
    } else {
        const char* root = std::getenv("LSRF_OUTPUT_ROOT");
        dir = (root && *root) ? fs::path(root) : fs::path(".");
        dir /= "run";
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!ec) {
        lsrf::manifest_info info;
        info.subcommand = subcommand;
        info.status = "config-error";
        info.error = message;
        lsrf::write_manifest((dir / "manifest.json").string(), info);
    }
    return 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"simulation and kernel estimation for locally stationary random fields"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    uint64_t seed_override = 0;
    int threads_override = 0;
    app.add_option("--config", config_path, "path to the run configuration (JSON)");
    CLI::Option* out_opt = app.add_option("--out", out_override, "output directory");
    CLI::Option* seed_opt = app.add_option("--seed", seed_override, "override the config seed");
    CLI::Option* threads_opt =
        app.add_option("--threads", threads_override, "worker threads (0 = all cores)");

    const char* names[] = {"simulate", "sample", "fit", "backfit", "ci"};
    const char* helps[] = {"draw covariates and responses over a site set",
                           "draw a stochastic site set",
                           "kernel regression or density fit on data.csv",
                           "smooth backfit of an additive model on data.csv",
                           "joint confidence bands and their coverage"};
    for (int i = 0; i < 5; ++i) app.add_subcommand(names[i], helps[i])->fallthrough();

    CLI::App* experiment =
        app.add_subcommand("experiment", "Monte Carlo experiment drivers");
    experiment->require_subcommand(1);
    experiment->fallthrough();
    const char* kinds[] = {"rate", "clt", "additive", "mn-dep"};
    const char* kind_helps[] = {"sup-error decay along an n schedule",
                                "standardized statistic against the normal limit",
                                "backfit component rates, variances, and correlation",
                                "truncation-error decay in the taper radius"};
    for (int i = 0; i < 4; ++i)
        experiment->add_subcommand(kinds[i], kind_helps[i])->fallthrough();

    CLI11_PARSE(app, argc, argv);

    std::string subcommand;
    for (CLI::App* sub : app.get_subcommands()) {
        if (sub->get_name() == "experiment") {
            subcommand = "experiment-" + sub->get_subcommands().front()->get_name();
        } else {
            subcommand = sub->get_name();
        }
    }

    if (config_path.empty())
        return fail_before_dispatch(subcommand, out_override, "config: --config is required");

    lsrf::run_config cfg;
    try {
        cfg = lsrf::parse_config(config_path);
    } catch (const lsrf::validation_error& err) {
        std::string all;
        for (const std::string& issue : err.issues()) all += issue + "\n";
        if (!all.empty()) all.pop_back();
        return fail_before_dispatch(subcommand, out_override, all);
    }

    if (seed_opt->count() > 0) cfg.seed = seed_override;
    if (out_opt->count() > 0) cfg.output = out_override;
    if (threads_opt->count() > 0) cfg.threads = threads_override;
    for (const std::string& warning : cfg.warnings)
        std::fprintf(stderr, "warning: %s\n", warning.c_str());

    std::string out_dir = lsrf::resolve_output_dir(cfg);
    int code = lsrf::dispatch(subcommand, cfg, out_dir);
    if (code != 0)
        std::fprintf(stderr, "%s failed with exit code %d; see %s/manifest.json\n",
                     subcommand.c_str(), code, out_dir.c_str());
    return code;
}
