#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lsrf/config.hpp"
#include "lsrf/csvio.hpp"
#include "lsrf/dispatch.hpp"
#include "lsrf/estimators.hpp"
#include "lsrf/experiments.hpp"
#include "lsrf/sampling.hpp"

namespace fs = std::filesystem;
using namespace lsrf;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("lsrf_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool mentions(const std::vector<std::string>& issues, const std::string& needle) {
    for (const std::string& line : issues)
        if (line.find(needle) != std::string::npos) return true;
    return false;
}

// rows of a CSV file with `# key value` comment lines skipped
struct parsed_csv {
    std::string header;
    std::vector<std::vector<double>> rows;
};

parsed_csv read_numeric_csv(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    parsed_csv out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (out.header.empty()) {
            out.header = line;
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        out.rows.push_back(std::move(row));
    }
    return out;
}

// a config exercising every section with non-default values
const char* rich_text = R"({
  "scenario": "roundtrip-demo",
  "seed": 42,
  "threads": 2,
  "output": "somewhere/else",
  "field": {
    "kernel_a": [1.0, 0.5],
    "kernel_b": [0.25, 0.0],
    "kernel_c": [1.0, 2.0],
    "gamma0": 0.1,
    "sigma0": 0.8,
    "lambda": 2.0,
    "jump_family": "gaussian",
    "jump_a": 0.0,
    "jump_b": 0.5,
    "delta": 0.2,
    "taper_radii": [2.0, 4.0],
    "moment_order": 4,
    "save_masses": true
  },
  "sampling": {
    "d": 2,
    "n": 1500,
    "A_n": 30.0,
    "density_family": "product_beta",
    "alpha": [2.0, 2.0],
    "beta": [3.0, 3.0],
    "A1": 9.0,
    "A2": 4.0,
    "flag_constant": 6.0,
    "kappa_max": 50.0
  },
  "kernel": {"family": "epanechnikov", "rule": "rate", "c": 0.9},
  "estimator": {
    "target": "regression",
    "denom_floor": 1e-10,
    "tol": 1e-7,
    "max_iter": 150,
    "grid_points": 81,
    "u_points": 2,
    "x_points": 4,
    "x_lo": [0.1],
    "x_hi": [0.9],
    "eval_u": [0.5, 0.5],
    "eval_x": [0.4]
  },
  "experiment": {
    "kind": "gaussian_iid",
    "p": 1,
    "schedule_n": [400, 800],
    "schedule_A": [20.0, 28.0],
    "replicates": 4,
    "truth": {"name": "linear", "value": 0.2, "u_coef": [0.3, 0.0], "x_coef": [0.5]},
    "noise_sigma": 0.3,
    "x_center": 0.4,
    "x_trend": 0.2,
    "tau": 0.1
  }
})";

} // namespace

TEST_CASE("minimal config text fills documented defaults") {
    run_config cfg = parse_config_text("{}");
    CHECK(cfg.kernel.family == "epanechnikov");
    CHECK(cfg.kernel.rule == "rate");
    CHECK(cfg.estimator.tol == 1e-8);
    CHECK(cfg.estimator.target == "regression");
    CHECK(cfg.scenario == "run");
    CHECK(cfg.seed == 1);
    CHECK(cfg.threads == 0);
    CHECK(cfg.sampling.d == 2);
    CHECK(cfg.sampling.n == 1000);
    CHECK(cfg.sampling.density_family == "uniform");
    CHECK(cfg.experiment.kind == "gaussian_iid");
    CHECK(cfg.experiment.truth.name == "zero");
    CHECK(cfg.warnings.empty());
}

TEST_CASE("block scales out of order name both keys") {
    std::string text = R"({"sampling": {"A1": 4.0, "A2": 9.0}})";
    try {
        parse_config_text(text);
        FAIL("expected a validation error");
    } catch (const validation_error& err) {
        CHECK(mentions(err.issues(), "sampling.A2"));
        CHECK(mentions(err.issues(), "sampling.A1"));
    }
}

TEST_CASE("strict parsing collects every violation in one pass") {
    std::string text = R"({
      "sed": 7,
      "kernel": {"family": "epanechnikov", "flavor": 2},
      "sampling": {"n": -5},
      "estimator": {"tol": "tight"}
    })";
    try {
        parse_config_text(text);
        FAIL("expected a validation error");
    } catch (const validation_error& err) {
        CHECK(err.issues().size() >= 4);
        CHECK(mentions(err.issues(), "sed: unknown key"));
        CHECK(mentions(err.issues(), "kernel.flavor: unknown key"));
        CHECK(mentions(err.issues(), "sampling.n"));
        CHECK(mentions(err.issues(), "estimator.tol"));
    }
}

TEST_CASE("degenerate driving measure is rejected") {
    std::string text = R"({"field": {"sigma0": 0.0}})";
    try {
        parse_config_text(text);
        FAIL("expected a validation error");
    } catch (const validation_error& err) {
        CHECK(mentions(err.issues(), "field.gamma0/sigma0/lambda"));
        CHECK(mentions(err.issues(), "degenerate"));
    }
}

TEST_CASE("unknown truth and bad schedule are reported together") {
    std::string text = R"({
      "experiment": {
        "truth": {"name": "mystery"},
        "schedule_n": [800, 400],
        "schedule_A": [20.0, 28.0]
      }
    })";
    try {
        parse_config_text(text);
        FAIL("expected a validation error");
    } catch (const validation_error& err) {
        CHECK(mentions(err.issues(), "truth.name"));
        CHECK(mentions(err.issues(), "schedule_n"));
    }
}

TEST_CASE("serialization round-trips to an equal config") {
    run_config cfg = parse_config_text(rich_text);
    std::string s1 = serialize_config(cfg);
    run_config back = parse_config_text(s1);
    std::string s2 = serialize_config(back);
    CHECK(s1 == s2);
    CHECK(config_digest(cfg) == config_digest(back));

    // the round trip preserves individual fields, not just the rendering
    CHECK(back.scenario == "roundtrip-demo");
    CHECK(back.seed == 42);
    CHECK(back.field.lambda == 2.0);
    CHECK(back.field.save_masses);
    CHECK(back.sampling.A1 == 9.0);
    CHECK(back.sampling.alpha == std::vector<double>{2.0, 2.0});
    CHECK(back.estimator.x_lo == std::vector<double>{0.1});
    CHECK(back.experiment.schedule_n == std::vector<int64_t>{400, 800});
    CHECK(back.experiment.truth.x_coef == std::vector<double>{0.5});
}

TEST_CASE("digest tracks the computation, not the destination") {
    run_config cfg = parse_config_text(rich_text);
    uint64_t base = config_digest(cfg);

    run_config moved = cfg;
    moved.output = "elsewhere";
    moved.threads = 7;
    CHECK(config_digest(moved) == base);

    run_config reseeded = cfg;
    reseeded.seed = 43;
    CHECK(config_digest(reseeded) != base);

    run_config retuned = cfg;
    retuned.kernel.c = 0.95;
    CHECK(config_digest(retuned) != base);

    CHECK(digest_hex(base).size() == 16);
}

TEST_CASE("bandwidth rules follow the configured rule") {
    run_config cfg = parse_config_text(R"({"kernel": {"rule": "rate", "c": 0.9}})");
    CHECK(config_bandwidth(cfg, 1024, 3) ==
          doctest::Approx(0.9 * std::pow(1024.0, -1.0 / 7.0)).epsilon(1e-15));
    CHECK(cfg.warnings.empty());

    run_config manual = parse_config_text(R"({"kernel": {"rule": "manual", "h": 0.2}})");
    CHECK(config_bandwidth(manual, 1024, 3) == 0.2);
    CHECK(!manual.warnings.empty());

    CHECK_THROWS_AS(parse_config_text(R"({"kernel": {"rule": "manual"}})"), validation_error);
}

TEST_CASE("site files reproduce their numbers bitwise") {
    fs::path dir = fresh_dir("sites");
    run_config cfg = parse_config_text(R"({"seed": 9, "sampling": {"n": 57, "A_n": 8.0}})");
    site_set sites = draw_sites(to_sampling_design(cfg), 1);

    fs::path file = dir / "sites.csv";
    write_sites_csv(file.string(), sites, report_preamble("abc", {9}));
    site_set back = read_sites_csv(file.string());

    REQUIRE(back.n() == sites.n());
    CHECK(back.d == sites.d);
    CHECK(back.A_n == sites.A_n);
    CHECK(back.unit == sites.unit);
    CHECK(back.sites == sites.sites);
    fs::remove_all(dir);
}

TEST_CASE("dataset files reproduce their numbers bitwise") {
    fs::path dir = fresh_dir("dataset");
    run_config cfg = parse_config_text(R"({
      "seed": 11,
      "sampling": {"n": 40, "A_n": 7.0},
      "experiment": {
        "kind": "gaussian_iid",
        "schedule_n": [40],
        "schedule_A": [7.0],
        "truth": {"name": "linear", "x_coef": [1.0]},
        "noise_sigma": 0.2
      }
    })");
    experiment_config ecfg = to_experiment_config(cfg);
    dataset data = generate_scenario(ecfg, 40, 7.0, cfg.seed, 1);

    fs::path file = dir / "data.csv";
    write_dataset_csv(file.string(), data, report_preamble("abc", {11}));
    dataset back = read_dataset_csv(file.string());

    REQUIRE(back.n() == data.n());
    CHECK(back.p == data.p);
    CHECK(back.sites.A_n == data.sites.A_n);
    CHECK(back.sites.sites == data.sites.sites);
    CHECK(back.X == data.X);
    CHECK(back.Y == data.Y);
    fs::remove_all(dir);
}

TEST_CASE("sample subcommand writes one row per site") {
    fs::path dir = fresh_dir("sample");
    run_config cfg = parse_config_text(
        R"({"scenario": "io-sample", "seed": 5, "sampling": {"n": 100}})");
    CHECK(dispatch("sample", cfg, dir.string()) == 0);

    parsed_csv table = read_numeric_csv(dir / "sites.csv");
    CHECK(table.header == "site_1,site_2,unit_1,unit_2");
    CHECK(table.rows.size() == 100);
    for (const auto& row : table.rows) REQUIRE(row.size() == 4);

    std::string manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"status\": \"ok\"") != std::string::npos);
    CHECK(manifest.find("\"subcommand\": \"sample\"") != std::string::npos);
    CHECK(fs::exists(dir / "summary.txt"));
    fs::remove_all(dir);
}

TEST_CASE("rate experiment reruns byte-identically") {
    fs::path first = fresh_dir("rate_a");
    fs::path second = fresh_dir("rate_b");
    run_config cfg = parse_config_text(R"({
      "scenario": "io-rate",
      "seed": 21,
      "estimator": {"u_points": 1, "x_points": 3},
      "experiment": {
        "kind": "gaussian_iid",
        "schedule_n": [400, 600, 900],
        "schedule_A": [20.0, 24.0, 30.0],
        "replicates": 4,
        "truth": {"name": "linear", "value": 0.2, "x_coef": [0.5]},
        "noise_sigma": 0.3
      }
    })");
    CHECK(dispatch("experiment-rate", cfg, first.string()) == 0);
    CHECK(dispatch("experiment-rate", cfg, second.string()) == 0);
    CHECK(slurp(first / "report.csv") == slurp(second / "report.csv"));
    CHECK(slurp(first / "summary.txt") == slurp(second / "summary.txt"));
    fs::remove_all(first);
    fs::remove_all(second);
}

TEST_CASE("fit chain through files equals the in-process pipeline") {
    fs::path dir = fresh_dir("chain");
    run_config cfg = parse_config_text(R"({
      "scenario": "io-chain",
      "seed": 31,
      "sampling": {"n": 2000, "A_n": 40.0},
      "kernel": {"c": 1.0},
      "estimator": {"u_points": 3, "x_points": 5},
      "experiment": {
        "kind": "gaussian_iid",
        "truth": {"name": "sine-square", "value": 0.2, "u_coef": [0.3, 0.2], "x_coef": [0.5]},
        "noise_sigma": 0.3
      }
    })");
    REQUIRE(dispatch("sample", cfg, dir.string()) == 0);
    REQUIRE(dispatch("simulate", cfg, dir.string()) == 0);
    REQUIRE(dispatch("fit", cfg, dir.string()) == 0);

    // same computation without touching disk
    experiment_config ecfg = to_experiment_config(cfg);
    ecfg.schedule.emplace_back(cfg.sampling.n, cfg.sampling.region_size());
    site_set sites = draw_sites(to_sampling_design(cfg), 1);
    dataset data = generate_scenario(ecfg, std::move(sites), cfg.seed, 1);

    kernel_spec ks = to_kernel_spec(cfg);
    int d = data.sites.d;
    int p = data.p;
    double h = config_bandwidth(cfg, data.n(), d + p);
    eval_grid grid = make_eval_grid(d, p, h, ks.support(), cfg.estimator.u_points,
                                    {0.0}, {1.0}, cfg.estimator.x_points);
    estimate_field est = nw_regression(data, ks, h, grid, cfg.estimator.denom_floor, 1);

    parsed_csv table = read_numeric_csv(dir / "estimates.csv");
    REQUIRE(table.rows.size() == est.value.size());
    size_t value_col = static_cast<size_t>(d + p);
    for (size_t k = 0; k < est.value.size(); ++k)
        CHECK(std::abs(table.rows[k][value_col] - est.value[k]) <= 1e-14);
    fs::remove_all(dir);
}

TEST_CASE("failed runs leave a manifest and no data files") {
    fs::path dir = fresh_dir("fail_fit");
    run_config cfg = parse_config_text(R"({"scenario": "io-fail", "seed": 3})");

    // fit with no data.csv present is a scenario error
    CHECK(dispatch("fit", cfg, dir.string()) == 1);
    CHECK(!fs::exists(dir / "estimates.csv"));
    std::string manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"status\": \"scenario-error\"") != std::string::npos);

    // an invalid config is a config error even for a known subcommand
    fs::path dir2 = fresh_dir("fail_cfg");
    run_config bad = cfg;
    bad.sampling.A1 = 4.0;
    bad.sampling.A2 = 9.0;
    CHECK(dispatch("sample", bad, dir2.string()) == 2);
    std::string manifest2 = slurp(dir2 / "manifest.json");
    CHECK(manifest2.find("\"status\": \"config-error\"") != std::string::npos);
    CHECK(!fs::exists(dir2 / "sites.csv"));

    // unknown subcommands are config errors too
    fs::path dir3 = fresh_dir("fail_sub");
    CHECK(dispatch("transmogrify", cfg, dir3.string()) == 2);
    fs::remove_all(dir);
    fs::remove_all(dir2);
    fs::remove_all(dir3);
}

TEST_CASE("output directory resolution order") {
    run_config cfg;
    cfg.scenario = "resolve-demo";
    cfg.output = "explicit/dir";
    CHECK(resolve_output_dir(cfg) == "explicit/dir");

    cfg.output.clear();
    setenv("LSRF_OUTPUT_ROOT", "/tmp/lsrf_root_demo", 1);
    CHECK(resolve_output_dir(cfg) == "/tmp/lsrf_root_demo/resolve-demo");
    unsetenv("LSRF_OUTPUT_ROOT");
    CHECK(resolve_output_dir(cfg) == "./resolve-demo");
}
