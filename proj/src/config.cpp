#include "lsrf/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

namespace lsrf {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt_two(const char* pattern, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), pattern, a, b);
    return std::string(buf);
}

// strict section reader: every accepted key is recorded, unknown keys are
// reported after the section is consumed
class section_reader {
public:
    section_reader(const ordered_json& obj, std::string prefix, issue_list& issues)
        : obj_(obj), prefix_(std::move(prefix)), issues_(issues) {}

    void number(const char* key, double& out) {
        const ordered_json* v = take(key);
        if (!v) return;
        if (!v->is_number())
            issues_.add(where(key) + ": expected a number");
        else
            out = v->get<double>();
    }

    void integer(const char* key, int& out) {
        int64_t wide = out;
        integer64(key, wide);
        out = static_cast<int>(wide);
    }

    void integer64(const char* key, int64_t& out) {
        const ordered_json* v = take(key);
        if (!v) return;
        if (!v->is_number_integer())
            issues_.add(where(key) + ": expected an integer");
        else
            out = v->get<int64_t>();
    }

    void unsigned64(const char* key, uint64_t& out) {
        const ordered_json* v = take(key);
        if (!v) return;
        if (!v->is_number_integer() || (v->is_number_integer() && v->get<int64_t>() < 0 &&
                                        !v->is_number_unsigned()))
            issues_.add(where(key) + ": expected a non-negative integer");
        else
            out = v->get<uint64_t>();
    }

    void boolean(const char* key, bool& out) {
        const ordered_json* v = take(key);
        if (!v) return;
        if (!v->is_boolean())
            issues_.add(where(key) + ": expected true or false");
        else
            out = v->get<bool>();
    }

    void text(const char* key, std::string& out) {
        const ordered_json* v = take(key);
        if (!v) return;
        if (!v->is_string())
            issues_.add(where(key) + ": expected a string");
        else
            out = v->get<std::string>();
    }

    void number_array(const char* key, std::vector<double>& out) {
        const ordered_json* v = take(key);
        if (!v) return;
        if (!v->is_array()) {
            issues_.add(where(key) + ": expected an array of numbers");
            return;
        }
        std::vector<double> vals;
        for (const auto& e : *v) {
            if (!e.is_number()) {
                issues_.add(where(key) + ": expected an array of numbers");
                return;
            }
            vals.push_back(e.get<double>());
        }
        out = std::move(vals);
    }

    void integer_array(const char* key, std::vector<int64_t>& out) {
        const ordered_json* v = take(key);
        if (!v) return;
        if (!v->is_array()) {
            issues_.add(where(key) + ": expected an array of integers");
            return;
        }
        std::vector<int64_t> vals;
        for (const auto& e : *v) {
            if (!e.is_number_integer()) {
                issues_.add(where(key) + ": expected an array of integers");
                return;
            }
            vals.push_back(e.get<int64_t>());
        }
        out = std::move(vals);
    }

    const ordered_json* object(const char* key) {
        const ordered_json* v = take(key);
        if (!v) return nullptr;
        if (!v->is_object()) {
            issues_.add(where(key) + ": expected an object");
            return nullptr;
        }
        return v;
    }

    // report keys present in the file but never requested
    void finish() {
        for (const auto& item : obj_.items())
            if (!seen_.count(item.key())) issues_.add(where(item.key().c_str()) + ": unknown key");
    }

private:
    std::string where(const char* key) const {
        return prefix_.empty() ? std::string(key) : prefix_ + "." + key;
    }
    const ordered_json* take(const char* key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    const ordered_json& obj_;
    std::string prefix_;
    issue_list& issues_;
    std::set<std::string> seen_;
};

void read_truth(const ordered_json& obj, truth_spec& t, issue_list& issues,
                const std::string& prefix) {
    section_reader r(obj, prefix, issues);
    r.text("name", t.name);
    r.number("value", t.value);
    r.number_array("u_coef", t.u_coef);
    r.number_array("x_coef", t.x_coef);
    r.number_array("phase", t.phase);
    r.finish();
}

void read_field(const ordered_json& obj, field_section& f, issue_list& issues) {
    section_reader r(obj, "field", issues);
    r.number_array("kernel_a", f.kernel_a);
    r.number_array("kernel_b", f.kernel_b);
    r.number_array("kernel_c", f.kernel_c);
    r.number("gamma0", f.gamma0);
    r.number("sigma0", f.sigma0);
    r.number("lambda", f.lambda);
    r.text("jump_family", f.jump_family);
    r.number("jump_a", f.jump_a);
    r.number("jump_b", f.jump_b);
    r.number("delta", f.delta);
    r.number("coverage_tol", f.coverage_tol);
    r.number_array("taper_radii", f.taper_radii);
    r.integer("moment_order", f.moment_order);
    r.boolean("save_masses", f.save_masses);
    r.finish();
}

void read_sampling(const ordered_json& obj, sampling_section& s, issue_list& issues) {
    section_reader r(obj, "sampling", issues);
    r.integer("d", s.d);
    r.integer64("n", s.n);
    r.number("A_n", s.A_n);
    r.text("density_family", s.density_family);
    r.number_array("alpha", s.alpha);
    r.number_array("beta", s.beta);
    r.integer("cells_per_axis", s.cells_per_axis);
    r.number_array("weights", s.weights);
    r.number("A1", s.A1);
    r.number("A2", s.A2);
    r.number("flag_constant", s.flag_constant);
    r.number("kappa_max", s.kappa_max);
    r.finish();
}

void read_kernel(const ordered_json& obj, kernel_section& k, issue_list& issues) {
    section_reader r(obj, "kernel", issues);
    r.text("family", k.family);
    r.text("rule", k.rule);
    r.number("h", k.h);
    r.number("c", k.c);
    r.finish();
}

void read_estimator(const ordered_json& obj, estimator_section& e, issue_list& issues) {
    section_reader r(obj, "estimator", issues);
    r.text("target", e.target);
    r.number("denom_floor", e.denom_floor);
    r.number("tol", e.tol);
    r.integer("max_iter", e.max_iter);
    r.integer("grid_points", e.grid_points);
    r.integer("u_points", e.u_points);
    r.integer("x_points", e.x_points);
    r.number_array("x_lo", e.x_lo);
    r.number_array("x_hi", e.x_hi);
    r.number_array("eval_u", e.eval_u);
    r.number_array("eval_x", e.eval_x);
    r.finish();
}

void read_experiment(const ordered_json& obj, experiment_section& e, issue_list& issues) {
    section_reader r(obj, "experiment", issues);
    r.text("kind", e.kind);
    r.integer("p", e.p);
    r.integer_array("schedule_n", e.schedule_n);
    r.number_array("schedule_A", e.schedule_A);
    r.integer("replicates", e.replicates);
    if (const ordered_json* t = r.object("truth")) read_truth(*t, e.truth, issues, "experiment.truth");
    r.number("noise_sigma", e.noise_sigma);
    r.number("x_center", e.x_center);
    r.number("x_trend", e.x_trend);
    r.number("x_scale", e.x_scale);
    r.number("tau", e.tau);
    r.number("bandwidth_exponent", e.bandwidth_exponent);
    r.finish();
}

void merge_validation(issue_list& issues, const std::function<void()>& fn,
                      const std::string& prefix) {
    try {
        fn();
    } catch (const validation_error& err) {
        for (const auto& msg : err.issues()) issues.add(prefix + msg);
    }
}

ordered_json truth_json(const truth_spec& t) {
    ordered_json j;
    j["name"] = t.name;
    j["value"] = t.value;
    j["u_coef"] = t.u_coef;
    j["x_coef"] = t.x_coef;
    j["phase"] = t.phase;
    return j;
}

} // namespace

void truth_spec::collect_issues(int d, int p, issue_list& issues,
                                const std::string& where) const {
    static const std::set<std::string> names = {"zero", "constant", "linear", "sine-square",
                                                "additive-trig"};
    if (!names.count(name))
        issues.add(where + ".name: unknown truth '" + name +
                   "' (expected zero, constant, linear, sine-square, or additive-trig)");
    if (!u_coef.empty() && static_cast<int>(u_coef.size()) != d)
        issues.add(where + ".u_coef: needs one entry per site coordinate or none");
    if (!x_coef.empty() && static_cast<int>(x_coef.size()) != p)
        issues.add(where + ".x_coef: needs one entry per covariate or none");
    if (!phase.empty() && name != "additive-trig")
        issues.add(where + ".phase: only the additive-trig family takes phases");
    if (!phase.empty() && static_cast<int>(phase.size()) != p)
        issues.add(where + ".phase: needs one entry per covariate or none");
    if (!std::isfinite(value)) issues.add(where + ".value: must be finite");
    for (double v : u_coef)
        if (!std::isfinite(v)) issues.add(where + ".u_coef: entries must be finite");
    for (double v : x_coef)
        if (!std::isfinite(v)) issues.add(where + ".x_coef: entries must be finite");
}

std::function<double(const double*, const double*)> truth_spec::joint(int d, int p) const {
    std::vector<double> uc = u_coef;
    std::vector<double> xc = x_coef;
    std::vector<double> ph = phase;
    uc.resize(static_cast<size_t>(d), 0.0);
    xc.resize(static_cast<size_t>(p), 0.0);
    ph.resize(static_cast<size_t>(p), 0.0);
    double v0 = value;
    if (name == "zero") return [](const double*, const double*) { return 0.0; };
    if (name == "constant") return [v0](const double*, const double*) { return v0; };
    if (name == "linear")
        return [v0, uc, xc, d, p](const double* u, const double* x) {
            double acc = v0;
            for (int i = 0; i < d; ++i) acc += uc[static_cast<size_t>(i)] * u[i];
            for (int l = 0; l < p; ++l) acc += xc[static_cast<size_t>(l)] * x[l];
            return acc;
        };
    if (name == "sine-square")
        return [v0, uc, xc, d, p](const double* u, const double* x) {
            double acc = v0;
            for (int i = 0; i < d; ++i)
                acc += uc[static_cast<size_t>(i)] * std::sin(std::numbers::pi * u[i]);
            for (int l = 0; l < p; ++l) acc += xc[static_cast<size_t>(l)] * x[l] * x[l];
            return acc;
        };
    if (name == "additive-trig")
        return [v0, uc, xc, ph, d, p](const double* u, const double* x) {
            double acc = v0;
            for (int i = 0; i < d; ++i) acc += uc[static_cast<size_t>(i)] * u[i];
            for (int l = 0; l < p; ++l)
                acc += xc[static_cast<size_t>(l)] *
                       std::cos(2.0 * std::numbers::pi * (x[l] - ph[static_cast<size_t>(l)]));
            return acc;
        };
    throw validation_error({"truth.name: unknown truth '" + name + "'"});
}

std::function<double(const double*)> truth_spec::base(int d) const {
    if (name != "additive-trig")
        throw validation_error({"truth.name: additive decomposition needs additive-trig"});
    std::vector<double> uc = u_coef;
    uc.resize(static_cast<size_t>(d), 0.0);
    double v0 = value;
    return [v0, uc, d](const double* u) {
        double acc = v0;
        for (int i = 0; i < d; ++i) acc += uc[static_cast<size_t>(i)] * u[i];
        return acc;
    };
}

std::vector<std::function<double(const double*, double)>> truth_spec::components(int p) const {
    if (name != "additive-trig")
        throw validation_error({"truth.name: additive decomposition needs additive-trig"});
    std::vector<double> xc = x_coef;
    std::vector<double> ph = phase;
    xc.resize(static_cast<size_t>(p), 0.0);
    ph.resize(static_cast<size_t>(p), 0.0);
    std::vector<std::function<double(const double*, double)>> out;
    for (int l = 0; l < p; ++l) {
        double amp = xc[static_cast<size_t>(l)];
        double shift = ph[static_cast<size_t>(l)];
        out.push_back([amp, shift](const double*, double x) {
            return amp * std::cos(2.0 * std::numbers::pi * (x - shift));
        });
    }
    return out;
}

exp_sum_kernel field_section::kernel() const {
    exp_sum_kernel g;
    g.a = kernel_a;
    g.b = kernel_b;
    g.c = kernel_c;
    return g;
}

levy_characteristic field_section::measure() const {
    levy_characteristic chi;
    chi.gamma0 = gamma0;
    chi.sigma0 = sigma0;
    chi.lambda = lambda;
    chi.jumps.family = jump_family_from_string(jump_family);
    chi.jumps.a = jump_a;
    chi.jumps.b = jump_b;
    return chi;
}

density_spec sampling_section::density() const {
    density_spec spec;
    spec.family = density_family_from_string(density_family);
    spec.alpha = alpha;
    spec.beta = beta;
    spec.cells_per_axis = cells_per_axis;
    spec.weights = weights;
    return spec;
}

double sampling_section::region_size() const {
    return A_n > 0.0 ? A_n : std::sqrt(static_cast<double>(n));
}

void run_config::validate() const {
    issue_list issues;

    issues.require(!scenario.empty(), "scenario: must not be empty");
    for (char ch : scenario)
        if (ch == ',' || ch == '"' || ch == '\n' || ch == '\r' || ch == ' ') {
            issues.add("scenario: must not contain spaces, commas, quotes, or line breaks");
            break;
        }
    issues.require(threads >= 0, "threads: must be non-negative (0 = all cores)");

    // field section
    issues.require(field.kernel_a.size() == field.kernel_c.size() &&
                       field.kernel_b.size() == field.kernel_c.size(),
                   "field.kernel_a/kernel_b/kernel_c: coefficient arrays must have equal "
                   "length");
    if (!field.kernel_c.empty() && field.kernel_a.size() == field.kernel_c.size() &&
        field.kernel_b.size() == field.kernel_c.size())
        merge_validation(issues, [&] { field.kernel().validate(); }, "field.");
    bool jump_known = true;
    try {
        (void)jump_family_from_string(field.jump_family);
    } catch (const validation_error&) {
        issues.add("field.jump_family: unknown family '" + field.jump_family + "'");
        jump_known = false;
    }
    if (jump_known) {
        levy_characteristic chi = field.measure();
        merge_validation(issues, [&] { chi.validate(); }, "field.");
        if (chi.var0() == 0.0 && chi.gamma0 == 0.0)
            issues.add("field.gamma0/sigma0/lambda: driving measure is degenerate (no drift, "
                       "no Gaussian part, no jumps)");
    }
    issues.require(field.delta >= 0.0, "field.delta: must be non-negative (0 = default)");
    issues.require(field.coverage_tol >= 0.0 && field.coverage_tol < 1.0,
                   "field.coverage_tol: must lie in [0, 1)");
    issues.require(field.moment_order >= 2 && field.moment_order % 2 == 0,
                   "field.moment_order: must be an even integer >= 2");
    for (double r : field.taper_radii)
        if (!(r > 0.0)) {
            issues.add("field.taper_radii: entries must be positive");
            break;
        }

    // sampling section
    issues.require(sampling.d >= 1, "sampling.d: must be at least 1");
    issues.require(sampling.n >= 1, "sampling.n: must be at least 1");
    issues.require(sampling.A_n >= 0.0, "sampling.A_n: must be non-negative (0 = sqrt(n))");
    bool family_known = true;
    try {
        (void)density_family_from_string(sampling.density_family);
    } catch (const validation_error&) {
        issues.add("sampling.density_family: unknown family '" + sampling.density_family + "'");
        family_known = false;
    }
    if (family_known && sampling.d >= 1)
        merge_validation(issues, [&] { sampling.density().validate(sampling.d); }, "sampling.");
    issues.require(sampling.A1 >= 0.0, "sampling.A1: must be non-negative (0 = default scale)");
    issues.require(sampling.A2 >= 0.0, "sampling.A2: must be non-negative (0 = default scale)");
    if (sampling.A1 > 0.0 && sampling.A2 > 0.0 && sampling.A2 > sampling.A1)
        issues.add(fmt_two("sampling.A2 (%g) must not exceed sampling.A1 (%g): big blocks "
                           "cannot be smaller than small blocks",
                           sampling.A2, sampling.A1));
    issues.require(sampling.flag_constant > 0.0, "sampling.flag_constant: must be positive");
    issues.require(sampling.kappa_max > 0.0, "sampling.kappa_max: must be positive");

    // kernel section
    bool kernel_known = true;
    try {
        kernel_family fam = kernel_family_from_string(kernel.family);
        if (fam == kernel_family::custom) {
            issues.add("kernel.family: custom kernels need a value table and cannot be "
                       "configured from a file");
            kernel_known = false;
        }
    } catch (const validation_error&) {
        issues.add("kernel.family: unknown family '" + kernel.family + "'");
        kernel_known = false;
    }
    (void)kernel_known;
    if (kernel.rule != "rate" && kernel.rule != "manual")
        issues.add("kernel.rule: must be 'rate' or 'manual'");
    if (kernel.rule == "manual")
        issues.require(kernel.h > 0.0, "kernel.h: manual rule needs a positive bandwidth");
    issues.require(kernel.c > 0.0, "kernel.c: rate constant must be positive");

    // estimator section
    if (estimator.target != "regression" && estimator.target != "density")
        issues.add("estimator.target: must be 'regression' or 'density'");
    issues.require(estimator.denom_floor > 0.0, "estimator.denom_floor: must be positive");
    issues.require(estimator.tol > 0.0, "estimator.tol: must be positive");
    issues.require(estimator.max_iter >= 1, "estimator.max_iter: must be at least 1");
    issues.require(estimator.grid_points >= 2, "estimator.grid_points: must be at least 2");
    issues.require(estimator.u_points >= 1, "estimator.u_points: must be at least 1");
    issues.require(estimator.x_points >= 1, "estimator.x_points: must be at least 1");
    size_t p = static_cast<size_t>(experiment.p > 0 ? experiment.p : 1);
    if (!estimator.x_lo.empty() || !estimator.x_hi.empty()) {
        if (estimator.x_lo.size() != p || estimator.x_hi.size() != p)
            issues.add("estimator.x_lo/x_hi: need one entry per covariate or none");
        else
            for (size_t l = 0; l < p; ++l)
                if (!(estimator.x_lo[l] < estimator.x_hi[l])) {
                    issues.add("estimator.x_lo/x_hi: lower bounds must be below upper bounds");
                    break;
                }
        if (!experiment.schedule_n.empty())
            for (size_t l = 1; l < p && l < estimator.x_lo.size(); ++l)
                if (estimator.x_lo[l] != estimator.x_lo[0] ||
                    estimator.x_hi[l] != estimator.x_hi[0]) {
                    issues.add("estimator.x_lo/x_hi: experiment grids use one covariate "
                               "window for every axis");
                    break;
                }
    }
    size_t d = static_cast<size_t>(sampling.d > 0 ? sampling.d : 1);
    if (!estimator.eval_u.empty() && estimator.eval_u.size() % d != 0)
        issues.add("estimator.eval_u: needs d entries per evaluation point");
    if (!estimator.eval_x.empty()) {
        size_t rows = estimator.eval_u.empty() ? 0 : estimator.eval_u.size() / d;
        if (estimator.eval_x.size() != rows * p)
            issues.add("estimator.eval_x: needs p entries per eval_u row");
    }

    // experiment section
    if (experiment.kind != "gaussian_iid" && experiment.kind != "uniform_iid" &&
        experiment.kind != "levy_field")
        issues.add("experiment.kind: must be gaussian_iid, uniform_iid, or levy_field");
    issues.require(experiment.p >= 1, "experiment.p: must be at least 1");
    if (experiment.kind == "levy_field" && experiment.p != 1)
        issues.add("experiment.p: levy_field covariates need p = 1");
    if (experiment.schedule_n.size() != experiment.schedule_A.size())
        issues.add("experiment.schedule_n/schedule_A: must have equal length");
    for (size_t i = 0; i + 1 < experiment.schedule_n.size(); ++i)
        if (experiment.schedule_n[i + 1] <= experiment.schedule_n[i]) {
            issues.add("experiment.schedule_n: n must increase strictly");
            break;
        }
    for (int64_t n : experiment.schedule_n)
        if (n < 1) {
            issues.add("experiment.schedule_n: entries must be at least 1");
            break;
        }
    for (double a : experiment.schedule_A)
        if (!(a > 0.0)) {
            issues.add("experiment.schedule_A: entries must be positive");
            break;
        }
    issues.require(experiment.replicates >= 1, "experiment.replicates: must be at least 1");
    experiment.truth.collect_issues(sampling.d, experiment.p, issues, "experiment.truth");
    issues.require(experiment.noise_sigma >= 0.0,
                   "experiment.noise_sigma: must be non-negative");
    issues.require(experiment.x_scale > 0.0, "experiment.x_scale: must be positive");
    issues.require(experiment.tau > 0.0 && experiment.tau < 1.0,
                   "experiment.tau: must lie strictly between 0 and 1");
    issues.require(experiment.bandwidth_exponent <= 0.0,
                   "experiment.bandwidth_exponent: must be non-positive (0 = rate rule)");

    issues.check();
}

run_config parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error({"config: cannot read '" + path + "'"});
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

run_config parse_config_text(const std::string& text) {
    ordered_json root;
    try {
        root = ordered_json::parse(text);
    } catch (const std::exception& err) {
        throw validation_error({std::string("config: JSON parse error: ") + err.what()});
    }
    if (!root.is_object()) throw validation_error({"config: top level must be an object"});

    run_config cfg;
    issue_list issues;
    section_reader r(root, "", issues);
    r.text("scenario", cfg.scenario);
    r.unsigned64("seed", cfg.seed);
    r.integer("threads", cfg.threads);
    r.text("output", cfg.output);
    if (const ordered_json* s = r.object("field")) read_field(*s, cfg.field, issues);
    if (const ordered_json* s = r.object("sampling")) read_sampling(*s, cfg.sampling, issues);
    if (const ordered_json* s = r.object("kernel")) read_kernel(*s, cfg.kernel, issues);
    if (const ordered_json* s = r.object("estimator")) read_estimator(*s, cfg.estimator, issues);
    if (const ordered_json* s = r.object("experiment"))
        read_experiment(*s, cfg.experiment, issues);
    r.finish();

    // structural and semantic violations are reported together
    merge_validation(issues, [&] { cfg.validate(); }, "");
    issues.check();

    if (cfg.kernel.rule == "manual")
        cfg.warnings.push_back("kernel.h: manual bandwidth bypasses the polynomial-rate "
                               "condition h <= C n^(-xi); asymptotic guarantees assume the "
                               "rate rule");
    return cfg;
}

std::string serialize_config(const run_config& cfg) {
    ordered_json j;
    j["scenario"] = cfg.scenario;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["output"] = cfg.output;

    ordered_json f;
    f["kernel_a"] = cfg.field.kernel_a;
    f["kernel_b"] = cfg.field.kernel_b;
    f["kernel_c"] = cfg.field.kernel_c;
    f["gamma0"] = cfg.field.gamma0;
    f["sigma0"] = cfg.field.sigma0;
    f["lambda"] = cfg.field.lambda;
    f["jump_family"] = cfg.field.jump_family;
    f["jump_a"] = cfg.field.jump_a;
    f["jump_b"] = cfg.field.jump_b;
    f["delta"] = cfg.field.delta;
    f["coverage_tol"] = cfg.field.coverage_tol;
    f["taper_radii"] = cfg.field.taper_radii;
    f["moment_order"] = cfg.field.moment_order;
    f["save_masses"] = cfg.field.save_masses;
    j["field"] = f;

    ordered_json s;
    s["d"] = cfg.sampling.d;
    s["n"] = cfg.sampling.n;
    s["A_n"] = cfg.sampling.A_n;
    s["density_family"] = cfg.sampling.density_family;
    s["alpha"] = cfg.sampling.alpha;
    s["beta"] = cfg.sampling.beta;
    s["cells_per_axis"] = cfg.sampling.cells_per_axis;
    s["weights"] = cfg.sampling.weights;
    s["A1"] = cfg.sampling.A1;
    s["A2"] = cfg.sampling.A2;
    s["flag_constant"] = cfg.sampling.flag_constant;
    s["kappa_max"] = cfg.sampling.kappa_max;
    j["sampling"] = s;

    ordered_json k;
    k["family"] = cfg.kernel.family;
    k["rule"] = cfg.kernel.rule;
    k["h"] = cfg.kernel.h;
    k["c"] = cfg.kernel.c;
    j["kernel"] = k;

    ordered_json e;
    e["target"] = cfg.estimator.target;
    e["denom_floor"] = cfg.estimator.denom_floor;
    e["tol"] = cfg.estimator.tol;
    e["max_iter"] = cfg.estimator.max_iter;
    e["grid_points"] = cfg.estimator.grid_points;
    e["u_points"] = cfg.estimator.u_points;
    e["x_points"] = cfg.estimator.x_points;
    e["x_lo"] = cfg.estimator.x_lo;
    e["x_hi"] = cfg.estimator.x_hi;
    e["eval_u"] = cfg.estimator.eval_u;
    e["eval_x"] = cfg.estimator.eval_x;
    j["estimator"] = e;

    ordered_json x;
    x["kind"] = cfg.experiment.kind;
    x["p"] = cfg.experiment.p;
    x["schedule_n"] = cfg.experiment.schedule_n;
    x["schedule_A"] = cfg.experiment.schedule_A;
    x["replicates"] = cfg.experiment.replicates;
    x["truth"] = truth_json(cfg.experiment.truth);
    x["noise_sigma"] = cfg.experiment.noise_sigma;
    x["x_center"] = cfg.experiment.x_center;
    x["x_trend"] = cfg.experiment.x_trend;
    x["x_scale"] = cfg.experiment.x_scale;
    x["tau"] = cfg.experiment.tau;
    x["bandwidth_exponent"] = cfg.experiment.bandwidth_exponent;
    j["experiment"] = x;

    return j.dump(2) + "\n";
}

uint64_t config_digest(const run_config& cfg) {
    // output directory and thread count steer execution, not results,
    // so two runs of the same computation share one digest
    run_config canonical = cfg;
    canonical.output.clear();
    canonical.threads = 0;
    std::string canon = serialize_config(canonical);
    uint64_t hash = 14695981039346656037ull;
    for (unsigned char ch : canon) {
        hash ^= static_cast<uint64_t>(ch);
        hash *= 1099511628211ull;
    }
    return hash;
}

std::string digest_hex(uint64_t digest) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return std::string(buf);
}

sampling_design to_sampling_design(const run_config& cfg) {
    sampling_design design;
    design.d = cfg.sampling.d;
    design.n = cfg.sampling.n;
    design.A_n = cfg.sampling.region_size();
    design.density = cfg.sampling.density();
    design.seed = cfg.seed;
    return design;
}

kernel_spec to_kernel_spec(const run_config& cfg) {
    kernel_spec ks;
    ks.family = kernel_family_from_string(cfg.kernel.family);
    return ks;
}

double config_bandwidth(const run_config& cfg, int64_t n, int smoothing_dim) {
    if (cfg.kernel.rule == "manual") return cfg.kernel.h;
    return cfg.kernel.c *
           std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(smoothing_dim) + 4.0));
}

experiment_config to_experiment_config(const run_config& cfg) {
    experiment_config out;
    out.scenario = cfg.scenario;
    out.kind = scenario_kind_from_string(cfg.experiment.kind);
    out.d = cfg.sampling.d;
    out.p = cfg.experiment.p;
    for (size_t i = 0; i < cfg.experiment.schedule_n.size(); ++i)
        out.schedule.emplace_back(cfg.experiment.schedule_n[i], cfg.experiment.schedule_A[i]);
    out.design_density = cfg.sampling.density();
    out.x_center = cfg.experiment.x_center;
    out.x_trend = cfg.experiment.x_trend;
    out.x_scale = cfg.experiment.x_scale;
    out.field_kernel = cfg.field.kernel();
    out.field_measure = cfg.field.measure();
    out.field_delta = cfg.field.delta;
    out.kernel = to_kernel_spec(cfg);
    out.bandwidth_c = cfg.kernel.c;
    out.bandwidth_exponent = cfg.experiment.bandwidth_exponent;
    out.denom_floor = cfg.estimator.denom_floor;
    out.replicates = cfg.experiment.replicates;
    out.seed = cfg.seed;
    out.threads = cfg.threads == 0 ? default_thread_count() : cfg.threads;
    out.u_points = cfg.estimator.u_points;
    out.x_points = cfg.estimator.x_points;
    if (!cfg.estimator.x_lo.empty()) {
        out.x_lo = cfg.estimator.x_lo.front();
        out.x_hi = cfg.estimator.x_hi.front();
    } else {
        out.x_lo = 0.0;
        out.x_hi = 1.0;
    }
    out.eval_u = cfg.estimator.eval_u;
    out.eval_x = cfg.estimator.eval_x;
    const truth_spec& t = cfg.experiment.truth;
    if (t.additive()) {
        out.m_base = t.base(cfg.sampling.d);
        out.m_add = t.components(cfg.experiment.p);
    } else {
        out.m = t.joint(cfg.sampling.d, cfg.experiment.p);
    }
    if (cfg.experiment.noise_sigma > 0.0) {
        double s = cfg.experiment.noise_sigma;
        out.sigma = [s](const double*, const double*) { return s; };
    }
    out.grid_points = cfg.estimator.grid_points;
    out.backfit_tol = cfg.estimator.tol;
    out.backfit_max_iter = cfg.estimator.max_iter;
    out.taper_radii = cfg.field.taper_radii;
    out.moment_order = cfg.field.moment_order;
    out.tau = cfg.experiment.tau;
    return out;
}

} // namespace lsrf
