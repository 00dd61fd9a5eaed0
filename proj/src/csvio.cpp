#include "lsrf/csvio.hpp"

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace lsrf {

namespace {

std::string join_seeds(const std::vector<uint64_t>& seeds) {
    std::string out;
    for (size_t i = 0; i < seeds.size(); ++i) {
        if (i) out += " ";
        out += std::to_string(seeds[i]);
    }
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw scenario_error("io: cannot write '" + path + "'");
    return out;
}

void put_preamble(std::ofstream& out, const csv_preamble& preamble) {
    for (const auto& kv : preamble) out << "# " << kv.first << " " << kv.second << "\n";
}

// parsed csv body plus the comment preamble
struct csv_table {
    std::map<std::string, std::string> meta;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

csv_table read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw scenario_error("io: cannot read '" + path + "'");
    csv_table table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::string body = line.substr(1);
            size_t start = body.find_first_not_of(' ');
            if (start == std::string::npos) continue;
            size_t sep = body.find(' ', start);
            if (sep == std::string::npos)
                table.meta[body.substr(start)] = "";
            else
                table.meta[body.substr(start, sep - start)] = body.substr(sep + 1);
            continue;
        }
        if (!have_header) {
            table.header = split_csv_line(line);
            have_header = true;
        } else {
            table.rows.push_back(split_csv_line(line));
        }
    }
    if (!have_header) throw scenario_error("io: '" + path + "' has no header row");
    return table;
}

double parse_double(const std::string& text, const std::string& path) {
    char* end = nullptr;
    double v = std::strtod(text.c_str(), &end);
    if (end == text.c_str() || *end != '\0')
        throw scenario_error("io: '" + path + "' holds a malformed number '" + text + "'");
    return v;
}

int64_t meta_int(const csv_table& table, const std::string& key, const std::string& path) {
    auto it = table.meta.find(key);
    if (it == table.meta.end())
        throw scenario_error("io: '" + path + "' is missing the '# " + key + "' line");
    return static_cast<int64_t>(parse_double(it->second, path));
}

double meta_double(const csv_table& table, const std::string& key, const std::string& path) {
    auto it = table.meta.find(key);
    if (it == table.meta.end())
        throw scenario_error("io: '" + path + "' is missing the '# " + key + "' line");
    return parse_double(it->second, path);
}

void require_header(const csv_table& table, const std::vector<std::string>& expect,
                    const std::string& path) {
    if (table.header != expect) {
        std::string got;
        for (size_t i = 0; i < table.header.size(); ++i) {
            if (i) got += ",";
            got += table.header[i];
        }
        throw scenario_error("io: '" + path + "' has header '" + got + "'");
    }
}

std::string fmt_line(const char* pattern, ...) {
    va_list args;
    va_start(args, pattern);
    char buf[512];
    std::vsnprintf(buf, sizeof(buf), pattern, args);
    va_end(args);
    return std::string(buf);
}

} // namespace

csv_preamble report_preamble(const std::string& digest, const std::vector<uint64_t>& seeds) {
    csv_preamble pre;
    pre.emplace_back("config_digest", digest);
    pre.emplace_back("seeds", join_seeds(seeds));
    return pre;
}

void write_sites_csv(const std::string& path, const site_set& sites,
                     const csv_preamble& preamble) {
    sites.validate();
    std::ofstream out = open_out(path);
    put_preamble(out, preamble);
    out << "# d " << sites.d << "\n";
    out << "# A_n " << format17(sites.A_n) << "\n";
    for (int i = 0; i < sites.d; ++i) out << "site_" << (i + 1) << ",";
    for (int i = 0; i < sites.d; ++i) out << "unit_" << (i + 1) << (i + 1 < sites.d ? "," : "");
    out << "\n";
    int64_t n = sites.n();
    for (int64_t j = 0; j < n; ++j) {
        for (int i = 0; i < sites.d; ++i)
            out << format17(sites.sites[static_cast<size_t>(j * sites.d + i)]) << ",";
        for (int i = 0; i < sites.d; ++i) {
            out << format17(sites.unit[static_cast<size_t>(j * sites.d + i)]);
            if (i + 1 < sites.d) out << ",";
        }
        out << "\n";
    }
}

site_set read_sites_csv(const std::string& path) {
    csv_table table = read_csv(path);
    site_set sites;
    sites.d = static_cast<int>(meta_int(table, "d", path));
    sites.A_n = meta_double(table, "A_n", path);
    if (sites.d < 1) throw scenario_error("io: '" + path + "' has d < 1");
    std::vector<std::string> expect;
    for (int i = 0; i < sites.d; ++i) expect.push_back("site_" + std::to_string(i + 1));
    for (int i = 0; i < sites.d; ++i) expect.push_back("unit_" + std::to_string(i + 1));
    require_header(table, expect, path);
    for (const auto& row : table.rows) {
        if (row.size() != expect.size())
            throw scenario_error("io: '" + path + "' row has wrong column count");
        for (int i = 0; i < sites.d; ++i)
            sites.sites.push_back(parse_double(row[static_cast<size_t>(i)], path));
        for (int i = 0; i < sites.d; ++i)
            sites.unit.push_back(parse_double(row[static_cast<size_t>(sites.d + i)], path));
    }
    sites.validate();
    return sites;
}

void write_dataset_csv(const std::string& path, const dataset& data,
                       const csv_preamble& preamble) {
    data.validate();
    std::ofstream out = open_out(path);
    put_preamble(out, preamble);
    int d = data.sites.d;
    out << "# d " << d << "\n";
    out << "# p " << data.p << "\n";
    out << "# A_n " << format17(data.sites.A_n) << "\n";
    for (int i = 0; i < d; ++i) out << "site_" << (i + 1) << ",";
    for (int i = 0; i < d; ++i) out << "unit_" << (i + 1) << ",";
    for (int l = 0; l < data.p; ++l) out << "x_" << (l + 1) << ",";
    out << "y\n";
    int64_t n = data.n();
    for (int64_t j = 0; j < n; ++j) {
        for (int i = 0; i < d; ++i)
            out << format17(data.sites.sites[static_cast<size_t>(j * d + i)]) << ",";
        for (int i = 0; i < d; ++i)
            out << format17(data.sites.unit[static_cast<size_t>(j * d + i)]) << ",";
        for (int l = 0; l < data.p; ++l)
            out << format17(data.X[static_cast<size_t>(j * data.p + l)]) << ",";
        out << format17(data.Y[static_cast<size_t>(j)]) << "\n";
    }
}

dataset read_dataset_csv(const std::string& path) {
    csv_table table = read_csv(path);
    dataset data;
    int d = static_cast<int>(meta_int(table, "d", path));
    data.p = static_cast<int>(meta_int(table, "p", path));
    data.sites.d = d;
    data.sites.A_n = meta_double(table, "A_n", path);
    if (d < 1 || data.p < 0) throw scenario_error("io: '" + path + "' has bad dimensions");
    std::vector<std::string> expect;
    for (int i = 0; i < d; ++i) expect.push_back("site_" + std::to_string(i + 1));
    for (int i = 0; i < d; ++i) expect.push_back("unit_" + std::to_string(i + 1));
    for (int l = 0; l < data.p; ++l) expect.push_back("x_" + std::to_string(l + 1));
    expect.push_back("y");
    require_header(table, expect, path);
    for (const auto& row : table.rows) {
        if (row.size() != expect.size())
            throw scenario_error("io: '" + path + "' row has wrong column count");
        size_t c = 0;
        for (int i = 0; i < d; ++i) data.sites.sites.push_back(parse_double(row[c++], path));
        for (int i = 0; i < d; ++i) data.sites.unit.push_back(parse_double(row[c++], path));
        for (int l = 0; l < data.p; ++l) data.X.push_back(parse_double(row[c++], path));
        data.Y.push_back(parse_double(row[c], path));
    }
    data.validate();
    return data;
}

void write_estimates_csv(const std::string& path, const estimate_field& field,
                         const csv_preamble& preamble) {
    std::ofstream out = open_out(path);
    put_preamble(out, preamble);
    int d = field.grid.dim_u();
    int p = field.grid.dim_x();
    out << "# d " << d << "\n";
    out << "# p " << p << "\n";
    for (int i = 0; i < d; ++i) out << "u_" << (i + 1) << ",";
    for (int l = 0; l < p; ++l) out << "x_" << (l + 1) << ",";
    out << "value,denom,ess,degenerate\n";
    int64_t xc = field.grid.x_count();
    std::vector<double> u(static_cast<size_t>(d));
    std::vector<double> x(static_cast<size_t>(p > 0 ? p : 1));
    for (int64_t k = 0; k < static_cast<int64_t>(field.value.size()); ++k) {
        field.grid.u_point(k / xc, u.data());
        field.grid.x_point(k % xc, x.data());
        for (int i = 0; i < d; ++i) out << format17(u[static_cast<size_t>(i)]) << ",";
        for (int l = 0; l < p; ++l) out << format17(x[static_cast<size_t>(l)]) << ",";
        out << format17(field.value[static_cast<size_t>(k)]) << ","
            << format17(field.denom[static_cast<size_t>(k)]) << ","
            << format17(field.ess[static_cast<size_t>(k)]) << ","
            << static_cast<int>(field.degenerate[static_cast<size_t>(k)]) << "\n";
    }
}

void write_additive_csv(const std::string& path, const additive_model& fit,
                        const std::vector<double>& x_grid, const csv_preamble& preamble) {
    std::ofstream out = open_out(path);
    put_preamble(out, preamble);
    out << "# m0 " << format17(fit.m0) << "\n";
    out << "# iterations " << fit.iterations << "\n";
    out << "# converged " << (fit.converged ? 1 : 0) << "\n";
    out << "component,x,value\n";
    for (size_t l = 0; l < fit.components.size(); ++l)
        for (size_t t = 0; t < x_grid.size(); ++t)
            out << (l + 1) << "," << format17(x_grid[t]) << ","
                << format17(fit.components[l][t]) << "\n";
}

void write_rate_csv(const std::string& path, const rate_report& rep,
                    const csv_preamble& preamble) {
    std::ofstream out = open_out(path);
    put_preamble(out, preamble);
    out << "scenario,estimator,n,A_n,h,point,replicate,sup_error\n";
    for (size_t i = 0; i < rep.n.size(); ++i)
        for (size_t r = 0; r < rep.sup_error[i].size(); ++r)
            out << rep.scenario << "," << rep.estimator << "," << rep.n[i] << ","
                << format17(rep.a_n[i]) << "," << format17(rep.h[i]) << "," << i << "," << r
                << "," << format17(rep.sup_error[i][r]) << "\n";
}

void write_clt_csv(const std::string& path, const clt_report& rep,
                   const csv_preamble& preamble) {
    std::ofstream out = open_out(path);
    put_preamble(out, preamble);
    out << "scenario,n,A_n,h,component,replicate,statistic\n";
    for (size_t r = 0; r < rep.statistic.size(); ++r)
        out << rep.scenario << "," << rep.n << "," << format17(rep.a_n) << ","
            << format17(rep.h) << "," << rep.component << "," << r << ","
            << format17(rep.statistic[r]) << "\n";
}

void write_decay_csv(const std::string& path, const decay_report& rep,
                     const csv_preamble& preamble) {
    std::ofstream out = open_out(path);
    put_preamble(out, preamble);
    out << "scenario,c0,taper_m,gamma_hat,se,log_gamma\n";
    for (size_t i = 0; i < rep.estimate.m.size(); ++i)
        out << rep.scenario << "," << format17(rep.c0) << "," << format17(rep.estimate.m[i])
            << "," << format17(rep.estimate.gamma[i]) << "," << format17(rep.estimate.se[i])
            << "," << format17(std::log(rep.estimate.gamma[i])) << "\n";
}

void write_additive_report_csv(const std::string& path, const additive_report& rep,
                               const csv_preamble& preamble) {
    std::ofstream out = open_out(path);
    put_preamble(out, preamble);
    out << "# correlation";
    for (double c : rep.correlation) out << " " << format17(c);
    out << "\n";
    out << "section,scenario,n,A_n,h,component,replicate,value\n";
    const rate_report& rate = rep.rate;
    for (size_t i = 0; i < rate.n.size(); ++i)
        for (size_t r = 0; r < rate.sup_error[i].size(); ++r)
            out << "rate," << rate.scenario << "," << rate.n[i] << ","
                << format17(rate.a_n[i]) << "," << format17(rate.h[i]) << ",-1," << r << ","
                << format17(rate.sup_error[i][r]) << "\n";
    for (const clt_report& comp : rep.components)
        for (size_t r = 0; r < comp.statistic.size(); ++r)
            out << "clt," << comp.scenario << "," << comp.n << "," << format17(comp.a_n)
                << "," << format17(comp.h) << "," << comp.component << "," << r << ","
                << format17(comp.statistic[r]) << "\n";
}

void write_coverage_csv(const std::string& path, const coverage_report& rep,
                        const csv_preamble& preamble) {
    std::ofstream out = open_out(path);
    put_preamble(out, preamble);
    out << "# q_tau " << format17(rep.q_tau) << "\n";
    out << "# coverage " << format17(rep.coverage) << "\n";
    out << "scenario,n,A_n,h,replicate,covered\n";
    for (size_t r = 0; r < rep.covered.size(); ++r)
        out << rep.scenario << "," << rep.n << "," << format17(rep.a_n) << ","
            << format17(rep.h) << "," << r << "," << static_cast<int>(rep.covered[r]) << "\n";
}

void write_bands_csv(const std::string& path, const std::vector<double>& eval_u,
                     const std::vector<double>& eval_x, int d, int p,
                     const std::vector<ci_band>& bands, const csv_preamble& preamble) {
    std::ofstream out = open_out(path);
    put_preamble(out, preamble);
    for (int i = 0; i < d; ++i) out << "u_" << (i + 1) << ",";
    for (int l = 0; l < p; ++l) out << "x_" << (l + 1) << ",";
    out << "value,half_width,lo,hi\n";
    for (size_t k = 0; k < bands.size(); ++k) {
        for (int i = 0; i < d; ++i)
            out << format17(eval_u[k * static_cast<size_t>(d) + static_cast<size_t>(i)]) << ",";
        for (int l = 0; l < p; ++l)
            out << format17(eval_x[k * static_cast<size_t>(p) + static_cast<size_t>(l)]) << ",";
        out << format17(bands[k].center) << "," << format17(bands[k].half_width) << ","
            << format17(bands[k].lo()) << "," << format17(bands[k].hi()) << "\n";
    }
}

std::string rate_summary(const rate_report& rep) {
    std::string out;
    out += fmt_line("scenario %s estimator %s\n", rep.scenario.c_str(), rep.estimator.c_str());
    for (size_t i = 0; i < rep.n.size(); ++i)
        out += fmt_line("n %lld A_n %.6g h %.6g mean sup error %.6g\n",
                        static_cast<long long>(rep.n[i]), rep.a_n[i], rep.h[i],
                        rep.mean_sup_error[i]);
    out += fmt_line("slope %.6g predicted %.6g se %.6g ci [%.6g, %.6g]\n", rep.slope,
                    rep.predicted_slope, rep.slope_se, rep.slope_ci_lo, rep.slope_ci_hi);
    out += fmt_line("anomalous %d\n", rep.anomalous ? 1 : 0);
    return out;
}

std::string clt_summary(const clt_report& rep) {
    std::string out;
    out += fmt_line("scenario %s n %lld h %.6g component %d\n", rep.scenario.c_str(),
                    static_cast<long long>(rep.n), rep.h, rep.component);
    out += fmt_line("sample mean %.6g theory bias %.6g\n", rep.sample_mean, rep.theory_bias);
    out += fmt_line("sample variance %.6g theory variance %.6g\n", rep.sample_variance,
                    rep.theory_variance);
    out += fmt_line("ks distance %.6g\n", rep.ks_distance);
    return out;
}

std::string decay_summary(const decay_report& rep) {
    std::string out;
    out += fmt_line("scenario %s c0 %.6g\n", rep.scenario.c_str(), rep.c0);
    for (size_t i = 0; i < rep.estimate.m.size(); ++i)
        out += fmt_line("m %.6g gamma %.6g se %.6g\n", rep.estimate.m[i], rep.estimate.gamma[i],
                        rep.estimate.se[i]);
    out += fmt_line("slope %.6g theory %.6g\n", rep.estimate.slope, rep.theory_slope);
    return out;
}

std::string additive_summary(const additive_report& rep) {
    std::string out = rate_summary(rep.rate);
    for (const clt_report& comp : rep.components)
        out += fmt_line("component %d sample variance %.6g theory %.6g ks %.6g\n",
                        comp.component, comp.sample_variance, comp.theory_variance,
                        comp.ks_distance);
    out += "correlation";
    for (double c : rep.correlation) out += fmt_line(" %.6g", c);
    out += "\n";
    return out;
}

std::string coverage_summary(const coverage_report& rep) {
    std::string out;
    out += fmt_line("scenario %s n %lld h %.6g tau %.6g\n", rep.scenario.c_str(),
                    static_cast<long long>(rep.n), rep.h, rep.tau);
    out += fmt_line("q_tau %.9g coverage %.6g over %zu replicates\n", rep.q_tau, rep.coverage,
                    rep.covered.size());
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out = open_out(path);
    out << content;
}

void write_manifest(const std::string& path, const manifest_info& info) {
    nlohmann::ordered_json j;
    j["scenario"] = info.scenario;
    j["subcommand"] = info.subcommand;
    j["config_digest"] = info.config_digest;
    j["seed"] = info.seed;
    j["replicate_seeds"] = info.replicate_seeds;
    j["status"] = info.status;
    j["error"] = info.error;
    j["versions"] = {{"lsrf", "1.0.0"}, {"compiler", __VERSION__}};
    j["wall_seconds"] = info.wall_seconds;
    j["outputs"] = info.outputs;
    j["warnings"] = info.warnings;
    std::ofstream out = open_out(path);
    out << j.dump(2) << "\n";
}

} // namespace lsrf
