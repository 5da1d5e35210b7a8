// Command-line front end: run jackknife IV tests on a dataset, run size and
// power simulation campaigns, or validate inputs.

#include "jive/dataio.hpp"
#include "jive/dgp.hpp"
#include "jive/estimators.hpp"
#include "jive/kernels.hpp"
#include "jive/simulation.hpp"
#include "jive/statistics.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace jive;
using nlohmann::json;

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(csv);
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

VectorXd parse_vector(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception&) {
        // allow a bare comma list as well
        auto items = split_list(text);
        VectorXd v(static_cast<Index>(items.size()));
        for (std::size_t i = 0; i < items.size(); ++i) {
            double x = 0;
            auto r = std::from_chars(items[i].data(), items[i].data() + items[i].size(), x);
            if (r.ec != std::errc{}) throw UsageError("cannot parse number: " + items[i]);
            v[static_cast<Index>(i)] = x;
        }
        return v;
    }
    auto vals = j.get<std::vector<double>>();
    return Eigen::Map<VectorXd>(vals.data(), static_cast<Index>(vals.size()));
}

void write_or_print(const std::optional<std::string>& path, const std::string& content) {
    if (path) {
        std::ofstream out(*path, std::ios::binary);
        if (!out) throw UsageError("cannot open output file: " + *path);
        out << content;
    } else {
        std::cout << content;
    }
}

std::string error_json(const Error& e) {
    json j;
    j["error"] = e.kind();
    j["message"] = e.what();
    return j.dump();
}

struct TestOptions {
    std::string data_path;
    std::string schema_path;
    std::string null_spec;
    std::string restriction_path;
    std::string methods = "SJIVE,HLIM,JIVE1,JIVE2";
    std::string families = "D,W1,W2,LM,D1*,D2*,W1*,W2*,LM*";
    std::string variance = "plugin";
    std::string format = "table";
    std::string kernel_cache;
    bool ar_one_sided = false;
    std::optional<std::string> out;
    std::uint64_t seed = 1;
};

int cmd_test(const TestOptions& opt) {
    CsvSchema schema = schema_from_json_file(opt.schema_path);
    std::vector<std::string> warnings;
    IVDataset data = load_dataset(opt.data_path, schema, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    std::optional<LinearRestriction> restriction;
    VectorXd beta0;
    if (!opt.restriction_path.empty()) {
        restriction = load_restriction(opt.restriction_path);
        validate_restriction(*restriction, data.g());
    } else if (!opt.null_spec.empty()) {
        beta0 = parse_vector(opt.null_spec);
        if (beta0.size() != data.g()) {
            throw UsageError("null vector length " + std::to_string(beta0.size()) +
                             " does not match g=" + std::to_string(data.g()));
        }
    } else {
        throw UsageError("test needs --null or --restriction");
    }

    VarianceMode mode = variance_mode_from_name(opt.variance);
    std::vector<StatRequest> requests;
    for (const auto& name : split_list(opt.families)) {
        if (name == "AR") continue;
        Family f = family_from_name(name);
        requests.push_back({f, is_starred(f) ? Reference::Kind::chisq : Reference::Kind::chibar,
                            mode});
    }

    json out_rows = json::array();
    std::ostringstream table;
    table << "method   estimate";
    for (const auto& req : requests) {
        table << "  " << family_name(req.family) << "/"
              << (req.reference == Reference::Kind::chibar ? "cb" : "c2");
    }
    table << "  AR_naive  AR_cf\n";

    for (const auto& mname : split_list(opt.methods)) {
        Method m = method_from_name(mname);
        JackknifeKernel kern;
        bool cached = false;
        if (!opt.kernel_cache.empty()) {
            std::string path = opt.kernel_cache + "/" + method_name(m) + ".kern";
            if (auto loaded = load_kernel_cache(path, data.Z, m)) {
                kern = std::move(*loaded);
                cached = true;
            }
        }
        if (!cached) {
            kern = build_kernel(data.Z, m);
            if (!opt.kernel_cache.empty()) {
                save_kernel_cache(opt.kernel_cache + "/" + method_name(m) + ".kern", kern,
                                  data.Z);
            }
        }

        EstimationResult est = estimate_unrestricted(kern, data.y, data.X);
        std::vector<TestReport> reports =
            restriction ? evaluate_linear_restriction(kern, data, *restriction, requests)
                        : evaluate_full_vector(kern, data, beta0, requests);

        table << mname;
        for (std::size_t pad = mname.size(); pad < 7; ++pad) table << ' ';
        char buf[64];
        snprintf(buf, sizeof(buf), "  %8.4f", est.beta[0]);
        table << buf;
        for (const auto& rep : reports) {
            snprintf(buf, sizeof(buf), "  %6.4f(p=%.4f)", rep.statistic, rep.p_value);
            table << buf;
            json jr = json::parse(report_to_json(rep));
            jr["estimate"] = std::vector<double>(est.beta.begin(), est.beta.end());
            out_rows.push_back(jr);
        }
        // AR comparators attach to the quadratic-objective rows
        if (!is_ratio_method(m) && !restriction) {
            for (VarianceMode ar_mode : {VarianceMode::plugin, VarianceMode::crossfit}) {
                ArVariant variant = m == Method::JIVE2 ? ArVariant::MS22 : ArVariant::CMS21;
                try {
                    TestReport rep = ar_test(data, beta0, variant, ar_mode, opt.ar_one_sided);
                    snprintf(buf, sizeof(buf), "  %6.4f(p=%.4f)", rep.statistic, rep.p_value);
                    table << buf;
                    out_rows.push_back(json::parse(report_to_json(rep)));
                } catch (const Error&) {
                    table << "  --";
                }
            }
        }
        table << '\n';
    }

    if (opt.format == "json") {
        write_or_print(opt.out, json(out_rows).dump(2) + "\n");
    } else if (opt.format == "csv") {
        std::ostringstream csv;
        csv << "method,family,hypothesis,reference,variance_mode,statistic,p_value\n";
        for (const auto& row : out_rows) {
            csv << row["method"].get<std::string>() << ',' << row["family"].get<std::string>()
                << ',' << row["hypothesis"].get<std::string>() << ','
                << row["reference"]["kind"].get<std::string>() << ','
                << row["variance_mode"].get<std::string>() << ','
                << row["statistic"].get<double>() << ',' << row["p_value"].get<double>() << '\n';
        }
        write_or_print(opt.out, csv.str());
    } else {
        write_or_print(opt.out, table.str());
    }
    return 0;
}

struct SimOptions {
    std::string table_preset;
    std::string spec_path;
    int reps = 5000;
    double nominal = 0.05;
    std::uint64_t seed = 1;
    int workers = 0;
    std::string format = "table";
    std::optional<std::string> out;
    std::string grid;
    Index grid_coordinate = -1;
    bool emit_gnuplot = false;
};

std::vector<ExperimentSpec> resolve_specs(const SimOptions& opt) {
    std::vector<ExperimentSpec> specs;
    if (!opt.table_preset.empty()) {
        if (opt.table_preset == "dgp1") {
            specs = table_dgp1_experiments(opt.reps, opt.seed);
        } else if (opt.table_preset == "dgp2") {
            specs = table_dgp2_experiments(opt.reps, opt.seed);
        } else {
            throw UsageError("unknown preset: " + opt.table_preset + " (use dgp1 or dgp2)");
        }
    } else if (!opt.spec_path.empty()) {
        std::ifstream in(opt.spec_path);
        if (!in) throw UsageError("cannot open spec file: " + opt.spec_path);
        std::stringstream ss;
        ss << in.rdbuf();
        ExperimentSpec spec = experiment_from_json(ss.str());
        spec.reps = opt.reps;
        spec.seed = opt.seed;
        specs.push_back(std::move(spec));
    } else {
        throw UsageError("simulate/power needs --table or --spec");
    }
    for (auto& s : specs) {
        s.workers = opt.workers;
        s.nominal = opt.nominal;
    }
    return specs;
}

int cmd_simulate(const SimOptions& opt) {
    auto specs = resolve_specs(opt);
    std::vector<RejectionTable> tables;
    for (const auto& spec : specs) tables.push_back(run_size_experiment(spec));
    std::string text = table_to_text(tables);
    if (opt.format == "json") {
        write_or_print(opt.out, table_to_json(tables) + "\n");
    } else if (opt.format == "csv") {
        write_or_print(opt.out, table_to_csv(tables));
    } else {
        write_or_print(opt.out, text);
    }
    if (opt.out) std::cout << text;
    for (const auto& t : tables) {
        if (t.warning) {
            std::cerr << "warning: replication failure rate " << t.failure_rate * 100
                      << "% in " << t.dgp << " alpha=" << t.alpha << " r=" << t.r << "\n";
        }
    }
    return 0;
}

int cmd_power(const SimOptions& opt) {
    auto specs = resolve_specs(opt);
    std::vector<std::pair<double, RejectionTable>> all;
    for (const auto& spec : specs) {
        PowerGrid grid;
        grid.coordinate = opt.grid_coordinate >= 0
                              ? opt.grid_coordinate
                              : (spec.dgp == DgpKind::dgp1 ? 0 : 1);
        if (!opt.grid.empty()) {
            VectorXd values = parse_vector(opt.grid);
            grid.values.assign(values.begin(), values.end());
        } else {
            double truth = spec.beta_truth()[grid.coordinate];
            for (int i = 0; i < 21; ++i) grid.values.push_back(truth - 0.5 + i * 0.05);
        }
        auto curve = run_power_curve(spec, grid);
        all.insert(all.end(), curve.begin(), curve.end());
    }
    if (opt.format == "json") {
        std::vector<RejectionTable> tables;
        for (auto& [v, t] : all) tables.push_back(t);
        write_or_print(opt.out, table_to_json(tables) + "\n");
    } else {
        write_or_print(opt.out, power_to_csv(all));
    }
    if (opt.emit_gnuplot) {
        std::string path = opt.out ? *opt.out + ".gnuplot.dat" : "power.gnuplot.dat";
        std::ofstream gp(path, std::ios::binary);
        gp << power_to_gnuplot(all);
        std::cerr << "gnuplot data written to " << path << "\n";
    }
    return 0;
}

int cmd_validate(const std::string& data_path, const std::string& schema_path) {
    CsvSchema schema = schema_from_json_file(schema_path);
    std::vector<std::string> warnings;
    IVDataset data = load_dataset(data_path, schema, &warnings);
    auto [P, P_diag] = projection_and_diag(data.Z);
    Assumption1Report report = validate_assumption1(P_diag);
    json j;
    j["n"] = data.n();
    j["g"] = data.g();
    j["k"] = data.k();
    j["max_leverage"] = report.max_p;
    j["max_leverage_row"] = report.argmax;
    j["leverage_threshold"] = report.threshold;
    j["leverage_flags"] = report.flagged;
    j["leverage_pass"] = report.pass;
    j["warnings"] = warnings;
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Jackknife IV inference: trinity tests, AR comparators, Monte Carlo harness"};
    app.require_subcommand(1);

    TestOptions topt;
    auto* test = app.add_subcommand("test", "run tests on a dataset file");
    test->add_option("--data", topt.data_path, "dataset CSV")->required();
    test->add_option("--schema", topt.schema_path, "column-role schema JSON")->required();
    test->add_option("--null", topt.null_spec, "full null vector, JSON array");
    test->add_option("--restriction", topt.restriction_path, "restriction JSON {A, a}");
    test->add_option("--methods", topt.methods, "comma list of methods");
    test->add_option("--families", topt.families, "comma list of statistic families");
    test->add_option("--variance", topt.variance, "plugin|crossfit");
    test->add_option("--format", topt.format, "table|csv|json");
    test->add_option("--out", topt.out, "output file (default stdout)");
    test->add_option("--kernel-cache", topt.kernel_cache, "directory for (C,B) cache files");
    test->add_flag("--ar-one-sided", topt.ar_one_sided, "one-sided AR p-values");
    test->add_option("--seed", topt.seed, "seed (unused by test, kept for interface parity)");

    SimOptions sopt;
    auto* sim = app.add_subcommand("simulate", "run a size experiment campaign");
    sim->add_option("--table", sopt.table_preset, "preset: dgp1|dgp2");
    sim->add_option("--spec", sopt.spec_path, "experiment spec JSON");
    sim->add_option("--reps", sopt.reps, "replications");
    sim->add_option("--nominal", sopt.nominal, "nominal level");
    sim->add_option("--seed", sopt.seed, "master seed");
    sim->add_option("--workers", sopt.workers, "worker threads (0: JIVE_INFER_THREADS/all)");
    sim->add_option("--format", sopt.format, "table|csv|json");
    sim->add_option("--out", sopt.out, "output file");

    SimOptions popt;
    auto* pow = app.add_subcommand("power", "run a power curve campaign");
    pow->add_option("--table", popt.table_preset, "preset: dgp1|dgp2");
    pow->add_option("--spec", popt.spec_path, "experiment spec JSON");
    pow->add_option("--grid", popt.grid, "null grid values, JSON array or comma list");
    pow->add_option("--grid-coordinate", popt.grid_coordinate, "coefficient index swept");
    pow->add_option("--reps", popt.reps, "replications")->default_val(1000);
    pow->add_option("--nominal", popt.nominal, "nominal level");
    pow->add_option("--seed", popt.seed, "master seed");
    pow->add_option("--workers", popt.workers, "worker threads");
    pow->add_option("--format", popt.format, "csv|json");
    pow->add_flag("--emit-gnuplot", popt.emit_gnuplot, "also write long-format gnuplot data");
    pow->add_option("--out", popt.out, "output file");

    std::string vdata, vschema;
    auto* val = app.add_subcommand("validate", "load and validate a dataset");
    val->add_option("--data", vdata, "dataset CSV")->required();
    val->add_option("--schema", vschema, "column-role schema JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (test->parsed()) return cmd_test(topt);
        if (sim->parsed()) return cmd_simulate(sopt);
        if (pow->parsed()) return cmd_power(popt);
        if (val->parsed()) return cmd_validate(vdata, vschema);
    } catch (const Error& e) {
        std::cerr << error_json(e) << "\n";
        return e.user_error() ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":\"internal\",\"message\":\"" << e.what() << "\"}\n";
        return 1;
    }
    return 0;
}
