// Command-line interface: fit estimators on a CSV, run the Monte Carlo
// harness, screen the instrumental inequalities, or convert/preprocess a
// dataset. Exit codes: 0 ok, 2 usage, 3 data validation, 4 numerical.

#include "ivwald/diagnostics.hpp"
#include "ivwald/inference.hpp"
#include "ivwald/simulate.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <thread>

namespace {

using namespace ivwald;

struct DataArgs {
    std::string path;
    ColumnMap map;
    bool impute_all = false;
    std::vector<std::string> impute_columns;
    std::string dichotomize_rule;  // "", "median", or a number
};

void add_data_flags(CLI::App* cmd, DataArgs& args, bool with_preprocess) {
    cmd->add_option("--data", args.path, "input CSV with a header row")->required();
    cmd->add_option("--instrument", args.map.instrument, "instrument column (0/1)")->required();
    cmd->add_option("--treatment", args.map.treatment, "treatment column (0/1)")->required();
    cmd->add_option("--outcome", args.map.outcome, "outcome column")->required();
    cmd->add_option("--covariates", args.map.covariates, "covariate columns")->delimiter(',');
    cmd->add_option("--weight", args.map.weight, "sampling weight column");
    if (with_preprocess) {
        cmd->add_flag("--impute", args.impute_all,
                      "mean-impute all covariate columns with missing values, adding indicators");
        cmd->add_option("--impute-columns", args.impute_columns,
                        "mean-impute only these covariate columns")
            ->delimiter(',');
        cmd->add_option("--dichotomize", args.dichotomize_rule,
                        "replace outcome by 1(y > t); 'median' or a fixed threshold");
    }
}

Dataset load_data(const DataArgs& args) {
    Dataset ds = load_csv(args.path, args.map);
    if (ds.dropped_rows > 0)
        std::cerr << "note: dropped " << ds.dropped_rows
                  << " row(s) with missing instrument/treatment/outcome\n";
    if (!args.impute_columns.empty()) ds = impute_mean_with_indicators(ds, args.impute_columns);
    if (args.impute_all) ds = impute_mean_with_indicators(ds);
    if (!args.dichotomize_rule.empty()) {
        if (args.dichotomize_rule == "median") {
            ds = dichotomize(ds, DichotomizeRule::median());
        } else {
            ds = dichotomize(ds, DichotomizeRule::fixed(std::stod(args.dichotomize_rule)));
        }
        std::cerr << "note: outcome dichotomized at t = "
                  << format_g17(*ds.dichotomize_threshold) << "\n";
    }
    return ds;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw SchemaError("cannot open '" + path + "' for writing");
    f << content;
}

std::string resolved_config_block(const std::vector<std::pair<std::string, std::string>>& kv) {
    std::string out = "# resolved configuration\n";
    for (const auto& [k, v] : kv) out += "# " + k + " = " + v + "\n";
    return out;
}

std::string format_ci(const EstimateReport& r) {
    if (!r.ci) return "";
    return "(" + format_g17(r.ci->first) + ", " + format_g17(r.ci->second) + ")";
}

int run_fit(const DataArgs& data_args, std::vector<std::string> estimators, int bootstrap_reps,
            std::uint64_t seed, bool seed_given, double level, const std::string& link_name,
            bool sandwich, int threads, const std::string& out_path,
            const std::string& report_path) {
    if (bootstrap_reps > 0 && !seed_given) {
        std::cerr << "error: --bootstrap requires --seed (no silent nondeterminism)\n";
        return 2;
    }
    if (estimators.size() == 1 && estimators[0] == "all") estimators = estimator_registry();
    for (const auto& tag : estimators)
        if (std::find(estimator_registry().begin(), estimator_registry().end(), tag) ==
            estimator_registry().end()) {
            std::cerr << "error: unknown estimator '" << tag << "'\n";
            return 2;
        }

    const Dataset ds = load_data(data_args);
    EstimatorConfig cfg;
    cfg.delta_d_link = link_name == "expit" ? DeltaLink::Expit : DeltaLink::Tanh;
    cfg.sandwich_se = sandwich;

    std::vector<EstimateReport> reports = estimate_all(ds, estimators, cfg);

    if (bootstrap_reps > 0) {
        // One resample stream shared across estimators; identical to
        // bootstrapping each tag separately because replicate r is keyed by
        // (seed, r) alone.
        std::vector<std::vector<double>> values(reports.size());
        BootstrapConfig bcfg;
        bcfg.replicates = bootstrap_reps;
        bcfg.seed = seed;
        bcfg.ci_level = level;
        bcfg.threads = threads;
        std::vector<std::vector<double>> draws(
            bootstrap_reps, std::vector<double>(reports.size(), std::numeric_limits<double>::quiet_NaN()));
        parallel_tasks(bootstrap_reps, threads, [&](Index r) {
            const Dataset boot = resample(ds, seed, static_cast<std::uint64_t>(r));
            const auto boot_reports = estimate_all(boot, estimators, cfg);
            for (size_t k = 0; k < boot_reports.size() && k < reports.size(); ++k)
                if (boot_reports[k].converged) draws[r][k] = boot_reports[k].delta_hat;
        });
        for (size_t k = 0; k < reports.size(); ++k) {
            std::vector<double> vals;
            int failures = 0;
            for (int r = 0; r < bootstrap_reps; ++r)
                if (std::isnan(draws[r][k]))
                    ++failures;
                else
                    vals.push_back(draws[r][k]);
            if (failures > bootstrap_reps / 5 || vals.empty()) {
                reports[k].warnings.push_back("bootstrap unstable: " + std::to_string(failures) +
                                              " of " + std::to_string(bootstrap_reps) +
                                              " replicates failed");
                continue;
            }
            const double a = (1.0 - level) / 2.0;
            reports[k].ci = {quantile_type7(vals, a), quantile_type7(vals, 1.0 - a)};
            if (failures > 0)
                reports[k].warnings.push_back(std::to_string(failures) +
                                              " bootstrap replicate(s) failed and were dropped");
        }
    }

    std::vector<std::pair<std::string, std::string>> kv = {
        {"subcommand", "fit"},
        {"data", data_args.path},
        {"estimators", [&] {
             std::string s;
             for (const auto& t : estimators) s += (s.empty() ? "" : ",") + t;
             return s;
         }()},
        {"link-delta-d", link_name},
        {"bootstrap", std::to_string(bootstrap_reps)},
        {"seed", seed_given ? std::to_string(seed) : "(none)"},
        {"level", format_g17(level)},
        {"n", std::to_string(ds.n())},
        {"weights-normalized", "mean-1"},
    };

    std::string table = "Method          Point Estimate   " + format_g17(level * 100).substr(0, 4) +
                        "% Confidence Interval\n";
    for (const auto& r : reports) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-15s %-16s %s\n", r.estimator.c_str(),
                      std::isnan(r.delta_hat) ? "failed" : format_g17(r.delta_hat).c_str(),
                      format_ci(r).c_str());
        table += line;
    }
    std::string report_text = resolved_config_block(kv) + "\n" + table;
    for (const auto& r : reports)
        for (const auto& w : r.warnings) report_text += "warning [" + r.estimator + "]: " + w + "\n";

    if (!out_path.empty()) write_file(out_path, reports_to_csv(reports));
    if (!report_path.empty()) write_file(report_path, report_text);
    std::cout << table;

    for (const auto& r : reports)
        if (!r.converged) {
            std::cerr << "error: estimator '" << r.estimator << "' failed";
            if (!r.warnings.empty()) std::cerr << ": " << r.warnings.front();
            std::cerr << "\n";
            return 4;
        }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bounded, locally efficient and multiply robust IV estimation of the ATE"};
    app.set_config("--config", "", "flat key=value config file; flags override");
    app.require_subcommand(1);

    const int hw_threads = std::max(1u, std::thread::hardware_concurrency());

    // --- fit ---
    auto* fit = app.add_subcommand("fit", "estimate the ATE from a CSV dataset");
    DataArgs fit_data;
    add_data_flags(fit, fit_data, true);
    std::vector<std::string> estimators = {"all"};
    int bootstrap_reps = 0;
    std::uint64_t seed = 0;
    double level = 0.95;
    std::string link_name = "tanh";
    bool sandwich = false;
    int threads = hw_threads;
    std::string out_path = "results.csv", report_path;
    fit->add_option("--estimators", estimators, "estimators to run, or 'all'")->delimiter(',');
    fit->add_option("--bootstrap", bootstrap_reps, "percentile-bootstrap replicates (0 = none)");
    auto* fit_seed = fit->add_option("--seed", seed, "RNG seed (required with --bootstrap)");
    fit->add_option("--level", level, "confidence level")->check(CLI::Range(1e-6, 1.0 - 1e-6));
    fit->add_option("--link-delta-d", link_name, "delta^D link: tanh or expit")
        ->check(CLI::IsMember({"tanh", "expit"}));
    fit->add_flag("--sandwich", sandwich, "stacked-sandwich standard errors where supported");
    fit->add_option("--threads", threads, "parallel bootstrap workers");
    fit->add_option("--out", out_path, "results CSV path");
    fit->add_option("--report", report_path, "human-readable report path");

    // --- simulate ---
    auto* sim = app.add_subcommand("simulate", "Monte Carlo harness over the scenario grid");
    std::string scenario = "all-correct";
    ScenarioSpec spec;
    std::string sim_out, sim_dump;
    bool with_sandwich = false;
    int sim_threads = hw_threads;
    std::uint64_t sim_seed = 0;
    sim->add_option("--scenario", scenario,
                    "all-correct | m1-correct | m2-correct | m3-correct | all-wrong | grid=TTTT");
    sim->add_option("--reps", spec.reps, "Monte Carlo replicates");
    sim->add_option("--n", spec.n, "sample size per replicate");
    auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "RNG seed (required)");
    sim->add_option("--estimators", spec.estimators,
                    "estimators (registry tags plus 'eq16' fixture)")
        ->delimiter(',');
    sim->add_flag("--with-sandwich", with_sandwich, "collect stacked sandwich SEs for mr");
    sim->add_option("--threads", sim_threads, "parallel replicate workers");
    sim->add_option("--out", sim_out, "summary CSV path");
    sim->add_option("--dump", sim_dump, "per-replicate CSV path");

    // --- diagnose ---
    auto* diag = app.add_subcommand("diagnose", "screen the instrumental inequalities");
    DataArgs diag_data;
    add_data_flags(diag, diag_data, true);
    std::vector<std::string> strata_cols;
    std::string bins_spec, diag_out;
    diag->add_option("--strata", strata_cols, "stratify by these covariate columns")
        ->delimiter(',');
    diag->add_option("--bins", bins_spec, "quantile bins, as column:k");
    diag->add_option("--out", diag_out, "report CSV path");

    // --- convert ---
    auto* conv = app.add_subcommand("convert", "load, preprocess and re-serialize a dataset");
    DataArgs conv_data;
    add_data_flags(conv, conv_data, true);
    std::string conv_out;
    conv->add_option("--out", conv_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fit) {
            return run_fit(fit_data, estimators, bootstrap_reps, seed, fit_seed->count() > 0,
                           level, link_name, sandwich, threads, out_path, report_path);
        }
        if (*sim) {
            if (sim_seed_opt->count() == 0) {
                std::cerr << "error: simulate requires --seed (no silent nondeterminism)\n";
                return 2;
            }
            const std::vector<std::string> keep_estimators = spec.estimators;
            const Index keep_n = spec.n;
            const int keep_reps = spec.reps;
            spec = ScenarioSpec::named(scenario);
            spec.estimators = keep_estimators;
            spec.n = keep_n;
            spec.reps = keep_reps;
            spec.seed = sim_seed;
            spec.threads = sim_threads;
            if (with_sandwich) spec.sandwich_for = {"mr"};
            const MonteCarloResult res = run_monte_carlo(spec);
            std::cout << res.summary_csv();
            if (!sim_out.empty()) write_file(sim_out, res.summary_csv());
            if (!sim_dump.empty()) write_file(sim_dump, res.replicates_csv());
            return 0;
        }
        if (*diag) {
            const Dataset ds = load_data(diag_data);
            Stratification strat = Stratification::none();
            if (!strata_cols.empty()) strat = Stratification::by_columns(strata_cols);
            if (!bins_spec.empty()) {
                const auto colon = bins_spec.rfind(':');
                if (colon == std::string::npos) {
                    std::cerr << "error: --bins expects column:k\n";
                    return 2;
                }
                strat = Stratification::by_quantile_bins(bins_spec.substr(0, colon),
                                                         std::stoi(bins_spec.substr(colon + 1)));
            }
            const IvInequalityReport report = test_iv_inequalities(ds, strat);
            std::cout << report.to_text();
            if (!diag_out.empty()) write_file(diag_out, report.to_csv());
            return 0;
        }
        if (*conv) {
            const Dataset ds = load_data(conv_data);
            save_csv(ds, conv_out);
            std::cout << "wrote " << ds.n() << " rows, " << (ds.p() - 1)
                      << " covariate column(s) to " << conv_out << "\n";
            return 0;
        }
    } catch (const SchemaError& e) {
        std::cerr << "data schema error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "data validation error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
