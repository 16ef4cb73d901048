#include "kernelmix/cli.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include "kernelmix/baselines.hpp"
#include "kernelmix/cv.hpp"
#include "kernelmix/init.hpp"
#include "kernelmix/io.hpp"
#include "kernelmix/kernel_em.hpp"
#include "kernelmix/simulation.hpp"
#include "kernelmix/theory.hpp"

namespace kernelmix {

namespace {

struct CommonFitOptions {
    std::string kernel = "gaussian";
    double cutoff = 4.0;
    int max_iters = 100;
    double tol = 1e-6;
    std::string init_method = "constant";
    int init_times = 50;
    int init_points = 50;
    int init_em_iters = 100;
    double init_em_tol = 1e-8;
    std::uint64_t seed = 0;
};

void add_common_fit_options(CLI::App* cmd, CommonFitOptions& opt) {
    cmd->add_option("--kernel", opt.kernel, "Kernel family: gaussian or boxcar")
        ->check(CLI::IsMember({"gaussian", "boxcar"}));
    cmd->add_option("--cutoff", opt.cutoff, "Kernel support cutoff as a multiple of h");
    cmd->add_option("--max-iters", opt.max_iters, "Maximum smoothed-EM iterations");
    cmd->add_option("--tol", opt.tol, "Relative log-likelihood stopping tolerance");
    cmd->add_option("--init", opt.init_method, "Initialization method")
        ->check(CLI::IsMember({"constant", "bayesian"}));
    cmd->add_option("--init-times", opt.init_times, "Time points subsampled by constant init");
    cmd->add_option("--init-points", opt.init_points, "Bins sampled per selected time");
    cmd->add_option("--init-em-iters", opt.init_em_iters, "Classical EM iteration cap");
    cmd->add_option("--init-em-tol", opt.init_em_tol, "Classical EM stopping tolerance");
    cmd->add_option("--seed", opt.seed, "Random seed (reproducibility contract)");
}

InitConfig make_init_config(const CommonFitOptions& opt) {
    InitConfig init;
    init.method = init_method_from_string(opt.init_method);
    init.n_times = opt.init_times;
    init.n_points_per_time = opt.init_points;
    init.em_max_iters = opt.init_em_iters;
    init.em_tol = opt.init_em_tol;
    init.seed = opt.seed;
    return init;
}

nlohmann::ordered_json echo_common(const CommonFitOptions& opt) {
    nlohmann::ordered_json j;
    j["kernel"] = opt.kernel;
    j["cutoff"] = opt.cutoff;
    j["max_iters"] = opt.max_iters;
    j["tol"] = opt.tol;
    j["init"] = {{"method", opt.init_method},
                 {"n_times", opt.init_times},
                 {"n_points_per_time", opt.init_points},
                 {"em_max_iters", opt.init_em_iters},
                 {"em_tol", opt.init_em_tol}};
    j["seed"] = opt.seed;
    return j;
}

std::vector<int> parse_cluster_list(const std::string& text) {
    std::vector<int> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(std::stoi(cur) - 1); // 1-based on the command line
            cur.clear();
        }
    };
    for (char c : text) {
        if (c == ',')
            flush();
        else
            cur += c;
    }
    flush();
    return out;
}

int run_fit(const std::string& input, int K, double h_pi, double h_mu, double h_sigma,
            const CommonFitOptions& opt, const std::string& output,
            const std::string& resp_output) {
    const LoadedSeries loaded = load_series(input);
    const InitConfig init_config = make_init_config(opt);

    FitConfig config;
    config.K = K;
    config.bandwidths = {h_pi, h_mu, h_sigma};
    config.kernel_family = kernel_family_from_string(opt.kernel);
    config.kernel_cutoff = opt.cutoff;
    config.max_iters = opt.max_iters;
    config.tol = opt.tol;
    config.seed = opt.seed;

    const ParamsSeries init = make_init(loaded.series, K, init_config);
    FitResult result = fit(loaded.series, init, config);

    FitDocument doc;
    doc.params = std::move(result.params);
    doc.loglik_trace = std::move(result.loglik_trace);
    doc.events = std::move(result.events);
    doc.config_echo = echo_common(opt);
    doc.config_echo["command"] = "fit";
    doc.config_echo["K"] = K;
    doc.config_echo["h_pi"] = h_pi;
    doc.config_echo["h_mu"] = h_mu;
    doc.config_echo["h_sigma"] = h_sigma;
    write_fit(doc, output);
    if (!resp_output.empty()) write_responsibilities(loaded.series, result.resp, resp_output);
    std::printf("fit: %d times, K=%d, %zu iterations, loglik %s\n", loaded.series.size(), K,
                doc.loglik_trace.size(),
                doc.loglik_trace.empty() ? "n/a" : format_double(doc.loglik_trace.back()).c_str());
    return 0;
}

int run_cv(const std::string& input, int K, double h_sigma, int grid_n, double h_min,
           double h_max, int folds, const CommonFitOptions& opt, const std::string& output) {
    const LoadedSeries loaded = load_series(input);
    if (h_max <= 0.0) h_max = std::max(loaded.series.duration(), h_min);

    CVConfig config;
    config.n_folds = folds;
    config.h_sigma = h_sigma;
    config.kernel_family = kernel_family_from_string(opt.kernel);
    config.kernel_cutoff = opt.cutoff;
    config.max_iters = opt.max_iters;
    config.tol = opt.tol;
    config.init = make_init_config(opt);
    config.seed = opt.seed;

    const std::vector<double> grid = log_grid(h_min, h_max, grid_n);
    const CVResult result = grid_search(loaded.series, K, grid, grid, config);

    nlohmann::ordered_json j;
    j["format_version"] = "1";
    j["command"] = "cv";
    j["K"] = K;
    j["h_sigma"] = h_sigma;
    j["n_folds"] = folds;
    j["seed"] = opt.seed;
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const auto& cell : result.cells) {
        nlohmann::ordered_json jc;
        jc["h_mu"] = cell.cell.h_mu;
        jc["h_pi"] = cell.cell.h_pi;
        if (cell.error.empty()) {
            jc["score"] = cell.score;
            jc["per_fold"] = cell.per_fold;
        } else {
            jc["score"] = nullptr;
            jc["error"] = cell.error;
        }
        cells.push_back(jc);
    }
    j["cells"] = cells;
    j["best"] = {{"h_mu", result.best().cell.h_mu},
                 {"h_pi", result.best().cell.h_pi},
                 {"score", result.best().score}};
    atomic_write(output, j.dump(2) + "\n");
    std::printf("cv: best h_mu=%s h_pi=%s (score %s)\n",
                format_double(result.best().cell.h_mu).c_str(),
                format_double(result.best().cell.h_pi).c_str(),
                format_double(result.best().score).c_str());
    return 0;
}

int run_simulate(const std::string& scenario, int T, int n_per_time, int duration,
                 double overlap_level, double sigma, std::uint64_t seed,
                 const std::string& output, const std::string& truth_output) {
    const SimTruth truth = scenario == "disappearance"
                               ? gen_disappearance(T, n_per_time, duration, sigma, seed)
                               : gen_intersection(T, n_per_time, overlap_level, sigma, seed);

    std::vector<std::vector<std::string>> labels(truth.labels.size());
    for (size_t t = 0; t < truth.labels.size(); ++t)
        for (int z : truth.labels[t]) labels[t].push_back(fmt::format("cluster_{}", z + 1));
    write_series(truth.series, output, &labels);

    if (!truth_output.empty()) {
        nlohmann::ordered_json j;
        j["format_version"] = "1";
        j["scenario"] = truth.scenario;
        j["params"] = truth.params;
        j["seed"] = seed;
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (int t = 0; t < truth.series.size(); ++t) {
            nlohmann::ordered_json r;
            r["time"] = truth.series.cytograms[t].time;
            r["mean"] = std::vector<double>(truth.mean_fns.row(t).begin(),
                                            truth.mean_fns.row(t).end());
            r["pi"] = std::vector<double>(truth.pi_fns.row(t).begin(), truth.pi_fns.row(t).end());
            rows.push_back(r);
        }
        j["truth"] = rows;
        atomic_write(truth_output, j.dump(2) + "\n");
    }
    std::printf("simulate: %s, T=%d, n=%d -> %s\n", truth.scenario.c_str(), T, n_per_time,
                output.c_str());
    return 0;
}

int run_bench(BenchConfig config, const std::string& methods_arg,
              const std::string& output_csv, const std::string& output_json) {
    if (!methods_arg.empty()) {
        config.methods.clear();
        std::string cur;
        for (char c : methods_arg + ",") {
            if (c == ',') {
                if (!cur.empty()) config.methods.push_back(bench_method_from_string(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
    }
    const BenchResult result = run_benchmark(config);
    if (!output_csv.empty()) atomic_write(output_csv, bench_csv(result));
    if (!output_json.empty()) atomic_write(output_json, bench_summary_json(result).dump(2) + "\n");
    for (const auto& cell : result.cells)
        std::printf("bench: %s param=%s mean=%.4f se=%.4f (%zu runs, %d failures)\n",
                    to_string(cell.method).c_str(), format_double(cell.scenario_param).c_str(),
                    cell.mean, cell.se, cell.scores.size(), cell.failures);
    return 0;
}

int run_evaluate(const std::string& input, const std::string& fit_path,
                 const std::string& biomass_output, const std::string& confusion_output,
                 const std::string& combine) {
    const LoadedSeries loaded = load_series(input);
    const FitDocument doc = read_fit(fit_path);
    const Responsibilities resp = e_step(loaded.series, doc.params);

    Eigen::MatrixXd biomass = cluster_biomass(loaded.series, resp);
    if (!biomass_output.empty()) {
        std::string csv = biomass_csv(loaded.series, biomass);
        if (!combine.empty()) {
            const Eigen::VectorXd combined = biomass_subset(biomass, parse_cluster_list(combine));
            std::string with_extra = fmt::format("# combined clusters: {}\n", combine);
            with_extra += "time,combined\n";
            for (int t = 0; t < loaded.series.size(); ++t)
                with_extra += format_double(loaded.series.cytograms[t].time) + "," +
                              format_double(combined[t]) + "\n";
            csv += with_extra;
        }
        atomic_write(biomass_output, csv);
    }

    if (!confusion_output.empty()) {
        if (!loaded.has_labels())
            throw std::runtime_error("confusion matrix requested but the input has no label column");
        const ConfusionMatrix cm = confusion_matrix(loaded.series, resp, loaded.labels);
        atomic_write(confusion_output, confusion_csv(cm));
        for (const auto& warning : cm.warnings)
            std::fprintf(stderr, "warning: %s\n", warning.c_str());
    }
    std::printf("evaluate: %d times, K=%d\n", loaded.series.size(), doc.params.K);
    return 0;
}

int run_theory(int t_grid, int n, double sigma, double h, const std::string& kernel,
               double cutoff, int reps, std::uint64_t seed, const std::string& output,
               const std::string& csv_output) {
    TheoryScenario scenario;
    scenario.T = t_grid;
    scenario.n = n;
    scenario.sigma = sigma;
    scenario.kernel = KernelSpec{kernel_family_from_string(kernel), h, cutoff};
    scenario.reps = reps;
    scenario.seed = seed;

    const TheoryReport report = run_theory_checks(scenario);
    if (!output.empty()) atomic_write(output, theory_report_json(report).dump(2) + "\n");
    if (!csv_output.empty()) atomic_write(csv_output, theory_report_csv(report));

    std::printf("theory-check: mse %s, epe %s, variance %s\n",
                report.theorem1.all_mse_ok ? "ok" : "VIOLATED",
                report.theorem1.all_epe_ok ? "ok" : "VIOLATED",
                report.variance.all_ok ? "ok" : "VIOLATED");
    return report.theorem1.all_mse_ok && report.theorem1.all_epe_ok && report.variance.all_ok
               ? 0
               : 1;
}

} // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Kernel-smoothed time-evolving Gaussian mixtures for weighted point-cloud series"};
    app.require_subcommand(1);

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Fit the smoothed mixture to a series CSV");
    std::string fit_input, fit_output, fit_resp_output;
    int fit_k = 2;
    double h_pi = 1.0, h_mu = 1.0, h_sigma = 1.0;
    CommonFitOptions fit_opt;
    fit_cmd->add_option("--input", fit_input, "Input series CSV")->required();
    fit_cmd->add_option("--k", fit_k, "Number of clusters")->required();
    fit_cmd->add_option("--h-pi", h_pi, "Bandwidth for proportions (hours)")->required();
    fit_cmd->add_option("--h-mu", h_mu, "Bandwidth for means (hours)")->required();
    fit_cmd->add_option("--h-sigma", h_sigma, "Bandwidth for covariances (hours)")->required();
    fit_cmd->add_option("--output", fit_output, "Output fit JSON")->required();
    fit_cmd->add_option("--resp-output", fit_resp_output, "Optional responsibilities CSV");
    add_common_fit_options(fit_cmd, fit_opt);

    // cv
    auto* cv_cmd = app.add_subcommand("cv", "Cross-validated bandwidth grid search");
    std::string cv_input, cv_output;
    int cv_k = 2, cv_grid = 7, cv_folds = 5;
    double cv_h_sigma = 15.0, cv_h_min = 1.0, cv_h_max = 0.0;
    CommonFitOptions cv_opt;
    cv_cmd->add_option("--input", cv_input, "Input series CSV")->required();
    cv_cmd->add_option("--k", cv_k, "Number of clusters")->required();
    cv_cmd->add_option("--h-sigma", cv_h_sigma, "Fixed covariance bandwidth");
    cv_cmd->add_option("--grid", cv_grid, "Grid points per axis (log-spaced)");
    cv_cmd->add_option("--h-min", cv_h_min, "Smallest grid bandwidth (hours)");
    cv_cmd->add_option("--h-max", cv_h_max, "Largest grid bandwidth (default: series duration)");
    cv_cmd->add_option("--folds", cv_folds, "Number of interleaved folds");
    cv_cmd->add_option("--output", cv_output, "Output JSON")->required();
    add_common_fit_options(cv_cmd, cv_opt);

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic labeled series");
    std::string sim_scenario = "disappearance", sim_output, sim_truth_output;
    int sim_t = 100, sim_n = 100, sim_duration = 20;
    double sim_overlap = 1.0, sim_sigma = 0.5;
    std::uint64_t sim_seed = 0;
    sim_cmd->add_option("--scenario", sim_scenario, "disappearance or intersection")
        ->check(CLI::IsMember({"disappearance", "intersection"}));
    sim_cmd->add_option("--t", sim_t, "Number of time points");
    sim_cmd->add_option("--n-per-time", sim_n, "Points per time");
    sim_cmd->add_option("--duration", sim_duration, "Disappearance window length");
    sim_cmd->add_option("--overlap-level", sim_overlap, "Intersection overlap level");
    sim_cmd->add_option("--sigma", sim_sigma, "Noise SD");
    sim_cmd->add_option("--seed", sim_seed, "Random seed");
    sim_cmd->add_option("--output", sim_output, "Output series CSV (includes label column)")
        ->required();
    sim_cmd->add_option("--truth-output", sim_truth_output, "Optional truth JSON");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Rand-index benchmark over scenario sweeps");
    BenchConfig bench_config;
    std::string bench_methods, bench_csv_path, bench_json_path, bench_params;
    bench_cmd->add_option("--scenario", bench_config.scenario, "disappearance or intersection")
        ->check(CLI::IsMember({"disappearance", "intersection"}));
    bench_cmd->add_option("--params", bench_params,
                          "Comma-separated durations or overlap levels");
    bench_cmd->add_option("--durations", bench_params, "Alias for --params")
        ->excludes("--params");
    bench_cmd->add_option("--overlap-levels", bench_params, "Alias for --params")
        ->excludes("--params")
        ->excludes("--durations");
    bench_cmd->add_option("--runs", bench_config.runs, "Simulations per cell");
    bench_cmd->add_option("--t", bench_config.T, "Time points per run");
    bench_cmd->add_option("--n-per-time", bench_config.n_per_time, "Points per time");
    bench_cmd->add_option("--sigma", bench_config.sigma, "Noise SD");
    bench_cmd->add_option("--k", bench_config.K, "Clusters");
    bench_cmd->add_option("--methods", bench_methods, "Comma list: kernel,hungarian,constant");
    bench_cmd->add_option("--h-pi", bench_config.bandwidths.h_pi, "Kernel-EM bandwidth for pi");
    bench_cmd->add_option("--h-mu", bench_config.bandwidths.h_mu, "Kernel-EM bandwidth for mu");
    bench_cmd->add_option("--h-sigma", bench_config.bandwidths.h_sigma,
                          "Kernel-EM bandwidth for sigma");
    bench_cmd->add_option("--seed", bench_config.seed, "Random seed");
    bench_cmd->add_option("--output-csv", bench_csv_path, "Per-run CSV output");
    bench_cmd->add_option("--output-json", bench_json_path, "Summary JSON output");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Biomass table and confusion matrix");
    std::string eval_input, eval_fit, eval_biomass, eval_confusion, eval_combine;
    eval_cmd->add_option("--input", eval_input, "Input series CSV (optionally labeled)")
        ->required();
    eval_cmd->add_option("--fit", eval_fit, "Fit JSON")->required();
    eval_cmd->add_option("--biomass-output", eval_biomass, "Biomass table CSV");
    eval_cmd->add_option("--confusion-output", eval_confusion, "Confusion matrix CSV");
    eval_cmd->add_option("--combine", eval_combine,
                         "Comma list of 1-based clusters to also sum into one series");

    // theory-check
    auto* theory_cmd = app.add_subcommand("theory-check",
                                          "Monte-Carlo oracle-estimator verification");
    int th_t = 41, th_n = 20, th_reps = 1000;
    double th_sigma = 0.5, th_h = 0.2, th_cutoff = 4.0;
    std::string th_kernel = "gaussian", th_output, th_csv;
    std::uint64_t th_seed = 0;
    theory_cmd->add_option("--t-grid", th_t, "Grid size (odd)");
    theory_cmd->add_option("--n", th_n, "Points per cluster per time");
    theory_cmd->add_option("--sigma", th_sigma, "Noise SD");
    theory_cmd->add_option("--bandwidth", th_h, "Kernel bandwidth");
    theory_cmd->add_option("--kernel", th_kernel, "Kernel family")
        ->check(CLI::IsMember({"gaussian", "boxcar"}));
    theory_cmd->add_option("--cutoff", th_cutoff, "Kernel cutoff");
    theory_cmd->add_option("--reps", th_reps, "Monte-Carlo repetitions");
    theory_cmd->add_option("--seed", th_seed, "Random seed");
    theory_cmd->add_option("--output", th_output, "Report JSON")->required();
    theory_cmd->add_option("--csv-output", th_csv, "Plot-ready CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (fit_cmd->parsed())
            return run_fit(fit_input, fit_k, h_pi, h_mu, h_sigma, fit_opt, fit_output,
                           fit_resp_output);
        if (cv_cmd->parsed())
            return run_cv(cv_input, cv_k, cv_h_sigma, cv_grid, cv_h_min, cv_h_max, cv_folds,
                          cv_opt, cv_output);
        if (sim_cmd->parsed())
            return run_simulate(sim_scenario, sim_t, sim_n, sim_duration, sim_overlap, sim_sigma,
                                sim_seed, sim_output, sim_truth_output);
        if (bench_cmd->parsed()) {
            if (!bench_params.empty()) {
                bench_config.scenario_params.clear();
                std::string cur;
                for (char c : bench_params + ",") {
                    if (c == ',') {
                        if (!cur.empty()) bench_config.scenario_params.push_back(std::stod(cur));
                        cur.clear();
                    } else {
                        cur += c;
                    }
                }
            } else if (bench_config.scenario_params.empty()) {
                bench_config.scenario_params =
                    bench_config.scenario == "disappearance" ? std::vector<double>{5, 20, 60}
                                                             : std::vector<double>{0.0, 0.833, 1.2};
            }
            return run_bench(bench_config, bench_methods, bench_csv_path, bench_json_path);
        }
        if (eval_cmd->parsed())
            return run_evaluate(eval_input, eval_fit, eval_biomass, eval_confusion, eval_combine);
        if (theory_cmd->parsed())
            return run_theory(th_t, th_n, th_sigma, th_h, th_kernel, th_cutoff, th_reps, th_seed,
                              th_output, th_csv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

} // namespace kernelmix
