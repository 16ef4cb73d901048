#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kernelmix/baselines.hpp"
#include "kernelmix/cli.hpp"
#include "kernelmix/cv.hpp"
#include "kernelmix/init.hpp"
#include "kernelmix/io.hpp"
#include "kernelmix/kernel.hpp"
#include "kernelmix/kernel_em.hpp"
#include "kernelmix/loglik.hpp"
#include "kernelmix/mvn.hpp"
#include "kernelmix/simulation.hpp"
#include "kernelmix/theory.hpp"
#include "kernelmix/types.hpp"

namespace py = pybind11;
using namespace kernelmix;

namespace {

CytoSeries series_from_parts(const std::vector<double>& times,
                             const std::vector<Eigen::MatrixXd>& points,
                             const std::vector<Eigen::VectorXd>& weights) {
    if (times.size() != points.size() || (!weights.empty() && weights.size() != times.size()))
        throw std::invalid_argument("times, points and weights must have equal length");
    CytoSeries series;
    series.dim = points.empty() ? 0 : static_cast<int>(points.front().cols());
    for (size_t t = 0; t < times.size(); ++t) {
        Cytogram cyt;
        cyt.time = times[t];
        cyt.points = points[t];
        cyt.weights = weights.empty() ? Eigen::VectorXd::Ones(points[t].rows()).eval()
                                      : weights[t];
        series.cytograms.push_back(std::move(cyt));
    }
    validate(series);
    return series;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Kernel-smoothed time-evolving Gaussian mixtures for weighted point-cloud series";

    py::enum_<KernelFamily>(m, "KernelFamily")
        .value("gaussian", KernelFamily::gaussian)
        .value("boxcar", KernelFamily::boxcar);

    py::class_<KernelSpec>(m, "KernelSpec")
        .def(py::init<KernelFamily, double, double>(), py::arg("family"), py::arg("h"),
             py::arg("cutoff") = 4.0)
        .def_readwrite("family", &KernelSpec::family)
        .def_readwrite("h", &KernelSpec::h)
        .def_readwrite("cutoff", &KernelSpec::cutoff);

    py::class_<Bandwidths>(m, "Bandwidths")
        .def(py::init([](double h_pi, double h_mu, double h_sigma) {
                 return Bandwidths{h_pi, h_mu, h_sigma};
             }),
             py::arg("h_pi"), py::arg("h_mu"), py::arg("h_sigma"))
        .def_readwrite("h_pi", &Bandwidths::h_pi)
        .def_readwrite("h_mu", &Bandwidths::h_mu)
        .def_readwrite("h_sigma", &Bandwidths::h_sigma);

    py::class_<Cytogram>(m, "Cytogram")
        .def(py::init([](double time, Eigen::MatrixXd points, Eigen::VectorXd weights) {
                 Cytogram cyt{time, std::move(points), std::move(weights)};
                 validate(cyt);
                 return cyt;
             }),
             py::arg("time"), py::arg("points"), py::arg("weights"))
        .def_readonly("time", &Cytogram::time)
        .def_readonly("points", &Cytogram::points)
        .def_readonly("weights", &Cytogram::weights);

    py::class_<CytoSeries>(m, "CytoSeries")
        .def(py::init(&series_from_parts), py::arg("times"), py::arg("points"),
             py::arg("weights") = std::vector<Eigen::VectorXd>{})
        .def_property_readonly("times", &CytoSeries::times)
        .def_readonly("dim", &CytoSeries::dim)
        .def("__len__", &CytoSeries::size)
        .def("points", [](const CytoSeries& s, int t) { return s.cytograms.at(t).points; })
        .def("weights", [](const CytoSeries& s, int t) { return s.cytograms.at(t).weights; });

    py::class_<MixtureState>(m, "MixtureState")
        .def(py::init([](Eigen::VectorXd pi, Eigen::MatrixXd mu,
                         std::vector<Eigen::MatrixXd> sigma) {
                 MixtureState s{std::move(pi), std::move(mu), std::move(sigma)};
                 validate(s);
                 return s;
             }),
             py::arg("pi"), py::arg("mu"), py::arg("sigma"))
        .def_readonly("pi", &MixtureState::pi)
        .def_readonly("mu", &MixtureState::mu)
        .def_readonly("sigma", &MixtureState::sigma);

    py::class_<ParamsSeries>(m, "ParamsSeries")
        .def(py::init([](std::vector<double> times, std::vector<MixtureState> states) {
                 ParamsSeries p;
                 p.times = std::move(times);
                 p.states = std::move(states);
                 p.K = p.states.empty() ? 0 : p.states.front().k();
                 validate(p);
                 return p;
             }),
             py::arg("times"), py::arg("states"))
        .def_readonly("times", &ParamsSeries::times)
        .def_readonly("states", &ParamsSeries::states)
        .def_readonly("K", &ParamsSeries::K)
        .def("__len__", &ParamsSeries::size);

    py::class_<Responsibilities>(m, "Responsibilities")
        .def_readonly("gamma", &Responsibilities::gamma)
        .def_readonly("cluster_mass", &Responsibilities::cluster_mass);

    py::class_<FitEvent>(m, "FitEvent")
        .def_readonly("kind", &FitEvent::kind)
        .def_readonly("iteration", &FitEvent::iteration)
        .def_readonly("time_index", &FitEvent::time_index)
        .def_readonly("cluster", &FitEvent::cluster)
        .def_readonly("detail", &FitEvent::detail)
        .def("__repr__", [](const FitEvent& e) {
            return "FitEvent(" + e.kind + ", iter=" + std::to_string(e.iteration) + ")";
        });

    py::class_<FitConfig>(m, "FitConfig")
        .def(py::init<>())
        .def_readwrite("K", &FitConfig::K)
        .def_readwrite("bandwidths", &FitConfig::bandwidths)
        .def_readwrite("kernel_family", &FitConfig::kernel_family)
        .def_readwrite("kernel_cutoff", &FitConfig::kernel_cutoff)
        .def_readwrite("max_iters", &FitConfig::max_iters)
        .def_readwrite("tol", &FitConfig::tol)
        .def_readwrite("seed", &FitConfig::seed);

    py::class_<FitResult>(m, "FitResult")
        .def_readonly("params", &FitResult::params)
        .def_readonly("resp", &FitResult::resp)
        .def_readonly("loglik_trace", &FitResult::loglik_trace)
        .def_readonly("events", &FitResult::events);

    py::enum_<InitMethod>(m, "InitMethod")
        .value("constant", InitMethod::constant)
        .value("bayesian", InitMethod::bayesian);

    py::class_<InitConfig>(m, "InitConfig")
        .def(py::init<>())
        .def_readwrite("method", &InitConfig::method)
        .def_readwrite("n_times", &InitConfig::n_times)
        .def_readwrite("n_points_per_time", &InitConfig::n_points_per_time)
        .def_readwrite("em_max_iters", &InitConfig::em_max_iters)
        .def_readwrite("em_tol", &InitConfig::em_tol)
        .def_readwrite("seed", &InitConfig::seed);

    py::class_<StandardEmResult>(m, "StandardEmResult")
        .def_readonly("state", &StandardEmResult::state)
        .def_readonly("loglik_trace", &StandardEmResult::loglik_trace)
        .def_readonly("events", &StandardEmResult::events);

    // model-core operations
    m.def("kernel_weight", &kernel_weight, py::arg("spec"), py::arg("delta"));
    m.def("mvn_logpdf", &mvn_logpdf, py::arg("y"), py::arg("mu"), py::arg("sigma"));
    m.def("weighted_loglik", &weighted_loglik, py::arg("series"), py::arg("params"));

    // kernel-EM
    m.def("e_step",
          [](const CytoSeries& series, const ParamsSeries& params) {
              return e_step(series, params);
          },
          py::arg("series"), py::arg("params"));
    m.def("m_step_pi", &m_step_pi, py::arg("series"), py::arg("resp"), py::arg("kernel"),
          py::arg("query_times"));
    m.def("m_step_mu",
          [](const CytoSeries& series, const Responsibilities& resp, const KernelSpec& kernel,
             const std::vector<double>& query_times) { return m_step_mu(series, resp, kernel, query_times).mu; },
          py::arg("series"), py::arg("resp"), py::arg("kernel"), py::arg("query_times"));
    m.def("m_step_sigma",
          [](const CytoSeries& series, const Responsibilities& resp,
             const std::vector<Eigen::MatrixXd>& mu_at_data_times, const KernelSpec& kernel,
             const std::vector<double>& query_times) {
              return m_step_sigma(series, resp, mu_at_data_times, kernel, query_times).sigma;
          },
          py::arg("series"), py::arg("resp"), py::arg("mu_at_data_times"), py::arg("kernel"),
          py::arg("query_times"));
    m.def("fit", &fit, py::arg("series"), py::arg("init"), py::arg("config"));
    m.def("predict_at_times", &predict_at_times, py::arg("series"), py::arg("resp"),
          py::arg("bandwidths"), py::arg("kernel_shape"), py::arg("new_times"));

    // initialization
    m.def("standard_em", &standard_em, py::arg("cytogram"), py::arg("k"), py::arg("seed"),
          py::arg("max_iters") = 100, py::arg("tol") = 1e-8);
    m.def("constant_init", &constant_init, py::arg("series"), py::arg("k"), py::arg("config"));
    m.def("bayesian_init",
          [](const CytoSeries& series, int K, const InitConfig& config) {
              return bayesian_init(series, K, config);
          },
          py::arg("series"), py::arg("k"), py::arg("config"));

    // cross-validation
    py::class_<FoldSpec>(m, "FoldSpec")
        .def_readonly("n_folds", &FoldSpec::n_folds)
        .def_readonly("fold_of", &FoldSpec::fold_of)
        .def("indices_of", &FoldSpec::indices_of);
    py::class_<CVConfig>(m, "CVConfig")
        .def(py::init<>())
        .def_readwrite("n_folds", &CVConfig::n_folds)
        .def_readwrite("h_sigma", &CVConfig::h_sigma)
        .def_readwrite("kernel_family", &CVConfig::kernel_family)
        .def_readwrite("kernel_cutoff", &CVConfig::kernel_cutoff)
        .def_readwrite("max_iters", &CVConfig::max_iters)
        .def_readwrite("tol", &CVConfig::tol)
        .def_readwrite("init", &CVConfig::init)
        .def_readwrite("seed", &CVConfig::seed);
    py::class_<GridCell>(m, "GridCell")
        .def_readonly("h_mu", &GridCell::h_mu)
        .def_readonly("h_pi", &GridCell::h_pi);
    py::class_<CellScore>(m, "CellScore")
        .def_readonly("cell", &CellScore::cell)
        .def_readonly("score", &CellScore::score)
        .def_readonly("per_fold", &CellScore::per_fold)
        .def_readonly("error", &CellScore::error);
    py::class_<CVResult>(m, "CVResult")
        .def_readonly("cells", &CVResult::cells)
        .def_readonly("h_sigma", &CVResult::h_sigma)
        .def_readonly("best_index", &CVResult::best_index)
        .def_property_readonly("best", [](const CVResult& r) { return r.best(); });
    m.def("make_folds", &make_folds, py::arg("t"), py::arg("n_folds") = 5);
    m.def("cv_score",
          [](const CytoSeries& series, int K, const Bandwidths& bw, const CVConfig& config,
             const FoldSpec& folds) { return cv_score(series, K, bw, config, folds).mean; },
          py::arg("series"), py::arg("k"), py::arg("bandwidths"), py::arg("config"),
          py::arg("folds"));
    m.def("grid_search", &grid_search, py::arg("series"), py::arg("k"), py::arg("h_mu_grid"),
          py::arg("h_pi_grid"), py::arg("config"));
    m.def("log_grid", &log_grid, py::arg("h_min"), py::arg("h_max"), py::arg("n"));

    // baselines
    py::class_<Assignment>(m, "Assignment")
        .def_readonly("perm", &Assignment::perm)
        .def_readonly("cost", &Assignment::cost);
    m.def("hungarian_solve", &hungarian_solve, py::arg("cost"));
    m.def("constant_fit", &constant_fit, py::arg("series"), py::arg("k"), py::arg("config"));
    m.def("hungarian_fit", &hungarian_fit, py::arg("series"), py::arg("k"), py::arg("config"));

    // simulation
    py::class_<SimTruth>(m, "SimTruth")
        .def_readonly("series", &SimTruth::series)
        .def_readonly("labels", &SimTruth::labels)
        .def_readonly("mean_fns", &SimTruth::mean_fns)
        .def_readonly("pi_fns", &SimTruth::pi_fns)
        .def_readonly("params", &SimTruth::params)
        .def_readonly("scenario", &SimTruth::scenario);
    m.def("gen_disappearance", &gen_disappearance, py::arg("t"), py::arg("n_per_time"),
          py::arg("duration"), py::arg("sigma") = 0.5, py::arg("seed") = 0);
    m.def("gen_intersection", &gen_intersection, py::arg("t"), py::arg("n_per_time"),
          py::arg("overlap_level"), py::arg("sigma") = 0.5, py::arg("seed") = 0);
    m.def("sample_labels", &sample_labels, py::arg("resp"), py::arg("seed"));
    m.def("argmax_labels", &argmax_labels, py::arg("resp"));
    m.def("rand_index", &rand_index, py::arg("labels_a"), py::arg("labels_b"));

    py::enum_<BenchMethod>(m, "BenchMethod")
        .value("kernel_em", BenchMethod::kernel_em)
        .value("hungarian", BenchMethod::hungarian)
        .value("constant", BenchMethod::constant);
    py::class_<BenchConfig>(m, "BenchConfig")
        .def(py::init<>())
        .def_readwrite("scenario", &BenchConfig::scenario)
        .def_readwrite("scenario_params", &BenchConfig::scenario_params)
        .def_readwrite("runs", &BenchConfig::runs)
        .def_readwrite("T", &BenchConfig::T)
        .def_readwrite("n_per_time", &BenchConfig::n_per_time)
        .def_readwrite("sigma", &BenchConfig::sigma)
        .def_readwrite("K", &BenchConfig::K)
        .def_readwrite("methods", &BenchConfig::methods)
        .def_readwrite("bandwidths", &BenchConfig::bandwidths)
        .def_readwrite("seed", &BenchConfig::seed);
    py::class_<BenchCell>(m, "BenchCell")
        .def_readonly("method", &BenchCell::method)
        .def_readonly("scenario_param", &BenchCell::scenario_param)
        .def_readonly("scores", &BenchCell::scores)
        .def_readonly("failures", &BenchCell::failures)
        .def_readonly("mean", &BenchCell::mean)
        .def_readonly("se", &BenchCell::se);
    py::class_<BenchResult>(m, "BenchResult")
        .def_readonly("cells", &BenchResult::cells);
    m.def("run_benchmark", &run_benchmark, py::arg("config"));

    // theory
    py::class_<TheoryScenario>(m, "TheoryScenario")
        .def(py::init<>())
        .def_readwrite("T", &TheoryScenario::T)
        .def_readwrite("n", &TheoryScenario::n)
        .def_readwrite("sigma", &TheoryScenario::sigma)
        .def_readwrite("kernel", &TheoryScenario::kernel)
        .def_readwrite("reps", &TheoryScenario::reps)
        .def_readwrite("seed", &TheoryScenario::seed)
        .def("grid", &TheoryScenario::grid);
    py::class_<BiasRow>(m, "BiasRow")
        .def_readonly("t", &BiasRow::t)
        .def_readonly("labeling", &BiasRow::labeling)
        .def_readonly("cluster", &BiasRow::cluster)
        .def_readonly("mc_bias", &BiasRow::mc_bias)
        .def_readonly("mc_se", &BiasRow::mc_se)
        .def_readonly("exact_bias", &BiasRow::exact_bias)
        .def_readonly("interior", &BiasRow::interior);
    py::class_<Theorem1Row>(m, "Theorem1Row")
        .def_readonly("t", &Theorem1Row::t)
        .def_readonly("mse_lin", &Theorem1Row::mse_lin)
        .def_readonly("mse_av", &Theorem1Row::mse_av)
        .def_readonly("mse_diff_se", &Theorem1Row::mse_diff_se)
        .def_readonly("epe_lin", &Theorem1Row::epe_lin)
        .def_readonly("epe_av", &Theorem1Row::epe_av)
        .def_readonly("epe_diff_se", &Theorem1Row::epe_diff_se)
        .def_readonly("mse_ok", &Theorem1Row::mse_ok)
        .def_readonly("epe_ok", &Theorem1Row::epe_ok);
    py::class_<Theorem1Report>(m, "Theorem1Report")
        .def_readonly("rows", &Theorem1Report::rows)
        .def_readonly("all_mse_ok", &Theorem1Report::all_mse_ok)
        .def_readonly("all_epe_ok", &Theorem1Report::all_epe_ok)
        .def_readonly("exact_mse_av_at_zero_noiseless",
                      &Theorem1Report::exact_mse_av_at_zero_noiseless);
    py::class_<VarianceRow>(m, "VarianceRow")
        .def_readonly("t", &VarianceRow::t)
        .def_readonly("labeling", &VarianceRow::labeling)
        .def_readonly("cluster", &VarianceRow::cluster)
        .def_readonly("mc_var", &VarianceRow::mc_var)
        .def_readonly("formula_var", &VarianceRow::formula_var)
        .def_readonly("se", &VarianceRow::se)
        .def_readonly("ok", &VarianceRow::ok);
    py::class_<VarianceReport>(m, "VarianceReport")
        .def_readonly("rows", &VarianceReport::rows)
        .def_readonly("all_ok", &VarianceReport::all_ok);
    m.def("oracle_estimate", &oracle_estimate, py::arg("times"), py::arg("values"),
          py::arg("labels"), py::arg("k"), py::arg("kernel"), py::arg("t"));
    m.def("lambda_weights", &lambda_weights, py::arg("grid"), py::arg("kernel"), py::arg("t"));
    m.def("check_bias", &check_bias, py::arg("scenario"));
    m.def("check_theorem1", &check_theorem1, py::arg("scenario"));
    m.def("check_variance_formula", &check_variance_formula, py::arg("scenario"));
    m.def("oracle_variance_formula", &oracle_variance_formula, py::arg("scenario"), py::arg("t"));

    // io
    py::class_<LoadedSeries>(m, "LoadedSeries")
        .def_readonly("series", &LoadedSeries::series)
        .def_readonly("labels", &LoadedSeries::labels)
        .def("has_labels", &LoadedSeries::has_labels);
    m.def("load_series", &load_series, py::arg("path"));
    m.def("write_series",
          [](const CytoSeries& series, const std::string& path) { write_series(series, path); },
          py::arg("series"), py::arg("path"));
    m.def("cluster_biomass", &cluster_biomass, py::arg("series"), py::arg("resp"));
    m.def("biomass_subset", &biomass_subset, py::arg("biomass"), py::arg("clusters"));
    py::class_<ConfusionMatrix>(m, "ConfusionMatrix")
        .def_readonly("populations", &ConfusionMatrix::populations)
        .def_readonly("fractions", &ConfusionMatrix::fractions)
        .def_readonly("warnings", &ConfusionMatrix::warnings);
    m.def("confusion_matrix",
          [](const CytoSeries& series, const Responsibilities& resp,
             const std::vector<std::vector<std::string>>& labels) {
              return confusion_matrix(series, resp, labels);
          },
          py::arg("series"), py::arg("resp"), py::arg("labels"));

    m.def("cli_main", [](const std::vector<std::string>& args) {
        std::vector<const char*> argv;
        argv.push_back("kernelmix");
        for (const auto& a : args) argv.push_back(a.c_str());
        return cli_main(static_cast<int>(argv.size()), argv.data());
    });
}
