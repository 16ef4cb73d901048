#include "kernelmix/simulation.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "kernelmix/baselines.hpp"
#include "kernelmix/rng.hpp"

namespace kernelmix {

namespace {

SimTruth draw_two_cluster_series(const Eigen::MatrixXd& means, const Eigen::MatrixXd& pis,
                                 int n_per_time, double sigma, std::uint64_t seed) {
    const int T = static_cast<int>(means.rows());
    Rng rng(seed);

    SimTruth truth;
    truth.mean_fns = means;
    truth.pi_fns = pis;
    truth.series.dim = 1;
    truth.series.cytograms.resize(T);
    truth.labels.resize(T);
    for (int t = 0; t < T; ++t) {
        Cytogram& cyt = truth.series.cytograms[t];
        cyt.time = static_cast<double>(t);
        cyt.points.resize(n_per_time, 1);
        cyt.weights = Eigen::VectorXd::Ones(n_per_time);
        truth.labels[t].resize(n_per_time);
        for (int i = 0; i < n_per_time; ++i) {
            const int z = rng.uniform() < pis(t, 1) ? 1 : 0;
            truth.labels[t][i] = z;
            cyt.points(i, 0) = means(t, z) + sigma * rng.normal();
        }
    }
    return truth;
}

} // namespace

SimTruth gen_disappearance(int T, int n_per_time, int duration, double sigma,
                           std::uint64_t seed) {
    if (T < 1 || n_per_time < 1) throw std::invalid_argument("T and n_per_time must be positive");
    if (duration < 0 || duration >= T)
        throw std::invalid_argument(
            fmt::format("disappearance duration {} must lie in [0, T) with T={}", duration, T));

    Eigen::MatrixXd means(T, 2), pis(T, 2);
    const int start = (T - duration) / 2;
    for (int t = 0; t < T; ++t) {
        means(t, 0) = 0.0;
        means(t, 1) = 4.0 + std::sin(2.0 * M_PI * t / T);
        const bool gone = t >= start && t < start + duration;
        pis(t, 1) = gone ? 0.0 : 0.5;
        pis(t, 0) = 1.0 - pis(t, 1);
    }
    SimTruth truth = draw_two_cluster_series(means, pis, n_per_time, sigma, seed);
    truth.scenario = "disappearance";
    truth.params = {{"T", static_cast<double>(T)},
                    {"n_per_time", static_cast<double>(n_per_time)},
                    {"duration", static_cast<double>(duration)},
                    {"sigma", sigma}};
    return truth;
}

SimTruth gen_intersection(int T, int n_per_time, double overlap_level, double sigma,
                          std::uint64_t seed) {
    if (T < 2 || n_per_time < 1) throw std::invalid_argument("T must be >= 2, n_per_time >= 1");
    if (overlap_level < 0.0) throw std::invalid_argument("overlap_level must be nonnegative");

    // Symmetric linear trajectories: the gap starts at gap_start and shrinks
    // linearly to gap_start * (1 - overlap_level) at the last time, so level 0
    // keeps the clusters parallel and levels above 1 make them cross.
    const double gap_start = 6.0;
    const double gap_end = gap_start * (1.0 - overlap_level);
    Eigen::MatrixXd means(T, 2), pis(T, 2);
    for (int t = 0; t < T; ++t) {
        const double frac = static_cast<double>(t) / (T - 1);
        const double gap = gap_start + (gap_end - gap_start) * frac;
        means(t, 0) = 0.5 * gap;
        means(t, 1) = -0.5 * gap;
        pis(t, 0) = 0.5;
        pis(t, 1) = 0.5;
    }
    SimTruth truth = draw_two_cluster_series(means, pis, n_per_time, sigma, seed);
    truth.scenario = "intersection";
    truth.params = {{"T", static_cast<double>(T)},
                    {"n_per_time", static_cast<double>(n_per_time)},
                    {"overlap_level", overlap_level},
                    {"sigma", sigma}};
    return truth;
}

std::vector<std::vector<int>> sample_labels(const Responsibilities& resp, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<int>> out(resp.size());
    for (int t = 0; t < resp.size(); ++t) {
        const Eigen::MatrixXd& g = resp.gamma[t];
        out[t].resize(g.rows());
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            out[t][i] = rng.discrete(g.row(i).transpose());
    }
    return out;
}

std::vector<std::vector<int>> argmax_labels(const Responsibilities& resp) {
    std::vector<std::vector<int>> out(resp.size());
    for (int t = 0; t < resp.size(); ++t) {
        const Eigen::MatrixXd& g = resp.gamma[t];
        out[t].resize(g.rows());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            Eigen::Index best;
            g.row(i).maxCoeff(&best);
            out[t][i] = static_cast<int>(best);
        }
    }
    return out;
}

double rand_index(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
    const size_t n = labels_a.size();
    if (n != labels_b.size()) throw std::invalid_argument("labelings have different lengths");
    if (n < 2) throw std::invalid_argument("need at least two points");

    std::map<int, int> ia, ib;
    for (int v : labels_a) ia.emplace(v, static_cast<int>(ia.size()));
    for (int v : labels_b) ib.emplace(v, static_cast<int>(ib.size()));

    Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ia.size(), ib.size());
    for (size_t i = 0; i < n; ++i) table(ia[labels_a[i]], ib[labels_b[i]]) += 1.0;

    auto pairs = [](double m) { return 0.5 * m * (m - 1.0); };
    double together_both = 0.0;
    for (Eigen::Index r = 0; r < table.rows(); ++r)
        for (Eigen::Index c = 0; c < table.cols(); ++c) together_both += pairs(table(r, c));
    double together_a = 0.0, together_b = 0.0;
    for (Eigen::Index r = 0; r < table.rows(); ++r) together_a += pairs(table.row(r).sum());
    for (Eigen::Index c = 0; c < table.cols(); ++c) together_b += pairs(table.col(c).sum());

    const double total = pairs(static_cast<double>(n));
    const double agreements = total + 2.0 * together_both - together_a - together_b;
    return agreements / total;
}

BenchMethod bench_method_from_string(const std::string& name) {
    if (name == "kernel" || name == "kernel-em" || name == "kernel_em")
        return BenchMethod::kernel_em;
    if (name == "hungarian") return BenchMethod::hungarian;
    if (name == "constant") return BenchMethod::constant;
    throw std::invalid_argument(fmt::format("unknown benchmark method '{}'", name));
}

std::string to_string(BenchMethod method) {
    switch (method) {
        case BenchMethod::kernel_em: return "kernel-em";
        case BenchMethod::hungarian: return "hungarian";
        case BenchMethod::constant: return "constant";
    }
    return "?";
}

BenchResult run_benchmark(const BenchConfig& config) {
    if (config.runs < 1) throw std::invalid_argument("at least one run is required");
    if (config.scenario_params.empty())
        throw std::invalid_argument("at least one scenario parameter is required");

    BenchResult result;
    result.config = config;

    for (double param : config.scenario_params) {
        std::vector<BenchCell> cells;
        for (BenchMethod m : config.methods) cells.push_back({m, param, {}, 0, 0.0, 0.0});

        for (int run = 0; run < config.runs; ++run) {
            const std::uint64_t run_seed =
                derive_seed(config.seed, static_cast<std::uint64_t>(run),
                            static_cast<std::uint64_t>(param * 1024.0));
            const SimTruth truth =
                config.scenario == "disappearance"
                    ? gen_disappearance(config.T, config.n_per_time,
                                        static_cast<int>(std::lround(param)), config.sigma,
                                        run_seed)
                    : gen_intersection(config.T, config.n_per_time, param, config.sigma,
                                       run_seed);

            InitConfig init;
            init.method = InitMethod::constant;
            init.n_times = config.init_n_times;
            init.n_points_per_time = config.init_n_points;
            init.em_max_iters = config.em_max_iters;
            init.em_tol = config.em_tol;
            init.seed = derive_seed(run_seed, 0x5eed);

            for (size_t mi = 0; mi < config.methods.size(); ++mi) {
                try {
                    FitResult fitted;
                    switch (config.methods[mi]) {
                        case BenchMethod::kernel_em: {
                            FitConfig fc;
                            fc.K = config.K;
                            fc.bandwidths = config.bandwidths;
                            fc.kernel_family = config.kernel_family;
                            fc.kernel_cutoff = config.kernel_cutoff;
                            fc.max_iters = config.max_iters;
                            fc.tol = config.tol;
                            fc.seed = init.seed;
                            fitted = fit(truth.series, constant_init(truth.series, config.K, init), fc);
                            break;
                        }
                        case BenchMethod::hungarian:
                            fitted = hungarian_fit(truth.series, config.K, init);
                            break;
                        case BenchMethod::constant:
                            fitted = constant_fit(truth.series, config.K, init);
                            break;
                    }
                    const auto sampled =
                        sample_labels(fitted.resp, derive_seed(run_seed, 0x1abe1, mi));
                    double acc = 0.0;
                    for (int t = 0; t < truth.series.size(); ++t)
                        acc += rand_index(truth.labels[t], sampled[t]);
                    cells[mi].scores.push_back(acc / truth.series.size());
                } catch (const std::exception&) {
                    ++cells[mi].failures;
                }
            }
        }

        for (auto& cell : cells) {
            const int n_ok = static_cast<int>(cell.scores.size());
            if (n_ok > 0) {
                double sum = 0.0;
                for (double s : cell.scores) sum += s;
                cell.mean = sum / n_ok;
                double ss = 0.0;
                for (double s : cell.scores) ss += (s - cell.mean) * (s - cell.mean);
                cell.se = n_ok > 1 ? std::sqrt(ss / (n_ok - 1)) / std::sqrt(n_ok) : 0.0;
            }
            result.cells.push_back(std::move(cell));
        }
    }
    return result;
}

} // namespace kernelmix
