#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kernelmix/kernel_em.hpp"
#include "kernelmix/types.hpp"

namespace kernelmix {

/// Synthetic series with known generating truth.
struct SimTruth {
    CytoSeries series;
    std::vector<std::vector<int>> labels; // per time, per point, in [0, K)
    Eigen::MatrixXd mean_fns;             // T x K true means (1-d scenarios)
    Eigen::MatrixXd pi_fns;               // T x K true proportions
    std::map<std::string, double> params; // scenario parameters, echoed to output
    std::string scenario;
};

/// Two 1-d clusters: one fixed at mean 0, one riding a sinusoid around 4
/// that vanishes (pi = 0) during a centered window of `duration` time
/// points. Unit weights, times 0..T-1 hours.
SimTruth gen_disappearance(int T, int n_per_time, int duration, double sigma,
                           std::uint64_t seed);

/// Two 1-d clusters on symmetric linear trajectories that approach each
/// other as time advances; higher overlap_level shrinks the final gap, with
/// crossing beyond level 1. Balanced proportions, unit weights.
SimTruth gen_intersection(int T, int n_per_time, double overlap_level, double sigma,
                          std::uint64_t seed);

/// Hard labels drawn independently from each point's responsibility row.
std::vector<std::vector<int>> sample_labels(const Responsibilities& resp, std::uint64_t seed);

/// Argmax variant, for diagnostics only.
std::vector<std::vector<int>> argmax_labels(const Responsibilities& resp);

/// Fraction of unordered point pairs on which the two labelings agree
/// (same/different cluster), computed from the contingency table.
double rand_index(const std::vector<int>& labels_a, const std::vector<int>& labels_b);

enum class BenchMethod { kernel_em, hungarian, constant };

BenchMethod bench_method_from_string(const std::string& name);
std::string to_string(BenchMethod method);

struct BenchConfig {
    std::string scenario = "disappearance";   // or "intersection"
    std::vector<double> scenario_params;      // durations or overlap levels
    int runs = 50;
    int T = 100;
    int n_per_time = 100;
    double sigma = 0.5;
    int K = 2;
    std::vector<BenchMethod> methods = {BenchMethod::kernel_em, BenchMethod::hungarian,
                                        BenchMethod::constant};
    Bandwidths bandwidths{6.0, 8.0, 25.0};    // kernel-EM smoothing for these scenarios
    KernelFamily kernel_family = KernelFamily::gaussian;
    double kernel_cutoff = 4.0;
    int max_iters = 50;
    double tol = 1e-6;
    int em_max_iters = 100;
    double em_tol = 1e-8;
    int init_n_times = 50;
    int init_n_points = 50;
    std::uint64_t seed = 0;
};

struct BenchCell {
    BenchMethod method;
    double scenario_param = 0.0;
    std::vector<double> scores; // per successful run: time-averaged Rand index
    int failures = 0;
    double mean = 0.0;
    double se = 0.0; // sample SD / sqrt(runs)
};

struct BenchResult {
    BenchConfig config;
    std::vector<BenchCell> cells;
};

/// For each scenario parameter and run: generate, fit every method, sample
/// labels from the fitted responsibilities, score the per-time Rand index
/// against the truth, and average over time. Failures are counted, never
/// silently dropped.
BenchResult run_benchmark(const BenchConfig& config);

} // namespace kernelmix
