#pragma once

#include <cstdint>
#include <vector>

#include "kernelmix/types.hpp"

namespace kernelmix {

struct FitConfig {
    int K = 1;
    Bandwidths bandwidths;
    KernelFamily kernel_family = KernelFamily::gaussian;
    double kernel_cutoff = 4.0;
    int max_iters = 100;
    double tol = 1e-6;
    std::uint64_t seed = 0;

    KernelSpec pi_kernel() const { return {kernel_family, bandwidths.h_pi, kernel_cutoff}; }
    KernelSpec mu_kernel() const { return {kernel_family, bandwidths.h_mu, kernel_cutoff}; }
    KernelSpec sigma_kernel() const { return {kernel_family, bandwidths.h_sigma, kernel_cutoff}; }
};

struct FitResult {
    ParamsSeries params;
    Responsibilities resp;          // recomputed from params by a final E-step
    std::vector<double> loglik_trace;
    std::vector<FitEvent> events;
};

/// Soft assignments under the given per-time parameters, computed in log
/// space. Points whose density underflows in every cluster get a uniform row
/// and an event. Cluster masses are filled from the data weights.
Responsibilities e_step(const CytoSeries& series, const ParamsSeries& params,
                        std::vector<FitEvent>* events = nullptr);

/// Smoothed mixing proportions at the query times:
/// pi_tk = sum_s w(t-s) mass_sk / sum_s w(t-s) n_s.
/// Throws if the denominator vanishes at some query time (all data beyond
/// the kernel cutoff).
Eigen::MatrixXd m_step_pi(const CytoSeries& series, const Responsibilities& resp,
                          const KernelSpec& kernel, const std::vector<double>& query_times);

struct MeanUpdate {
    std::vector<Eigen::MatrixXd> mu; // per query time: K x d
    std::vector<FitEvent> events;
};

/// Smoothed means. When a cluster's smoothed mass at a query time falls below
/// 1e-8 of the total smoothed mass, the fallback value (the previous iterate,
/// when fitting) is held and an event recorded; without a fallback this is an
/// error.
MeanUpdate m_step_mu(const CytoSeries& series, const Responsibilities& resp,
                     const KernelSpec& kernel, const std::vector<double>& query_times,
                     const std::vector<Eigen::MatrixXd>* fallback = nullptr);

struct CovUpdate {
    std::vector<std::vector<Eigen::MatrixXd>> sigma; // per query time, per cluster: d x d
    std::vector<FitEvent> events;
};

/// Smoothed covariances. Residuals are taken about `mu_at_data_times`, the
/// current smoothed means evaluated at the data grid. Outputs are symmetrized
/// and ridge-regularized; vanished clusters fall back as in m_step_mu.
CovUpdate m_step_sigma(const CytoSeries& series, const Responsibilities& resp,
                       const std::vector<Eigen::MatrixXd>& mu_at_data_times,
                       const KernelSpec& kernel, const std::vector<double>& query_times,
                       const std::vector<std::vector<Eigen::MatrixXd>>* fallback = nullptr);

/// Alternates the E-step and the three smoothed M-steps from the given
/// initial parameters until the relative log-likelihood change drops below
/// config.tol or config.max_iters is reached.
FitResult fit(const CytoSeries& series, const ParamsSeries& init, const FitConfig& config);

/// Applies the smoothed M-step equations at arbitrary query times, using a
/// completed fit's responsibilities. Used by cross-validation to estimate
/// parameters at held-out times.
ParamsSeries predict_at_times(const CytoSeries& series, const Responsibilities& resp,
                              const Bandwidths& bandwidths, const KernelSpec& kernel_shape,
                              const std::vector<double>& new_times);

} // namespace kernelmix
