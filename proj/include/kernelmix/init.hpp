#pragma once

#include <cstdint>
#include <vector>

#include "kernelmix/types.hpp"

namespace kernelmix {

enum class InitMethod { constant, bayesian };

InitMethod init_method_from_string(const std::string& name);
std::string to_string(InitMethod method);

struct InitConfig {
    InitMethod method = InitMethod::constant;
    int n_times = 50;            // time points to subsample for the constant method
    int n_points_per_time = 50;  // bins sampled per selected time
    int em_max_iters = 100;
    double em_tol = 1e-8;
    std::uint64_t seed = 0;
};

struct StandardEmResult {
    MixtureState state;
    std::vector<double> loglik_trace;
    std::vector<FitEvent> events;
};

/// Classical weighted Gaussian-mixture EM on a single cytogram, with
/// kmeans++-style seeding on the weighted points. The weighted log-likelihood
/// is nondecreasing across iterations (up to degeneracy recoveries, which are
/// recorded as events).
StandardEmResult standard_em(const Cytogram& cyt, int K, std::uint64_t seed,
                             int max_iters = 100, double tol = 1e-8);

/// Same EM loop started from a given state instead of a fresh seeding.
StandardEmResult standard_em_from(const Cytogram& cyt, const MixtureState& init,
                                  std::uint64_t seed, int max_iters = 100, double tol = 1e-8);

/// Time-constant initialization: subsample times, then bins within each
/// sampled time, pool into one cytogram, run standard_em, replicate the
/// result at every time point.
ParamsSeries constant_init(const CytoSeries& series, int K, const InitConfig& config);

/// Sequential conjugate posterior-mean initialization: standard EM at the
/// first time, then for each later time an E-step against the previous
/// state followed by Dirichlet / Normal / Inverse-Wishart posterior means.
ParamsSeries bayesian_init(const CytoSeries& series, int K, const InitConfig& config,
                           std::vector<FitEvent>* events = nullptr);

/// Dispatch on config.method.
ParamsSeries make_init(const CytoSeries& series, int K, const InitConfig& config);

// Posterior-mean update formulas, exposed for direct verification.
// n_prev / n_curr are weighted cluster masses at the previous / current time.
Eigen::VectorXd bayes_pi_update(const Eigen::VectorXd& n_prev, const Eigen::VectorXd& n_curr);
Eigen::VectorXd bayes_mu_update(double n_prev_k, const Eigen::VectorXd& mu_prev_k,
                                const Eigen::VectorXd& weighted_point_sum_k, double n_curr_k);
Eigen::MatrixXd bayes_sigma_update(double n_prev_k, const Eigen::MatrixXd& sigma_prev_k,
                                   const Eigen::MatrixXd& scatter_about_new_mu_k, double n_curr_k);

/// Conjugate-prior bookkeeping for one time step: prior counts, prior means,
/// inverse-Wishart scale matrices and degrees of freedom.
struct BayesState {
    Eigen::VectorXd alpha;               // prior counts, one per cluster
    Eigen::MatrixXd mean;                // K x d
    std::vector<Eigen::MatrixXd> psi;    // per cluster: alpha_k * sigma_k
    Eigen::VectorXd nu;                  // alpha_k + d + 1
};

BayesState bayes_state_from(const MixtureState& state, const Eigen::VectorXd& masses);

/// Inverse-Wishart posterior mean Psi_post / (nu_post - d - 1), the second
/// route to the covariance update.
Eigen::MatrixXd iw_posterior_mean_sigma(const BayesState& prior, int k,
                                        const Eigen::MatrixXd& scatter_about_new_mu_k,
                                        double n_curr_k);

} // namespace kernelmix
