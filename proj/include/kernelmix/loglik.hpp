#pragma once

#include "kernelmix/types.hpp"

namespace kernelmix {

/// log(sum_i exp(x_i)) with max shift; -inf input entries are skipped.
double log_sum_exp(const Eigen::VectorXd& x);

/// Weighted mixture log-likelihood of one cytogram under one mixture state:
/// sum_i C_i * log( sum_k pi_k phi(Y_i; mu_k, sigma_k) ).
double loglik_at_time(const Cytogram& cyt, const MixtureState& state);

/// Series total: sum over times of loglik_at_time.
double weighted_loglik(const CytoSeries& series, const ParamsSeries& params);

} // namespace kernelmix
