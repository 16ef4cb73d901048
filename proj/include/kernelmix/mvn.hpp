#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace kernelmix {

/// Cached Cholesky factorization of one cluster's covariance, for evaluating
/// many points against the same (mu, sigma).
class MvnDensity {
public:
    /// Throws std::invalid_argument if sigma is not symmetric positive definite.
    MvnDensity(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);

    double logpdf(const Eigen::VectorXd& y) const;

    const Eigen::VectorXd& mean() const { return mu_; }

private:
    Eigen::VectorXd mu_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double log_norm_const_; // -d/2 log(2 pi) - sum log L_ii
};

/// log of the multivariate normal density at y.
double mvn_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                  const Eigen::MatrixXd& sigma);

} // namespace kernelmix
