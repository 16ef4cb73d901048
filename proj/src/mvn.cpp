#include "kernelmix/mvn.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace kernelmix {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;
}

MvnDensity::MvnDensity(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) : mu_(mu) {
    const Eigen::Index d = mu.size();
    if (sigma.rows() != d || sigma.cols() != d)
        throw std::invalid_argument(
            fmt::format("covariance shape {}x{} does not match mean dimension {}",
                        sigma.rows(), sigma.cols(), d));
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + sigma.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("covariance is not symmetric");
    llt_.compute(sigma);
    if (llt_.info() != Eigen::Success)
        throw std::invalid_argument("covariance is not positive definite");
    double log_det_half = 0.0;
    const auto& L = llt_.matrixLLT();
    for (Eigen::Index i = 0; i < d; ++i) {
        const double lii = L(i, i);
        if (!(lii > 0.0) || !std::isfinite(lii))
            throw std::invalid_argument("covariance is not positive definite");
        log_det_half += std::log(lii);
    }
    log_norm_const_ = -0.5 * static_cast<double>(d) * kLogTwoPi - log_det_half;
}

double MvnDensity::logpdf(const Eigen::VectorXd& y) const {
    Eigen::VectorXd v = y - mu_;
    llt_.matrixL().solveInPlace(v);
    return log_norm_const_ - 0.5 * v.squaredNorm();
}

double mvn_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                  const Eigen::MatrixXd& sigma) {
    return MvnDensity(mu, sigma).logpdf(y);
}

} // namespace kernelmix
