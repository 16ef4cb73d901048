#include "kernelmix/covariance.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace kernelmix {

bool symmetrize_and_regularize(Eigen::MatrixXd& M, double* eps_out) {
    M = 0.5 * (M + M.transpose().eval());
    const int d = static_cast<int>(M.rows());
    double eps = 1e-6 * M.trace() / d;
    if (!(eps > 0.0)) eps = 1e-12;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    const double lambda_min = es.eigenvalues().minCoeff();
    if (lambda_min >= eps) return false;

    // Add eps*I; a negative smallest eigenvalue (rounding on a degenerate
    // scatter) is lifted back to eps as well.
    const double shift = eps + std::max(0.0, -lambda_min);
    M.diagonal().array() += shift;
    if (eps_out) *eps_out = shift;
    return true;
}

} // namespace kernelmix
