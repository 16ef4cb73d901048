#pragma once

#include <Eigen/Core>

namespace kernelmix {

/// Symmetrizes M in place and, when its smallest eigenvalue falls below the
/// ridge epsilon (1e-6 * trace/d, floored at 1e-12 for all-zero matrices),
/// adds epsilon * I. Returns true when a ridge was applied; the epsilon used
/// is written to *eps_out when given.
bool symmetrize_and_regularize(Eigen::MatrixXd& M, double* eps_out = nullptr);

} // namespace kernelmix
