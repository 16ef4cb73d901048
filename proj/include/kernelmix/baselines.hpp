#pragma once

#include <vector>

#include "kernelmix/init.hpp"
#include "kernelmix/kernel_em.hpp"
#include "kernelmix/types.hpp"

namespace kernelmix {

struct Assignment {
    std::vector<int> perm; // perm[row] = assigned column
    double cost = 0.0;
};

/// Exact minimum-cost perfect matching on a square cost matrix
/// (Jonker-Volgenant style shortest augmenting paths, O(K^3)).
Assignment hungarian_solve(const Eigen::MatrixXd& cost);

/// Pools every cytogram into one aggregate, fits a single mixture with
/// standard EM, and replicates it at every time point.
FitResult constant_fit(const CytoSeries& series, int K, const InitConfig& config);

/// Independent standard-EM fit at each time point; cluster labels of
/// consecutive times are aligned by minimum-cost matching on squared
/// distances between cluster means. Each time's EM is warm-started from the
/// previous time's matched state; a failed per-time fit carries the previous
/// state forward and records an event.
FitResult hungarian_fit(const CytoSeries& series, int K, const InitConfig& config);

} // namespace kernelmix
