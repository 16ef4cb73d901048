#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kernelmix/init.hpp"
#include "kernelmix/kernel_em.hpp"
#include "kernelmix/types.hpp"

namespace kernelmix {

/// Interleaved fold assignment: time index t (0-based) belongs to fold
/// t mod n_folds, so each fold holds every n_folds-th time point.
struct FoldSpec {
    int n_folds = 5;
    std::vector<int> fold_of; // length T, values in [0, n_folds)

    std::vector<int> indices_of(int fold) const;
};

FoldSpec make_folds(int T, int n_folds = 5);

struct GridCell {
    double h_mu = 0.0;
    double h_pi = 0.0;
};

struct CellScore {
    GridCell cell;
    double score = 0.0; // NaN when the cell failed
    std::vector<double> per_fold;
    std::string error; // nonempty when the cell failed
};

struct CVResult {
    std::vector<CellScore> cells;
    double h_sigma = 0.0;
    int best_index = -1;

    const CellScore& best() const { return cells.at(best_index); }
};

struct CVConfig {
    int n_folds = 5;
    double h_sigma = 15.0;
    KernelFamily kernel_family = KernelFamily::gaussian;
    double kernel_cutoff = 4.0;
    int max_iters = 100;
    double tol = 1e-6;
    InitConfig init;
    std::uint64_t seed = 0;
};

/// Per-fold breakdown of one bandwidth evaluation.
struct CVScore {
    double mean = 0.0;
    std::vector<double> per_fold;
};

/// Eq-style cross-validated likelihood: for each fold, fit on the remaining
/// times, predict parameters at the held-out times via the smoothed M-step
/// equations, evaluate the held-out weighted log-likelihood divided by the
/// fold size, and average over folds. The initialization is computed once on
/// the full series and shared across folds so that bandwidths are the only
/// moving part.
CVScore cv_score(const CytoSeries& series, int K, const Bandwidths& bandwidths,
                 const CVConfig& config, const FoldSpec& folds,
                 const ParamsSeries* shared_init = nullptr);

/// Log-spaced grid from h_min to h_max (inclusive), n points.
std::vector<double> log_grid(double h_min, double h_max, int n);

/// Evaluates cv_score over the Cartesian product of h_mu x h_pi values with
/// h_sigma fixed. Failed cells are recorded with their error message and
/// never considered for the best cell. Ties break toward larger h_mu, then
/// larger h_pi.
CVResult grid_search(const CytoSeries& series, int K, const std::vector<double>& h_mu_grid,
                     const std::vector<double>& h_pi_grid, const CVConfig& config);

} // namespace kernelmix
