#include "kernelmix/cv.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/core.h>

#include "kernelmix/kernel.hpp"
#include "kernelmix/loglik.hpp"

namespace kernelmix {

std::vector<int> FoldSpec::indices_of(int fold) const {
    std::vector<int> out;
    for (size_t t = 0; t < fold_of.size(); ++t)
        if (fold_of[t] == fold) out.push_back(static_cast<int>(t));
    return out;
}

FoldSpec make_folds(int T, int n_folds) {
    if (T < 1) throw std::invalid_argument("T must be at least 1");
    if (n_folds < 2) throw std::invalid_argument("at least 2 folds are required");
    FoldSpec spec;
    spec.n_folds = n_folds;
    spec.fold_of.resize(T);
    for (int t = 0; t < T; ++t) spec.fold_of[t] = t % n_folds;
    return spec;
}

std::vector<double> log_grid(double h_min, double h_max, int n) {
    if (!(h_min > 0.0) || !(h_max >= h_min)) throw std::invalid_argument("bad grid bounds");
    if (n < 1) throw std::invalid_argument("grid size must be at least 1");
    std::vector<double> out;
    out.reserve(n);
    if (n == 1) {
        out.push_back(h_min);
        return out;
    }
    const double la = std::log(h_min), lb = std::log(h_max);
    for (int i = 0; i < n; ++i)
        out.push_back(std::exp(la + (lb - la) * static_cast<double>(i) / (n - 1)));
    return out;
}

namespace {

CytoSeries subset_series(const CytoSeries& series, const std::vector<int>& keep) {
    CytoSeries out;
    out.dim = series.dim;
    out.cytograms.reserve(keep.size());
    for (int t : keep) out.cytograms.push_back(series.cytograms[t]);
    return out;
}

ParamsSeries subset_params(const ParamsSeries& params, const std::vector<int>& keep) {
    ParamsSeries out;
    out.K = params.K;
    out.times.reserve(keep.size());
    out.states.reserve(keep.size());
    for (int t : keep) {
        out.times.push_back(params.times[t]);
        out.states.push_back(params.states[t]);
    }
    return out;
}

} // namespace

CVScore cv_score(const CytoSeries& series, int K, const Bandwidths& bandwidths,
                 const CVConfig& config, const FoldSpec& folds,
                 const ParamsSeries* shared_init) {
    validate(series);
    validate(bandwidths);
    const int T = series.size();
    if (static_cast<int>(folds.fold_of.size()) != T)
        throw std::invalid_argument("fold assignment does not match the series length");

    ParamsSeries init_full;
    if (!shared_init) {
        init_full = make_init(series, K, config.init);
        shared_init = &init_full;
    }

    FitConfig fit_config;
    fit_config.K = K;
    fit_config.bandwidths = bandwidths;
    fit_config.kernel_family = config.kernel_family;
    fit_config.kernel_cutoff = config.kernel_cutoff;
    fit_config.max_iters = config.max_iters;
    fit_config.tol = config.tol;
    fit_config.seed = config.seed;

    const KernelSpec shape{config.kernel_family, 1.0, config.kernel_cutoff};

    CVScore score;
    for (int fold = 0; fold < folds.n_folds; ++fold) {
        std::vector<int> held_out = folds.indices_of(fold);
        if (held_out.empty()) continue;
        std::vector<int> train;
        for (int t = 0; t < T; ++t)
            if (folds.fold_of[t] != fold) train.push_back(t);
        if (train.empty())
            throw std::runtime_error(fmt::format("fold {} leaves no training data", fold + 1));

        // Every held-out time must be reachable from some training time under
        // all three kernels.
        for (int t : held_out) {
            const double tt = series.cytograms[t].time;
            for (double h : {bandwidths.h_pi, bandwidths.h_mu, bandwidths.h_sigma}) {
                bool reachable = false;
                for (int s : train)
                    if (kernel_weight({config.kernel_family, h, config.kernel_cutoff},
                                      tt - series.cytograms[s].time) > 0.0) {
                        reachable = true;
                        break;
                    }
                if (!reachable)
                    throw std::runtime_error(
                        fmt::format("held-out time {} is outside kernel reach of fold {}'s "
                                    "training data; increase the bandwidth ({}) or cutoff ({})",
                                    tt, fold + 1, h, config.kernel_cutoff));
            }
        }

        const CytoSeries train_series = subset_series(series, train);
        const ParamsSeries train_init = subset_params(*shared_init, train);
        const FitResult fitted = fit(train_series, train_init, fit_config);

        std::vector<double> held_times;
        held_times.reserve(held_out.size());
        for (int t : held_out) held_times.push_back(series.cytograms[t].time);
        const ParamsSeries predicted =
            predict_at_times(train_series, fitted.resp, bandwidths, shape, held_times);

        double fold_ll = 0.0;
        for (size_t j = 0; j < held_out.size(); ++j)
            fold_ll += loglik_at_time(series.cytograms[held_out[j]], predicted.states[j]);
        score.per_fold.push_back(fold_ll / static_cast<double>(held_out.size()));
    }
    if (score.per_fold.empty()) throw std::runtime_error("no nonempty fold");

    double sum = 0.0;
    for (double v : score.per_fold) sum += v;
    score.mean = sum / static_cast<double>(score.per_fold.size());
    return score;
}

CVResult grid_search(const CytoSeries& series, int K, const std::vector<double>& h_mu_grid,
                     const std::vector<double>& h_pi_grid, const CVConfig& config) {
    if (h_mu_grid.empty() || h_pi_grid.empty())
        throw std::invalid_argument("bandwidth grid must be nonempty");
    const FoldSpec folds = make_folds(series.size(), config.n_folds);
    const ParamsSeries shared_init = make_init(series, K, config.init);

    CVResult result;
    result.h_sigma = config.h_sigma;
    for (double h_mu : h_mu_grid) {
        for (double h_pi : h_pi_grid) {
            CellScore cell;
            cell.cell = {h_mu, h_pi};
            try {
                const CVScore s = cv_score(series, K, {h_pi, h_mu, config.h_sigma}, config,
                                           folds, &shared_init);
                cell.score = s.mean;
                cell.per_fold = s.per_fold;
            } catch (const std::exception& e) {
                cell.score = std::numeric_limits<double>::quiet_NaN();
                cell.error = e.what();
            }
            result.cells.push_back(std::move(cell));
        }
    }

    for (size_t i = 0; i < result.cells.size(); ++i) {
        const CellScore& c = result.cells[i];
        if (std::isnan(c.score)) continue;
        if (result.best_index < 0) {
            result.best_index = static_cast<int>(i);
            continue;
        }
        const CellScore& b = result.cells[result.best_index];
        const bool better =
            c.score > b.score ||
            (c.score == b.score &&
             (c.cell.h_mu > b.cell.h_mu ||
              (c.cell.h_mu == b.cell.h_mu && c.cell.h_pi > b.cell.h_pi)));
        if (better) result.best_index = static_cast<int>(i);
    }
    if (result.best_index < 0)
        throw std::runtime_error("every grid cell failed; no best bandwidth available");
    return result;
}

} // namespace kernelmix
