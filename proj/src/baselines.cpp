#include "kernelmix/baselines.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/core.h>

#include "kernelmix/loglik.hpp"
#include "kernelmix/rng.hpp"

namespace kernelmix {

Assignment hungarian_solve(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw std::invalid_argument("cost matrix must be square");
    if (!cost.allFinite()) throw std::invalid_argument("cost matrix must be finite");
    if (n == 0) return {};

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    Assignment out;
    out.perm.assign(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j]) out.perm[p[j] - 1] = j - 1;
    for (int i = 0; i < n; ++i) out.cost += cost(i, out.perm[i]);
    return out;
}

FitResult constant_fit(const CytoSeries& series, int K, const InitConfig& config) {
    validate(series);
    Eigen::Index total_rows = 0;
    for (const auto& cyt : series.cytograms) total_rows += cyt.points.rows();

    Cytogram pooled;
    pooled.time = 0.0;
    pooled.points.resize(total_rows, series.dim);
    pooled.weights.resize(total_rows);
    Eigen::Index at = 0;
    for (const auto& cyt : series.cytograms) {
        pooled.points.middleRows(at, cyt.points.rows()) = cyt.points;
        pooled.weights.segment(at, cyt.weights.size()) = cyt.weights;
        at += cyt.points.rows();
    }

    StandardEmResult em = standard_em(pooled, K, config.seed, config.em_max_iters, config.em_tol);

    FitResult result;
    result.params.times = series.times();
    result.params.K = K;
    result.params.states.assign(series.size(), em.state);
    result.loglik_trace = std::move(em.loglik_trace);
    result.events = std::move(em.events);
    result.resp = e_step(series, result.params, &result.events);
    return result;
}

namespace {

MixtureState permute_state(const MixtureState& state, const std::vector<int>& perm) {
    const int K = state.k();
    MixtureState out;
    out.pi.resize(K);
    out.mu.resize(K, state.dim());
    out.sigma.resize(K);
    for (int j = 0; j < K; ++j) {
        out.pi[perm[j]] = state.pi[j];
        out.mu.row(perm[j]) = state.mu.row(j);
        out.sigma[perm[j]] = state.sigma[j];
    }
    return out;
}

} // namespace

FitResult hungarian_fit(const CytoSeries& series, int K, const InitConfig& config) {
    validate(series);
    const int T = series.size();

    FitResult result;
    result.params.times = series.times();
    result.params.K = K;
    result.params.states.resize(T);

    MixtureState previous;
    for (int t = 0; t < T; ++t) {
        const Cytogram& cyt = series.cytograms[t];
        const std::uint64_t seed_t = derive_seed(config.seed, static_cast<std::uint64_t>(t));
        MixtureState fitted;
        bool ok = false;
        try {
            if (t == 0) {
                fitted = standard_em(cyt, K, seed_t, config.em_max_iters, config.em_tol).state;
            } else {
                // Warm start from the previous matched state; restart fresh if
                // the warm start degenerates.
                try {
                    fitted = standard_em_from(cyt, previous, seed_t,
                                              config.em_max_iters, config.em_tol).state;
                } catch (const std::exception&) {
                    fitted = standard_em(cyt, K, seed_t, config.em_max_iters, config.em_tol).state;
                }
            }
            ok = true;
        } catch (const std::exception& e) {
            if (t == 0) throw;
            result.events.push_back({"carry_forward", -1, t, -1,
                                     fmt::format("per-time EM failed ({}); previous state reused",
                                                 e.what())});
            fitted = previous;
        }

        if (t > 0 && ok) {
            Eigen::MatrixXd cost(K, K);
            for (int j = 0; j < K; ++j)
                for (int k = 0; k < K; ++k)
                    cost(j, k) = (fitted.mu.row(j) - previous.mu.row(k)).squaredNorm();
            const Assignment match = hungarian_solve(cost);
            fitted = permute_state(fitted, match.perm);
        }

        result.params.states[t] = fitted;
        previous = std::move(fitted);
    }

    result.resp = e_step(series, result.params, &result.events);
    result.loglik_trace = {weighted_loglik(series, result.params)};
    return result;
}

} // namespace kernelmix
