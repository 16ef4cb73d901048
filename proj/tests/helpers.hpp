#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "kernelmix/kernel.hpp"
#include "kernelmix/rng.hpp"
#include "kernelmix/types.hpp"

namespace testutil {

using kernelmix::CytoSeries;
using kernelmix::Cytogram;
using kernelmix::MixtureState;
using kernelmix::ParamsSeries;
using kernelmix::Rng;

inline Eigen::MatrixXd random_spd(int d, Rng& rng, double base = 1.0) {
    Eigen::MatrixXd A(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) A(i, j) = rng.normal();
    return A * A.transpose() + base * Eigen::MatrixXd::Identity(d, d);
}

inline Cytogram random_cytogram(double time, int n, int d, Rng& rng, bool unit_weights = false) {
    Cytogram cyt;
    cyt.time = time;
    cyt.points.resize(n, d);
    cyt.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) cyt.points(i, j) = 2.0 * rng.normal();
        cyt.weights[i] = unit_weights ? 1.0 : 0.25 + rng.uniform();
    }
    return cyt;
}

inline CytoSeries random_series(int T, int n, int d, Rng& rng, bool unit_weights = false) {
    CytoSeries series;
    series.dim = d;
    for (int t = 0; t < T; ++t)
        series.cytograms.push_back(random_cytogram(static_cast<double>(t), n, d, rng, unit_weights));
    return series;
}

inline MixtureState random_state(int K, int d, Rng& rng) {
    MixtureState state;
    state.pi.resize(K);
    for (int k = 0; k < K; ++k) state.pi[k] = 0.2 + rng.uniform();
    state.pi /= state.pi.sum();
    state.mu.resize(K, d);
    for (int k = 0; k < K; ++k)
        for (int j = 0; j < d; ++j) state.mu(k, j) = 3.0 * rng.normal();
    state.sigma.resize(K);
    for (int k = 0; k < K; ++k) state.sigma[k] = random_spd(d, rng, 0.5);
    return state;
}

inline ParamsSeries random_params(const CytoSeries& series, int K, Rng& rng) {
    ParamsSeries params;
    params.K = K;
    params.times = series.times();
    for (int t = 0; t < series.size(); ++t)
        params.states.push_back(random_state(K, series.dim, rng));
    return params;
}

// Independent naive densities; no Cholesky, no log-sum-exp.
inline double naive_mvn_pdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                            const Eigen::MatrixXd& sigma) {
    const int d = static_cast<int>(y.size());
    const Eigen::VectorXd r = y - mu;
    const double quad = r.dot(sigma.inverse() * r);
    return std::exp(-0.5 * quad) / std::sqrt(std::pow(2.0 * M_PI, d) * sigma.determinant());
}

inline double naive_weighted_loglik(const CytoSeries& series, const ParamsSeries& params) {
    double total = 0.0;
    for (int t = 0; t < series.size(); ++t) {
        const Cytogram& cyt = series.cytograms[t];
        const MixtureState& s = params.states[t];
        for (int i = 0; i < cyt.n(); ++i) {
            double mix = 0.0;
            for (int k = 0; k < s.k(); ++k)
                mix += s.pi[k] * naive_mvn_pdf(cyt.points.row(i), s.mu.row(k), s.sigma[k]);
            total += cyt.weights[i] * std::log(mix);
        }
    }
    return total;
}

// Brute-force smoothed M-step sums, written as the double loops they are.
inline Eigen::VectorXd naive_m_step_mu(const CytoSeries& series,
                                       const std::vector<Eigen::MatrixXd>& gamma,
                                       const kernelmix::KernelSpec& kernel, double t, int k) {
    Eigen::VectorXd numer = Eigen::VectorXd::Zero(series.dim);
    double denom = 0.0;
    for (int s = 0; s < series.size(); ++s) {
        const double w = kernelmix::kernel_weight(kernel, t - series.cytograms[s].time);
        for (int i = 0; i < series.cytograms[s].n(); ++i) {
            const double cg = series.cytograms[s].weights[i] * gamma[s](i, k);
            numer += w * cg * series.cytograms[s].points.row(i).transpose();
            denom += w * cg;
        }
    }
    return numer / denom;
}

inline Eigen::MatrixXd naive_m_step_sigma(const CytoSeries& series,
                                          const std::vector<Eigen::MatrixXd>& gamma,
                                          const std::vector<Eigen::MatrixXd>& mu_data,
                                          const kernelmix::KernelSpec& kernel, double t, int k) {
    Eigen::MatrixXd numer = Eigen::MatrixXd::Zero(series.dim, series.dim);
    double denom = 0.0;
    for (int s = 0; s < series.size(); ++s) {
        const double w = kernelmix::kernel_weight(kernel, t - series.cytograms[s].time);
        for (int i = 0; i < series.cytograms[s].n(); ++i) {
            const double cg = series.cytograms[s].weights[i] * gamma[s](i, k);
            const Eigen::VectorXd r =
                series.cytograms[s].points.row(i).transpose() - mu_data[s].row(k).transpose();
            numer += w * cg * r * r.transpose();
            denom += w * cg;
        }
    }
    return numer / denom;
}

// O(n^2) pair enumeration Rand index.
inline double naive_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    const size_t n = a.size();
    double agree = 0.0, total = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            const bool same_a = a[i] == a[j];
            const bool same_b = b[i] == b[j];
            if (same_a == same_b) agree += 1.0;
            total += 1.0;
        }
    return agree / total;
}

// Exhaustive minimum-cost assignment for small K.
inline double brute_force_assignment_cost(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace testutil
