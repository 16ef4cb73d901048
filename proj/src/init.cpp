#include "kernelmix/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <fmt/core.h>

#include "kernelmix/covariance.hpp"
#include "kernelmix/kernel_em.hpp"
#include "kernelmix/loglik.hpp"
#include "kernelmix/mvn.hpp"
#include "kernelmix/rng.hpp"

namespace kernelmix {

namespace {

int positive_weight_count(const Cytogram& cyt) {
    int n = 0;
    for (Eigen::Index i = 0; i < cyt.weights.size(); ++i)
        if (cyt.weights[i] > 0.0) ++n;
    return n;
}

Eigen::VectorXd weighted_mean(const Cytogram& cyt) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(cyt.dim());
    for (int i = 0; i < cyt.n(); ++i) m += cyt.weights[i] * cyt.points.row(i).transpose();
    return m / cyt.total_weight();
}

Eigen::MatrixXd weighted_covariance(const Cytogram& cyt, const Eigen::VectorXd& mean) {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(cyt.dim(), cyt.dim());
    for (int i = 0; i < cyt.n(); ++i) {
        const Eigen::VectorXd r = cyt.points.row(i).transpose() - mean;
        S.noalias() += cyt.weights[i] * r * r.transpose();
    }
    return S / cyt.total_weight();
}

/// kmeans++-style seeding: first center drawn with probability proportional
/// to weight, later centers proportional to weight times squared distance to
/// the nearest chosen center.
Eigen::MatrixXd seed_centers(const Cytogram& cyt, int K, Rng& rng) {
    const int n = cyt.n();
    Eigen::MatrixXd centers(K, cyt.dim());
    const int first = rng.discrete(cyt.weights);
    centers.row(0) = cyt.points.row(first);

    Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    for (int k = 1; k < K; ++k) {
        for (int i = 0; i < n; ++i) {
            const double dist = (cyt.points.row(i) - centers.row(k - 1)).squaredNorm();
            d2[i] = std::min(d2[i], dist);
        }
        Eigen::VectorXd probs = cyt.weights.cwiseProduct(d2);
        if (!(probs.sum() > 0.0)) probs = cyt.weights; // all remaining points coincide
        centers.row(k) = cyt.points.row(rng.discrete(probs));
    }
    return centers;
}

MixtureState seeded_state(const Cytogram& cyt, int K, Rng& rng) {
    const int d = cyt.dim();
    MixtureState state;
    state.mu = seed_centers(cyt, K, rng);
    const Eigen::VectorXd global_mean = weighted_mean(cyt);
    Eigen::MatrixXd global_cov = weighted_covariance(cyt, global_mean);
    symmetrize_and_regularize(global_cov);
    state.sigma.assign(K, global_cov);

    // Hard-assign to nearest center for the starting proportions.
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(K);
    for (int i = 0; i < cyt.n(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
            const double dist = (cyt.points.row(i) - state.mu.row(k)).squaredNorm();
            if (dist < best_d) {
                best_d = dist;
                best = k;
            }
        }
        mass[best] += cyt.weights[i];
    }
    if (mass.minCoeff() > 0.0)
        state.pi = mass / mass.sum();
    else
        state.pi = Eigen::VectorXd::Constant(K, 1.0 / K);
    return state;
}

/// Constrained covariance M-step: clip eigenvalues below the floor. Keeping
/// the floor fixed across iterations preserves the EM ascent property (the
/// M-step maximizes Q over the same constraint set every time), which a
/// trace-relative ridge does not once a component starts collapsing.
bool clip_eigenvalues(Eigen::MatrixXd& S, double floor_eps) {
    S = 0.5 * (S + S.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.eigenvalues().minCoeff() >= floor_eps) return false;
    const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(floor_eps);
    S = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    S = 0.5 * (S + S.transpose().eval());
    return true;
}

StandardEmResult run_em(const Cytogram& cyt, MixtureState state, Rng& rng,
                        int max_iters, double tol) {
    const int K = state.k();
    const int d = cyt.dim();
    const double total = cyt.total_weight();

    // Data-scale covariance floor, fixed for the whole run.
    const Eigen::VectorXd gmean0 = weighted_mean(cyt);
    double floor_eps = 1e-6 * weighted_covariance(cyt, gmean0).trace() / d;
    if (!(floor_eps > 0.0)) floor_eps = 1e-12;
    for (int k = 0; k < K; ++k)
        clip_eigenvalues(state.sigma[k], floor_eps);

    StandardEmResult result;
    double prev_ll = std::numeric_limits<double>::quiet_NaN();

    for (int iter = 0; iter < max_iters; ++iter) {
        // E-step
        std::vector<MvnDensity> dens;
        dens.reserve(K);
        for (int k = 0; k < K; ++k) dens.emplace_back(state.mu.row(k), state.sigma[k]);
        Eigen::VectorXd log_pi(K);
        for (int k = 0; k < K; ++k)
            log_pi[k] = state.pi[k] > 0.0 ? std::log(state.pi[k])
                                          : -std::numeric_limits<double>::infinity();
        Eigen::MatrixXd gamma(cyt.n(), K);
        Eigen::VectorXd row(K);
        for (int i = 0; i < cyt.n(); ++i) {
            for (int k = 0; k < K; ++k) row[k] = log_pi[k] + dens[k].logpdf(cyt.points.row(i));
            const double lse = log_sum_exp(row);
            if (!std::isfinite(lse)) {
                gamma.row(i).setConstant(1.0 / K);
                result.events.push_back({"underflow_uniform", iter, -1, -1,
                                         fmt::format("point {} underflowed in every cluster", i)});
                continue;
            }
            for (int k = 0; k < K; ++k) gamma(i, k) = std::exp(row[k] - lse);
        }

        // M-step
        Eigen::VectorXd mass = Eigen::VectorXd::Zero(K);
        for (int i = 0; i < cyt.n(); ++i)
            for (int k = 0; k < K; ++k) mass[k] += cyt.weights[i] * gamma(i, k);

        std::vector<int> empty;
        for (int k = 0; k < K; ++k)
            if (mass[k] < 1e-12 * total) empty.push_back(k);

        Eigen::MatrixXd mu_new(K, d);
        for (int k = 0; k < K; ++k) {
            if (mass[k] < 1e-12 * total) continue;
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
            for (int i = 0; i < cyt.n(); ++i)
                acc += cyt.weights[i] * gamma(i, k) * cyt.points.row(i).transpose();
            mu_new.row(k) = acc.transpose() / mass[k];
        }
        for (int k = 0; k < K; ++k) {
            if (mass[k] >= 1e-12 * total) {
                Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
                for (int i = 0; i < cyt.n(); ++i) {
                    const Eigen::VectorXd r = cyt.points.row(i).transpose() - mu_new.row(k).transpose();
                    S.noalias() += cyt.weights[i] * gamma(i, k) * r * r.transpose();
                }
                S /= mass[k];
                if (clip_eigenvalues(S, floor_eps))
                    result.events.push_back({"covariance_floor", iter, -1, k,
                                             fmt::format("eigenvalues clipped at {:.3e}", floor_eps)});
                state.sigma[k] = std::move(S);
            }
        }

        if (!empty.empty()) {
            // Reseed dead components from the weighted data.
            const Eigen::VectorXd gmean = weighted_mean(cyt);
            Eigen::MatrixXd gcov = weighted_covariance(cyt, gmean);
            clip_eigenvalues(gcov, floor_eps);
            for (int k : empty) {
                mu_new.row(k) = cyt.points.row(rng.discrete(cyt.weights));
                state.sigma[k] = gcov;
                mass[k] = total / (100.0 * K);
                result.events.push_back({"reseed", iter, -1, k, "empty cluster reseeded"});
            }
        }
        state.mu = std::move(mu_new);
        state.pi = mass / mass.sum();

        const double ll = loglik_at_time(cyt, state);
        result.loglik_trace.push_back(ll);
        if (iter > 0 && std::abs(ll - prev_ll) < tol * std::abs(ll)) break;
        prev_ll = ll;
    }

    result.state = std::move(state);
    return result;
}

} // namespace

InitMethod init_method_from_string(const std::string& name) {
    if (name == "constant") return InitMethod::constant;
    if (name == "bayesian") return InitMethod::bayesian;
    throw std::invalid_argument(fmt::format("unknown init method '{}'", name));
}

std::string to_string(InitMethod method) {
    return method == InitMethod::constant ? "constant" : "bayesian";
}

StandardEmResult standard_em(const Cytogram& cyt, int K, std::uint64_t seed,
                             int max_iters, double tol) {
    validate(cyt);
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    if (positive_weight_count(cyt) < K)
        throw std::invalid_argument(
            fmt::format("cannot fit K={} clusters to {} effective points",
                        K, positive_weight_count(cyt)));
    Rng rng(seed);
    return run_em(cyt, seeded_state(cyt, K, rng), rng, max_iters, tol);
}

StandardEmResult standard_em_from(const Cytogram& cyt, const MixtureState& init,
                                  std::uint64_t seed, int max_iters, double tol) {
    validate(cyt);
    validate(init);
    if (init.dim() != cyt.dim())
        throw std::invalid_argument("initial state dimension does not match cytogram");
    Rng rng(seed);
    return run_em(cyt, init, rng, max_iters, tol);
}

ParamsSeries constant_init(const CytoSeries& series, int K, const InitConfig& config) {
    validate(series);
    if (config.n_times < 1 || config.n_points_per_time < 1)
        throw std::invalid_argument("subsample sizes must be at least 1");
    Rng rng(derive_seed(config.seed, 0x5a3));

    const int T = series.size();
    const int n_times = std::min(config.n_times, T);
    std::vector<int> picked = rng.sample_without_replacement(T, n_times);
    std::sort(picked.begin(), picked.end());

    // Pool uniformly sampled bins (with their weights) into one cytogram.
    std::vector<Eigen::Index> rows;
    std::vector<const Cytogram*> sources;
    for (int t : picked) {
        const Cytogram& cyt = series.cytograms[t];
        const int take = std::min(config.n_points_per_time, cyt.n());
        std::vector<int> idx = rng.sample_without_replacement(cyt.n(), take);
        std::sort(idx.begin(), idx.end());
        for (int i : idx) {
            rows.push_back(i);
            sources.push_back(&cyt);
        }
    }
    Cytogram pooled;
    pooled.time = 0.0;
    pooled.points.resize(static_cast<Eigen::Index>(rows.size()), series.dim);
    pooled.weights.resize(static_cast<Eigen::Index>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        pooled.points.row(static_cast<Eigen::Index>(r)) = sources[r]->points.row(rows[r]);
        pooled.weights[static_cast<Eigen::Index>(r)] = sources[r]->weights[rows[r]];
    }

    const StandardEmResult em =
        standard_em(pooled, K, config.seed, config.em_max_iters, config.em_tol);

    ParamsSeries out;
    out.times = series.times();
    out.K = K;
    out.states.assign(T, em.state);
    return out;
}

Eigen::VectorXd bayes_pi_update(const Eigen::VectorXd& n_prev, const Eigen::VectorXd& n_curr) {
    const Eigen::VectorXd numer = n_prev + n_curr;
    return numer / numer.sum();
}

Eigen::VectorXd bayes_mu_update(double n_prev_k, const Eigen::VectorXd& mu_prev_k,
                                const Eigen::VectorXd& weighted_point_sum_k, double n_curr_k) {
    if (n_curr_k == 0.0) return mu_prev_k; // zero new mass keeps the prior mean exactly
    return (n_prev_k * mu_prev_k + weighted_point_sum_k) / (n_prev_k + n_curr_k);
}

Eigen::MatrixXd bayes_sigma_update(double n_prev_k, const Eigen::MatrixXd& sigma_prev_k,
                                   const Eigen::MatrixXd& scatter_about_new_mu_k, double n_curr_k) {
    if (n_curr_k == 0.0) return sigma_prev_k;
    return (n_prev_k * sigma_prev_k + scatter_about_new_mu_k) / (n_prev_k + n_curr_k);
}

BayesState bayes_state_from(const MixtureState& state, const Eigen::VectorXd& masses) {
    const int K = state.k();
    const int d = state.dim();
    BayesState bs;
    bs.alpha = masses;
    bs.mean = state.mu;
    bs.nu = masses.array() + static_cast<double>(d) + 1.0;
    bs.psi.resize(K);
    for (int k = 0; k < K; ++k) bs.psi[k] = masses[k] * state.sigma[k];
    return bs;
}

Eigen::MatrixXd iw_posterior_mean_sigma(const BayesState& prior, int k,
                                        const Eigen::MatrixXd& scatter_about_new_mu_k,
                                        double n_curr_k) {
    const int d = static_cast<int>(prior.mean.cols());
    const Eigen::MatrixXd psi_post = prior.psi[k] + scatter_about_new_mu_k;
    const double nu_post = prior.nu[k] + n_curr_k;
    return psi_post / (nu_post - d - 1.0);
}

ParamsSeries bayesian_init(const CytoSeries& series, int K, const InitConfig& config,
                           std::vector<FitEvent>* events) {
    validate(series);
    const int T = series.size();
    const int d = series.dim;

    const StandardEmResult em = standard_em(series.cytograms[0], K,
                                            derive_seed(config.seed, 0xba1),
                                            config.em_max_iters, config.em_tol);

    ParamsSeries out;
    out.times = series.times();
    out.K = K;
    out.states.resize(T);
    out.states[0] = em.state;

    // Weighted cluster masses at the first time, from an E-step on its fit.
    ParamsSeries first;
    first.times = {series.cytograms[0].time};
    first.states = {em.state};
    first.K = K;
    CytoSeries first_series;
    first_series.dim = d;
    first_series.cytograms = {series.cytograms[0]};
    Eigen::VectorXd n_prev =
        e_step(first_series, first).cluster_mass.row(0).transpose();

    for (int t = 1; t < T; ++t) {
        const Cytogram& cyt = series.cytograms[t];
        const MixtureState& prev = out.states[t - 1];

        CytoSeries one;
        one.dim = d;
        one.cytograms = {cyt};
        ParamsSeries prev_params;
        prev_params.times = {cyt.time};
        prev_params.states = {prev};
        prev_params.K = K;
        const Responsibilities resp = e_step(one, prev_params);
        const Eigen::MatrixXd& gamma = resp.gamma[0];
        const Eigen::VectorXd n_curr = resp.cluster_mass.row(0).transpose();

        MixtureState next;
        next.pi = bayes_pi_update(n_prev, n_curr);
        next.mu.resize(K, d);
        next.sigma.resize(K);
        for (int k = 0; k < K; ++k) {
            const double combined = n_prev[k] + n_curr[k];
            if (!(combined > 0.0)) {
                next.mu.row(k) = prev.mu.row(k);
                next.sigma[k] = prev.sigma[k];
                if (events)
                    events->push_back({"carry_forward", -1, t, k,
                                       "zero combined mass; parameters carried from previous time"});
                continue;
            }
            Eigen::VectorXd wsum = Eigen::VectorXd::Zero(d);
            for (int i = 0; i < cyt.n(); ++i)
                wsum += cyt.weights[i] * gamma(i, k) * cyt.points.row(i).transpose();
            next.mu.row(k) =
                bayes_mu_update(n_prev[k], prev.mu.row(k), wsum, n_curr[k]).transpose();

            Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
            for (int i = 0; i < cyt.n(); ++i) {
                const Eigen::VectorXd r = cyt.points.row(i).transpose() - next.mu.row(k).transpose();
                scatter.noalias() += cyt.weights[i] * gamma(i, k) * r * r.transpose();
            }
            Eigen::MatrixXd S = bayes_sigma_update(n_prev[k], prev.sigma[k], scatter, n_curr[k]);
            double eps = 0.0;
            if (symmetrize_and_regularize(S, &eps) && events)
                events->push_back({"ridge", -1, t, k, fmt::format("added {:.3e} * I", eps)});
            next.sigma[k] = std::move(S);
        }
        out.states[t] = std::move(next);
        n_prev = n_curr;
    }
    return out;
}

ParamsSeries make_init(const CytoSeries& series, int K, const InitConfig& config) {
    switch (config.method) {
        case InitMethod::constant: return constant_init(series, K, config);
        case InitMethod::bayesian: return bayesian_init(series, K, config);
    }
    throw std::invalid_argument("unknown init method");
}

} // namespace kernelmix
