#include "kernelmix/kernel_em.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/core.h>

#include "kernelmix/covariance.hpp"
#include "kernelmix/kernel.hpp"
#include "kernelmix/loglik.hpp"
#include "kernelmix/mvn.hpp"

namespace kernelmix {

namespace {

constexpr double kVanishedFraction = 1e-8;

Eigen::VectorXd total_weights(const CytoSeries& series) {
    Eigen::VectorXd n(series.size());
    for (int t = 0; t < series.size(); ++t) n[t] = series.cytograms[t].total_weight();
    return n;
}

void check_resp(const CytoSeries& series, const Responsibilities& resp) {
    if (resp.size() != series.size() || resp.cluster_mass.rows() != series.size())
        throw std::invalid_argument("responsibilities do not match the series time grid");
    for (int t = 0; t < series.size(); ++t)
        if (resp.gamma[t].rows() != series.cytograms[t].n())
            throw std::invalid_argument(
                fmt::format("responsibilities at time index {} have {} rows, data has {}",
                            t, resp.gamma[t].rows(), series.cytograms[t].n()));
}

} // namespace

Responsibilities e_step(const CytoSeries& series, const ParamsSeries& params,
                        std::vector<FitEvent>* events) {
    check_aligned(series, params);
    const int T = series.size();
    const int K = params.K;

    Responsibilities resp;
    resp.gamma.resize(T);
    resp.cluster_mass = Eigen::MatrixXd::Zero(T, K);

    for (int t = 0; t < T; ++t) {
        const Cytogram& cyt = series.cytograms[t];
        const MixtureState& state = params.states[t];

        std::vector<MvnDensity> dens;
        dens.reserve(K);
        for (int k = 0; k < K; ++k) {
            try {
                dens.emplace_back(state.mu.row(k), state.sigma[k]);
            } catch (const std::invalid_argument& e) {
                throw std::invalid_argument(
                    fmt::format("cluster {} at time index {} (t={}): {}", k, t, cyt.time, e.what()));
            }
        }
        Eigen::VectorXd log_pi(K);
        for (int k = 0; k < K; ++k)
            log_pi[k] = state.pi[k] > 0.0 ? std::log(state.pi[k])
                                          : -std::numeric_limits<double>::infinity();

        Eigen::MatrixXd g(cyt.n(), K);
        Eigen::VectorXd row(K);
        for (int i = 0; i < cyt.n(); ++i) {
            for (int k = 0; k < K; ++k) row[k] = log_pi[k] + dens[k].logpdf(cyt.points.row(i));
            const double lse = log_sum_exp(row);
            if (!std::isfinite(lse)) {
                g.row(i).setConstant(1.0 / K);
                if (events)
                    events->push_back({"underflow_uniform", -1, t, -1,
                                       fmt::format("point {} underflowed in every cluster", i)});
                continue;
            }
            for (int k = 0; k < K; ++k) g(i, k) = std::exp(row[k] - lse);
        }
        for (int k = 0; k < K; ++k) {
            double mass = 0.0;
            for (int i = 0; i < cyt.n(); ++i) mass += cyt.weights[i] * g(i, k);
            resp.cluster_mass(t, k) = mass;
        }
        resp.gamma[t] = std::move(g);
    }
    return resp;
}

Eigen::MatrixXd m_step_pi(const CytoSeries& series, const Responsibilities& resp,
                          const KernelSpec& kernel, const std::vector<double>& query_times) {
    check_resp(series, resp);
    validate(kernel);
    const int T = series.size();
    const int K = static_cast<int>(resp.cluster_mass.cols());
    const Eigen::VectorXd n = total_weights(series);

    Eigen::MatrixXd out(query_times.size(), K);
    for (size_t q = 0; q < query_times.size(); ++q) {
        const double t = query_times[q];
        Eigen::VectorXd numer = Eigen::VectorXd::Zero(K);
        double denom = 0.0;
        for (int s = 0; s < T; ++s) {
            const double w = kernel_weight(kernel, t - series.cytograms[s].time);
            if (w == 0.0) continue;
            numer += w * resp.cluster_mass.row(s).transpose();
            denom += w * n[s];
        }
        if (!(denom > 0.0))
            throw std::runtime_error(
                fmt::format("no data within kernel reach of query time {} "
                            "(bandwidth {}, cutoff {})", t, kernel.h, kernel.cutoff));
        out.row(q) = numer.transpose() / denom;
    }
    return out;
}

MeanUpdate m_step_mu(const CytoSeries& series, const Responsibilities& resp,
                     const KernelSpec& kernel, const std::vector<double>& query_times,
                     const std::vector<Eigen::MatrixXd>* fallback) {
    check_resp(series, resp);
    validate(kernel);
    const int T = series.size();
    const int K = static_cast<int>(resp.cluster_mass.cols());
    const int d = series.dim;
    const Eigen::VectorXd n = total_weights(series);

    // Per-time weighted point sums: wsum[s].row(k) = sum_i C_i gamma_isk Y_is
    std::vector<Eigen::MatrixXd> wsum(T);
    for (int s = 0; s < T; ++s) {
        const Cytogram& cyt = series.cytograms[s];
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(K, d);
        for (int i = 0; i < cyt.n(); ++i) {
            const double c = cyt.weights[i];
            if (c == 0.0) continue;
            for (int k = 0; k < K; ++k) acc.row(k) += c * resp.gamma[s](i, k) * cyt.points.row(i);
        }
        wsum[s] = std::move(acc);
    }

    MeanUpdate out;
    out.mu.resize(query_times.size());
    for (size_t q = 0; q < query_times.size(); ++q) {
        const double t = query_times[q];
        Eigen::MatrixXd numer = Eigen::MatrixXd::Zero(K, d);
        Eigen::VectorXd denom = Eigen::VectorXd::Zero(K);
        double denom_total = 0.0;
        for (int s = 0; s < T; ++s) {
            const double w = kernel_weight(kernel, t - series.cytograms[s].time);
            if (w == 0.0) continue;
            numer += w * wsum[s];
            denom += w * resp.cluster_mass.row(s).transpose();
            denom_total += w * n[s];
        }
        if (!(denom_total > 0.0))
            throw std::runtime_error(
                fmt::format("no data within kernel reach of query time {} "
                            "(bandwidth {}, cutoff {})", t, kernel.h, kernel.cutoff));
        Eigen::MatrixXd mu_q(K, d);
        for (int k = 0; k < K; ++k) {
            if (denom[k] < kVanishedFraction * denom_total) {
                if (!fallback)
                    throw std::runtime_error(
                        fmt::format("cluster {} has vanished mass at query time {} "
                                    "and no fallback value is available", k, t));
                mu_q.row(k) = (*fallback)[q].row(k);
                out.events.push_back({"vanished_cluster", -1, static_cast<int>(q), k,
                                      fmt::format("mean held at previous value, smoothed mass {:.3e}",
                                                  denom[k])});
            } else {
                mu_q.row(k) = numer.row(k) / denom[k];
            }
        }
        out.mu[q] = std::move(mu_q);
    }
    return out;
}

CovUpdate m_step_sigma(const CytoSeries& series, const Responsibilities& resp,
                       const std::vector<Eigen::MatrixXd>& mu_at_data_times,
                       const KernelSpec& kernel, const std::vector<double>& query_times,
                       const std::vector<std::vector<Eigen::MatrixXd>>* fallback) {
    check_resp(series, resp);
    validate(kernel);
    const int T = series.size();
    const int K = static_cast<int>(resp.cluster_mass.cols());
    const int d = series.dim;
    if (static_cast<int>(mu_at_data_times.size()) != T)
        throw std::invalid_argument("mu_at_data_times must cover every data time");
    const Eigen::VectorXd n = total_weights(series);

    // Per-time weighted scatter about the current smoothed means:
    // scatter[s][k] = sum_i C_i gamma_isk (Y_is - mu_sk)(Y_is - mu_sk)^T
    std::vector<std::vector<Eigen::MatrixXd>> scatter(T);
    for (int s = 0; s < T; ++s) {
        const Cytogram& cyt = series.cytograms[s];
        scatter[s].assign(K, Eigen::MatrixXd::Zero(d, d));
        for (int i = 0; i < cyt.n(); ++i) {
            const double c = cyt.weights[i];
            if (c == 0.0) continue;
            for (int k = 0; k < K; ++k) {
                const Eigen::VectorXd r =
                    cyt.points.row(i).transpose() - mu_at_data_times[s].row(k).transpose();
                scatter[s][k].noalias() += c * resp.gamma[s](i, k) * r * r.transpose();
            }
        }
    }

    CovUpdate out;
    out.sigma.resize(query_times.size());
    for (size_t q = 0; q < query_times.size(); ++q) {
        const double t = query_times[q];
        std::vector<Eigen::MatrixXd> numer(K, Eigen::MatrixXd::Zero(d, d));
        Eigen::VectorXd denom = Eigen::VectorXd::Zero(K);
        double denom_total = 0.0;
        for (int s = 0; s < T; ++s) {
            const double w = kernel_weight(kernel, t - series.cytograms[s].time);
            if (w == 0.0) continue;
            for (int k = 0; k < K; ++k) numer[k] += w * scatter[s][k];
            denom += w * resp.cluster_mass.row(s).transpose();
            denom_total += w * n[s];
        }
        if (!(denom_total > 0.0))
            throw std::runtime_error(
                fmt::format("no data within kernel reach of query time {} "
                            "(bandwidth {}, cutoff {})", t, kernel.h, kernel.cutoff));
        out.sigma[q].resize(K);
        for (int k = 0; k < K; ++k) {
            if (denom[k] < kVanishedFraction * denom_total) {
                if (!fallback)
                    throw std::runtime_error(
                        fmt::format("cluster {} has vanished mass at query time {} "
                                    "and no fallback value is available", k, t));
                out.sigma[q][k] = (*fallback)[q][k];
                out.events.push_back({"vanished_cluster", -1, static_cast<int>(q), k,
                                      "covariance held at previous value"});
                continue;
            }
            Eigen::MatrixXd S = numer[k] / denom[k];
            double eps = 0.0;
            if (symmetrize_and_regularize(S, &eps))
                out.events.push_back({"ridge", -1, static_cast<int>(q), k,
                                      fmt::format("added {:.3e} * I to keep covariance positive definite",
                                                  eps)});
            out.sigma[q][k] = std::move(S);
        }
    }
    return out;
}

FitResult fit(const CytoSeries& series, const ParamsSeries& init, const FitConfig& config) {
    validate(series);
    validate(init);
    check_aligned(series, init);
    validate(config.bandwidths);
    if (config.K != init.K)
        throw std::invalid_argument(
            fmt::format("config.K={} but initialization has K={}", config.K, init.K));
    if (config.max_iters < 1) throw std::invalid_argument("max_iters must be at least 1");
    if (!(config.tol > 0.0)) throw std::invalid_argument("tol must be positive");
    long total_points = 0;
    for (const auto& cyt : series.cytograms)
        for (Eigen::Index i = 0; i < cyt.weights.size(); ++i)
            if (cyt.weights[i] > 0.0) ++total_points;
    if (config.K > total_points)
        throw std::invalid_argument(
            fmt::format("K={} exceeds the {} effective data points", config.K, total_points));

    const std::vector<double> data_times = series.times();
    const KernelSpec k_pi = config.pi_kernel();
    const KernelSpec k_mu = config.mu_kernel();
    const KernelSpec k_sigma = config.sigma_kernel();

    FitResult result;
    ParamsSeries params = init;

    auto stamp = [&result](std::vector<FitEvent> evts, int iteration) {
        for (auto& e : evts) {
            e.iteration = iteration;
            result.events.push_back(std::move(e));
        }
    };

    double prev_ll = std::numeric_limits<double>::quiet_NaN();
    for (int iter = 0; iter < config.max_iters; ++iter) {
        std::vector<FitEvent> e_events;
        const Responsibilities resp = e_step(series, params, &e_events);
        stamp(std::move(e_events), iter);

        const Eigen::MatrixXd pi_new = m_step_pi(series, resp, k_pi, data_times);

        std::vector<Eigen::MatrixXd> prev_mu(series.size());
        std::vector<std::vector<Eigen::MatrixXd>> prev_sigma(series.size());
        for (int t = 0; t < series.size(); ++t) {
            prev_mu[t] = params.states[t].mu;
            prev_sigma[t] = params.states[t].sigma;
        }
        MeanUpdate mu_new = m_step_mu(series, resp, k_mu, data_times, &prev_mu);
        stamp(std::move(mu_new.events), iter);
        CovUpdate sigma_new =
            m_step_sigma(series, resp, mu_new.mu, k_sigma, data_times, &prev_sigma);
        stamp(std::move(sigma_new.events), iter);

        for (int t = 0; t < series.size(); ++t) {
            params.states[t].pi = pi_new.row(t).transpose();
            params.states[t].mu = std::move(mu_new.mu[t]);
            params.states[t].sigma = std::move(sigma_new.sigma[t]);
        }

        const double ll = weighted_loglik(series, params);
        result.loglik_trace.push_back(ll);
        if (iter > 0 && std::abs(ll - prev_ll) < config.tol * std::abs(ll)) break;
        prev_ll = ll;
    }

    std::vector<FitEvent> final_events;
    result.resp = e_step(series, params, &final_events);
    stamp(std::move(final_events), static_cast<int>(result.loglik_trace.size()));
    result.params = std::move(params);
    return result;
}

ParamsSeries predict_at_times(const CytoSeries& series, const Responsibilities& resp,
                              const Bandwidths& bandwidths, const KernelSpec& kernel_shape,
                              const std::vector<double>& new_times) {
    validate(bandwidths);
    const KernelSpec k_pi{kernel_shape.family, bandwidths.h_pi, kernel_shape.cutoff};
    const KernelSpec k_mu{kernel_shape.family, bandwidths.h_mu, kernel_shape.cutoff};
    const KernelSpec k_sigma{kernel_shape.family, bandwidths.h_sigma, kernel_shape.cutoff};

    const Eigen::MatrixXd pi = m_step_pi(series, resp, k_pi, new_times);
    const MeanUpdate mu_data = m_step_mu(series, resp, k_mu, series.times());
    const MeanUpdate mu = m_step_mu(series, resp, k_mu, new_times);
    const CovUpdate sigma = m_step_sigma(series, resp, mu_data.mu, k_sigma, new_times);

    ParamsSeries out;
    out.times = new_times;
    out.K = static_cast<int>(resp.cluster_mass.cols());
    out.states.resize(new_times.size());
    for (size_t q = 0; q < new_times.size(); ++q) {
        out.states[q].pi = pi.row(q).transpose();
        out.states[q].mu = mu.mu[q];
        out.states[q].sigma = sigma.sigma[q];
    }
    return out;
}

} // namespace kernelmix
