#include "kernelmix/loglik.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "kernelmix/mvn.hpp"

namespace kernelmix {

double log_sum_exp(const Eigen::VectorXd& x) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < x.size(); ++i) m = std::max(m, x[i]);
    if (!std::isfinite(m)) return m; // all -inf (or contains +inf)
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) acc += std::exp(x[i] - m);
    return m + std::log(acc);
}

double loglik_at_time(const Cytogram& cyt, const MixtureState& state) {
    const int K = state.k();
    std::vector<MvnDensity> dens;
    dens.reserve(K);
    for (int k = 0; k < K; ++k) dens.emplace_back(state.mu.row(k), state.sigma[k]);

    Eigen::VectorXd log_pi(K);
    for (int k = 0; k < K; ++k)
        log_pi[k] = state.pi[k] > 0.0 ? std::log(state.pi[k])
                                      : -std::numeric_limits<double>::infinity();

    double total = 0.0;
    Eigen::VectorXd terms(K);
    for (int i = 0; i < cyt.n(); ++i) {
        const double c = cyt.weights[i];
        if (c == 0.0) continue;
        for (int k = 0; k < K; ++k) terms[k] = log_pi[k] + dens[k].logpdf(cyt.points.row(i));
        total += c * log_sum_exp(terms);
    }
    return total;
}

double weighted_loglik(const CytoSeries& series, const ParamsSeries& params) {
    check_aligned(series, params);
    double total = 0.0;
    for (int t = 0; t < series.size(); ++t)
        total += loglik_at_time(series.cytograms[t], params.states[t]);
    return total;
}

} // namespace kernelmix
