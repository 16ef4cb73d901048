#include "kernelmix/theory.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "kernelmix/kernel.hpp"
#include "kernelmix/rng.hpp"

namespace kernelmix {

std::vector<double> TheoryScenario::grid() const {
    std::vector<double> g(T);
    for (int i = 0; i < T; ++i) g[i] = -1.0 + 2.0 * static_cast<double>(i) / (T - 1);
    return g;
}

void validate(const TheoryScenario& scenario) {
    if (scenario.T < 3 || scenario.T % 2 == 0)
        throw std::invalid_argument("grid size must be odd and at least 3");
    if (scenario.n < 1) throw std::invalid_argument("need at least one point per cluster");
    if (scenario.reps < 1) throw std::invalid_argument("need at least one repetition");
    if (scenario.sigma < 0.0) throw std::invalid_argument("sigma must be nonnegative");
    validate(scenario.kernel);
}

Eigen::VectorXd oracle_estimate(const std::vector<double>& times,
                                const std::vector<Eigen::VectorXd>& values,
                                const std::vector<std::vector<int>>& labels, int K,
                                const KernelSpec& kernel, double t) {
    if (times.size() != values.size() || times.size() != labels.size())
        throw std::invalid_argument("times, values and labels must have equal length");
    Eigen::VectorXd numer = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd denom = Eigen::VectorXd::Zero(K);
    for (size_t s = 0; s < times.size(); ++s) {
        const double w = kernel_weight(kernel, t - times[s]);
        if (w == 0.0) continue;
        if (static_cast<size_t>(values[s].size()) != labels[s].size())
            throw std::invalid_argument("values/labels mismatch within a time point");
        for (Eigen::Index i = 0; i < values[s].size(); ++i) {
            const int k = labels[s][i];
            if (k < 0 || k >= K) throw std::invalid_argument("label out of range");
            numer[k] += w * values[s][i];
            denom[k] += w;
        }
    }
    for (int k = 0; k < K; ++k)
        if (!(denom[k] > 0.0))
            throw std::runtime_error(
                fmt::format("cluster {} has no observations within kernel reach of t={}", k, t));
    return numer.cwiseQuotient(denom);
}

Eigen::VectorXd lambda_weights(const std::vector<double>& grid, const KernelSpec& kernel,
                               double t) {
    Eigen::VectorXd w(grid.size());
    for (size_t s = 0; s < grid.size(); ++s) w[s] = kernel_weight(kernel, t - grid[s]);
    const double total = w.sum();
    if (!(total > 0.0))
        throw std::runtime_error(fmt::format("no grid point within kernel reach of t={}", t));
    return w / total;
}

double oracle_variance_formula(const TheoryScenario& scenario, double t) {
    const std::vector<double> grid = scenario.grid();
    double sum_w = 0.0, sum_w2 = 0.0;
    for (double s : grid) {
        const double w = kernel_weight(scenario.kernel, t - s);
        sum_w += w;
        sum_w2 += w * w;
    }
    if (!(sum_w > 0.0))
        throw std::runtime_error(fmt::format("no grid point within kernel reach of t={}", t));
    return scenario.sigma * scenario.sigma / scenario.n * (sum_w2 / (sum_w * sum_w));
}

namespace {

// Monte-Carlo accumulators for every per-t quantity the checks need.
// Labeling index: 0 = linear, 1 = absolute value.
struct Accums {
    int reps = 0;
    // [labeling][cluster]
    std::array<std::array<Eigen::ArrayXd, 2>, 2> mu_sum, mu_sumsq;
    std::array<Eigen::ArrayXd, 2> mse_sum, mse_sumsq;
    std::array<Eigen::ArrayXd, 2> epe_sum, epe_sumsq;
    Eigen::ArrayXd mse_diff_sum, mse_diff_sumsq; // av - lin
    Eigen::ArrayXd epe_diff_sum, epe_diff_sumsq;
};

Accums run_mc(const TheoryScenario& sc) {
    validate(sc);
    const std::vector<double> grid = sc.grid();
    const int T = sc.T;
    const int n = sc.n;

    Eigen::MatrixXd W(T, T);
    for (int q = 0; q < T; ++q)
        for (int s = 0; s < T; ++s) W(q, s) = kernel_weight(sc.kernel, grid[q] - grid[s]);
    const Eigen::VectorXd wsum = W.rowwise().sum();
    for (int q = 0; q < T; ++q)
        if (!(wsum[q] > 0.0))
            throw std::runtime_error("kernel reaches no grid point; enlarge bandwidth or cutoff");

    Accums acc;
    acc.reps = sc.reps;
    for (int l = 0; l < 2; ++l) {
        for (int k = 0; k < 2; ++k) {
            acc.mu_sum[l][k] = Eigen::ArrayXd::Zero(T);
            acc.mu_sumsq[l][k] = Eigen::ArrayXd::Zero(T);
        }
        acc.mse_sum[l] = Eigen::ArrayXd::Zero(T);
        acc.mse_sumsq[l] = Eigen::ArrayXd::Zero(T);
        acc.epe_sum[l] = Eigen::ArrayXd::Zero(T);
        acc.epe_sumsq[l] = Eigen::ArrayXd::Zero(T);
    }
    acc.mse_diff_sum = Eigen::ArrayXd::Zero(T);
    acc.mse_diff_sumsq = Eigen::ArrayXd::Zero(T);
    acc.epe_diff_sum = Eigen::ArrayXd::Zero(T);
    acc.epe_diff_sumsq = Eigen::ArrayXd::Zero(T);

    Eigen::VectorXd s_lin0(T), s_lin1(T), s_av0(T), s_av1(T);
    for (int rep = 0; rep < sc.reps; ++rep) {
        Rng rng(derive_seed(sc.seed, static_cast<std::uint64_t>(rep)));

        // Per-time cluster sums; the same draws feed both labelings.
        for (int s = 0; s < T; ++s) {
            double sum_up = 0.0, sum_down = 0.0;
            for (int i = 0; i < n; ++i) sum_up += grid[s] + sc.sigma * rng.normal();
            for (int i = 0; i < n; ++i) sum_down += -grid[s] + sc.sigma * rng.normal();
            s_lin0[s] = sum_up;
            s_lin1[s] = sum_down;
            // Absolute-value cluster 0 follows |s|: the "up" points when
            // s >= 0, the "down" points when s < 0.
            s_av0[s] = grid[s] >= 0.0 ? sum_up : sum_down;
            s_av1[s] = grid[s] >= 0.0 ? sum_down : sum_up;
        }

        for (int q = 0; q < T; ++q) {
            const double t = grid[q];
            const double denom = static_cast<double>(n) * wsum[q];
            const double mu_lin0 = W.row(q).dot(s_lin0) / denom;
            const double mu_lin1 = W.row(q).dot(s_lin1) / denom;
            const double mu_av0 = W.row(q).dot(s_av0) / denom;
            const double mu_av1 = W.row(q).dot(s_av1) / denom;

            const double mu_hat[2][2] = {{mu_lin0, mu_lin1}, {mu_av0, mu_av1}};
            const double mu_true[2][2] = {{t, -t}, {std::abs(t), -std::abs(t)}};

            double mse[2];
            for (int l = 0; l < 2; ++l) {
                mse[l] = 0.0;
                for (int k = 0; k < 2; ++k) {
                    const double m = mu_hat[l][k];
                    acc.mu_sum[l][k][q] += m;
                    acc.mu_sumsq[l][k][q] += m * m;
                    const double e = m - mu_true[l][k];
                    mse[l] += e * e;
                }
                acc.mse_sum[l][q] += mse[l];
                acc.mse_sumsq[l][q] += mse[l] * mse[l];
            }
            const double mse_diff = mse[1] - mse[0];
            acc.mse_diff_sum[q] += mse_diff;
            acc.mse_diff_sumsq[q] += mse_diff * mse_diff;

            // Fresh test point, equally likely from either cluster; its
            // marginal distribution is identical under both labelings.
            const double z = rng.uniform() < 0.5 ? t : -t;
            const double y_tilde = z + sc.sigma * rng.normal();
            double epe[2];
            for (int l = 0; l < 2; ++l) {
                epe[l] = 0.0;
                for (int k = 0; k < 2; ++k) {
                    const double e = y_tilde - mu_hat[l][k];
                    epe[l] += e * e;
                }
                acc.epe_sum[l][q] += epe[l];
                acc.epe_sumsq[l][q] += epe[l] * epe[l];
            }
            const double epe_diff = epe[1] - epe[0];
            acc.epe_diff_sum[q] += epe_diff;
            acc.epe_diff_sumsq[q] += epe_diff * epe_diff;
        }
    }
    return acc;
}

double se_of_mean(double sum, double sumsq, int reps) {
    if (reps < 2) return 0.0;
    const double mean = sum / reps;
    const double var = std::max(0.0, (sumsq - reps * mean * mean) / (reps - 1));
    return std::sqrt(var / reps);
}

double sample_var(double sum, double sumsq, int reps) {
    if (reps < 2) return 0.0;
    const double mean = sum / reps;
    return std::max(0.0, (sumsq - reps * mean * mean) / (reps - 1));
}

} // namespace

std::vector<BiasRow> check_bias(const TheoryScenario& scenario) {
    const Accums acc = run_mc(scenario);
    const std::vector<double> grid = scenario.grid();
    const double window = scenario.kernel.cutoff * scenario.kernel.h;

    std::vector<BiasRow> rows;
    for (int q = 0; q < scenario.T; ++q) {
        const double t = grid[q];
        const Eigen::VectorXd lambda = lambda_weights(grid, scenario.kernel, t);
        double lam_s = 0.0, lam_abs = 0.0;
        for (int s = 0; s < scenario.T; ++s) {
            lam_s += lambda[s] * grid[s];
            lam_abs += lambda[s] * std::abs(grid[s]);
        }
        const bool interior = t - window >= grid.front() - 1e-12 && t + window <= grid.back() + 1e-12;
        const double exact[2][2] = {{lam_s - t, -(lam_s - t)},
                                    {lam_abs - std::abs(t), -(lam_abs - std::abs(t))}};
        const double mu_true[2][2] = {{t, -t}, {std::abs(t), -std::abs(t)}};
        for (int l = 0; l < 2; ++l)
            for (int k = 0; k < 2; ++k) {
                BiasRow row;
                row.t = t;
                row.labeling = l;
                row.cluster = k;
                row.mc_bias = acc.mu_sum[l][k][q] / scenario.reps - mu_true[l][k];
                row.mc_se = se_of_mean(acc.mu_sum[l][k][q], acc.mu_sumsq[l][k][q], scenario.reps);
                row.exact_bias = exact[l][k];
                row.interior = interior;
                rows.push_back(row);
            }
    }
    return rows;
}

Theorem1Report check_theorem1(const TheoryScenario& scenario) {
    const Accums acc = run_mc(scenario);
    const std::vector<double> grid = scenario.grid();
    const double window = scenario.kernel.cutoff * scenario.kernel.h;

    Theorem1Report report;
    report.all_mse_ok = true;
    report.all_epe_ok = true;
    for (int q = 0; q < scenario.T; ++q) {
        Theorem1Row row;
        row.t = grid[q];
        row.interior =
            row.t - window >= grid.front() - 1e-12 && row.t + window <= grid.back() + 1e-12;
        {
            const Eigen::VectorXd lambda = lambda_weights(grid, scenario.kernel, row.t);
            double lam_s = 0.0, lam_abs = 0.0;
            for (int s = 0; s < scenario.T; ++s) {
                lam_s += lambda[s] * grid[s];
                lam_abs += lambda[s] * std::abs(grid[s]);
            }
            const double b_lin = lam_s - row.t;
            const double b_av = lam_abs - std::abs(row.t);
            row.exact_mse_diff = 2.0 * (b_av * b_av - b_lin * b_lin);
        }
        row.mse_lin = acc.mse_sum[0][q] / scenario.reps;
        row.mse_av = acc.mse_sum[1][q] / scenario.reps;
        row.mse_lin_se = se_of_mean(acc.mse_sum[0][q], acc.mse_sumsq[0][q], scenario.reps);
        row.mse_av_se = se_of_mean(acc.mse_sum[1][q], acc.mse_sumsq[1][q], scenario.reps);
        row.mse_diff_se = se_of_mean(acc.mse_diff_sum[q], acc.mse_diff_sumsq[q], scenario.reps);
        row.epe_lin = acc.epe_sum[0][q] / scenario.reps;
        row.epe_av = acc.epe_sum[1][q] / scenario.reps;
        row.epe_lin_se = se_of_mean(acc.epe_sum[0][q], acc.epe_sumsq[0][q], scenario.reps);
        row.epe_av_se = se_of_mean(acc.epe_sum[1][q], acc.epe_sumsq[1][q], scenario.reps);
        row.epe_diff_se = se_of_mean(acc.epe_diff_sum[q], acc.epe_diff_sumsq[q], scenario.reps);
        const double observed_diff = row.mse_av - row.mse_lin;
        row.mse_ok = row.interior
                         ? row.mse_lin <= row.mse_av + 3.0 * row.mse_diff_se
                         : std::abs(observed_diff - row.exact_mse_diff) <= 4.0 * row.mse_diff_se;
        row.epe_ok = row.epe_lin <= row.epe_av + 3.0 * row.epe_diff_se;
        report.all_mse_ok = report.all_mse_ok && row.mse_ok;
        report.all_epe_ok = report.all_epe_ok && row.epe_ok;
        report.rows.push_back(row);
    }

    const Eigen::VectorXd lambda0 = lambda_weights(grid, scenario.kernel, 0.0);
    double lam_abs = 0.0;
    for (int s = 0; s < scenario.T; ++s) lam_abs += lambda0[s] * std::abs(grid[s]);
    report.exact_mse_av_at_zero_noiseless = 2.0 * lam_abs * lam_abs;
    return report;
}

VarianceReport check_variance_formula(const TheoryScenario& scenario) {
    const Accums acc = run_mc(scenario);
    const std::vector<double> grid = scenario.grid();

    VarianceReport report;
    report.all_ok = true;
    for (int q = 0; q < scenario.T; ++q) {
        const double formula = oracle_variance_formula(scenario, grid[q]);
        for (int l = 0; l < 2; ++l)
            for (int k = 0; k < 2; ++k) {
                VarianceRow row;
                row.t = grid[q];
                row.labeling = l;
                row.cluster = k;
                row.mc_var = sample_var(acc.mu_sum[l][k][q], acc.mu_sumsq[l][k][q], scenario.reps);
                row.formula_var = formula;
                // chi-square spread of a variance estimate from Gaussian draws
                row.se = row.mc_var * std::sqrt(2.0 / std::max(1, scenario.reps - 1));
                row.ok = std::abs(row.mc_var - row.formula_var) <= 4.0 * row.se;
                report.all_ok = report.all_ok && row.ok;
                report.rows.push_back(row);
            }
    }
    return report;
}

TheoryReport run_theory_checks(const TheoryScenario& scenario) {
    TheoryReport report;
    report.scenario = scenario;
    report.bias = check_bias(scenario);
    report.theorem1 = check_theorem1(scenario);
    report.variance = check_variance_formula(scenario);
    return report;
}

std::string theory_report_csv(const TheoryReport& report) {
    std::string out = "section,t,labeling,cluster,value,se,reference,ok\n";
    auto labeling_name = [](int l) { return l == 0 ? "linear" : "absolute"; };
    for (const auto& r : report.bias)
        out += fmt::format("bias,{},{},{},{},{},{},{}\n", r.t, labeling_name(r.labeling),
                           r.cluster, r.mc_bias, r.mc_se, r.exact_bias,
                           r.interior ? "interior" : "boundary");
    for (const auto& r : report.theorem1.rows) {
        out += fmt::format("mse_lin,{},linear,,{},{},,{}\n", r.t, r.mse_lin, r.mse_diff_se,
                           r.mse_ok);
        out += fmt::format("mse_av,{},absolute,,{},{},,{}\n", r.t, r.mse_av, r.mse_diff_se,
                           r.mse_ok);
        out += fmt::format("epe_lin,{},linear,,{},{},,{}\n", r.t, r.epe_lin, r.epe_diff_se,
                           r.epe_ok);
        out += fmt::format("epe_av,{},absolute,,{},{},,{}\n", r.t, r.epe_av, r.epe_diff_se,
                           r.epe_ok);
    }
    for (const auto& r : report.variance.rows)
        out += fmt::format("variance,{},{},{},{},{},{},{}\n", r.t, labeling_name(r.labeling),
                           r.cluster, r.mc_var, r.se, r.formula_var, r.ok);
    return out;
}

} // namespace kernelmix
