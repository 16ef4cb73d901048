#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "kernelmix/init.hpp"
#include "kernelmix/kernel_em.hpp"
#include "kernelmix/loglik.hpp"
#include "kernelmix/simulation.hpp"

using namespace kernelmix;

namespace {

const double kTol = 1e-10;

bool near_abs(double a, double b, double tol = kTol) { return std::abs(a - b) <= tol; }

// Test-side oracle: one classical weighted EM iteration on a single cytogram,
// built on the naive density path.
MixtureState classical_em_iteration(const Cytogram& cyt, const MixtureState& state) {
    const int K = state.k();
    const int d = cyt.dim();
    const int n = cyt.n();

    Eigen::MatrixXd gamma(n, K);
    for (int i = 0; i < n; ++i) {
        double denom = 0.0;
        for (int k = 0; k < K; ++k) {
            gamma(i, k) =
                state.pi[k] * testutil::naive_mvn_pdf(cyt.points.row(i), state.mu.row(k),
                                                      state.sigma[k]);
            denom += gamma(i, k);
        }
        gamma.row(i) /= denom;
    }

    MixtureState out;
    out.pi.resize(K);
    out.mu.resize(K, d);
    out.sigma.resize(K);
    double total = cyt.weights.sum();
    for (int k = 0; k < K; ++k) {
        double mass = 0.0;
        Eigen::VectorXd wsum = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < n; ++i) {
            mass += cyt.weights[i] * gamma(i, k);
            wsum += cyt.weights[i] * gamma(i, k) * cyt.points.row(i).transpose();
        }
        out.pi[k] = mass / total;
        out.mu.row(k) = wsum.transpose() / mass;
        Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd r = cyt.points.row(i).transpose() - out.mu.row(k).transpose();
            S += cyt.weights[i] * gamma(i, k) * r * r.transpose();
        }
        out.sigma[k] = S / mass;
    }
    return out;
}

Cytogram pool_series(const CytoSeries& series) {
    Eigen::Index rows = 0;
    for (const auto& c : series.cytograms) rows += c.points.rows();
    Cytogram pooled;
    pooled.time = 0.0;
    pooled.points.resize(rows, series.dim);
    pooled.weights.resize(rows);
    Eigen::Index at = 0;
    for (const auto& c : series.cytograms) {
        pooled.points.middleRows(at, c.points.rows()) = c.points;
        pooled.weights.segment(at, c.weights.size()) = c.weights;
        at += c.points.rows();
    }
    return pooled;
}

ParamsSeries constant_params(const CytoSeries& series, const MixtureState& state) {
    ParamsSeries params;
    params.K = state.k();
    params.times = series.times();
    params.states.assign(series.size(), state);
    return params;
}

void check_states_close(const MixtureState& a, const MixtureState& b, double tol = kTol) {
    REQUIRE(a.k() == b.k());
    for (int k = 0; k < a.k(); ++k) {
        CHECK(near_abs(a.pi[k], b.pi[k], tol));
        CHECK((a.mu.row(k) - b.mu.row(k)).cwiseAbs().maxCoeff() <= tol);
        CHECK((a.sigma[k] - b.sigma[k]).cwiseAbs().maxCoeff() <= tol);
    }
}

} // namespace

TEST_CASE("e_step basic cases") {
    Rng rng(5);
    CytoSeries series = testutil::random_series(3, 6, 2, rng);

    SUBCASE("K=1 gives all-ones responsibilities") {
        ParamsSeries params = testutil::random_params(series, 1, rng);
        const Responsibilities resp = e_step(series, params);
        for (int t = 0; t < series.size(); ++t)
            CHECK((resp.gamma[t].array() - 1.0).abs().maxCoeff() <= 1e-15);
        for (int t = 0; t < series.size(); ++t)
            CHECK(resp.cluster_mass(t, 0) ==
                  doctest::Approx(series.cytograms[t].total_weight()).epsilon(1e-14));
    }

    SUBCASE("equidistant point between symmetric clusters splits evenly") {
        CytoSeries one;
        one.dim = 1;
        Cytogram cyt;
        cyt.time = 0.0;
        cyt.points = Eigen::MatrixXd::Zero(1, 1);
        cyt.weights = Eigen::VectorXd::Ones(1);
        one.cytograms = {cyt};

        MixtureState s;
        s.pi = Eigen::Vector2d(0.5, 0.5);
        s.mu = Eigen::MatrixXd(2, 1);
        s.mu << -1.0, 1.0;
        s.sigma = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
        ParamsSeries params = constant_params(one, s);

        const Responsibilities resp = e_step(one, params);
        CHECK(resp.gamma[0](0, 0) == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(resp.gamma[0](0, 1) == doctest::Approx(0.5).epsilon(1e-14));
    }

    SUBCASE("1-d responsibilities match the hand-computed density ratio") {
        CytoSeries one;
        one.dim = 1;
        Cytogram cyt;
        cyt.time = 0.0;
        cyt.points = Eigen::MatrixXd::Constant(1, 1, 0.5);
        cyt.weights = Eigen::VectorXd::Ones(1);
        one.cytograms = {cyt};

        MixtureState s;
        s.pi = Eigen::Vector2d(0.5, 0.5);
        s.mu = Eigen::MatrixXd(2, 1);
        s.mu << -1.0, 1.0;
        s.sigma = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
        ParamsSeries params = constant_params(one, s);

        // density ratio phi(0.5;1,1)/phi(0.5;-1,1) = exp(2*0.5) = e, so
        // gamma_2 = 1 / (1 + exp(-1)).
        const Responsibilities resp = e_step(one, params);
        CHECK(resp.gamma[0](0, 1) ==
              doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-13));
    }
}

TEST_CASE("e_step rows sum to one and masses add to the totals") {
    Rng rng(17);
    for (int rep = 0; rep < 100; ++rep) {
        const int K = 1 + static_cast<int>(rng.below(3));
        const int d = 1 + static_cast<int>(rng.below(2));
        CytoSeries series = testutil::random_series(2 + static_cast<int>(rng.below(3)),
                                                    2 + static_cast<int>(rng.below(5)), d, rng);
        ParamsSeries params = testutil::random_params(series, K, rng);
        const Responsibilities resp = e_step(series, params);
        for (int t = 0; t < series.size(); ++t) {
            for (Eigen::Index i = 0; i < resp.gamma[t].rows(); ++i) {
                CHECK(near_abs(resp.gamma[t].row(i).sum(), 1.0));
                CHECK(resp.gamma[t].minCoeff() >= 0.0);
                CHECK(resp.gamma[t].maxCoeff() <= 1.0);
            }
            const double n_t = series.cytograms[t].total_weight();
            CHECK(std::abs(resp.cluster_mass.row(t).sum() - n_t) <= 1e-8 * n_t);
        }
    }
}

TEST_CASE("e_step underflow falls back to uniform and records an event") {
    CytoSeries one;
    one.dim = 1;
    Cytogram cyt;
    cyt.time = 0.0;
    cyt.points = Eigen::MatrixXd::Constant(1, 1, 1e160); // quadratic form overflows
    cyt.weights = Eigen::VectorXd::Ones(1);
    one.cytograms = {cyt};

    MixtureState s;
    s.pi = Eigen::Vector2d(0.5, 0.5);
    s.mu = Eigen::MatrixXd::Zero(2, 1);
    s.sigma = {1e-6 * Eigen::MatrixXd::Identity(1, 1), 1e-6 * Eigen::MatrixXd::Identity(1, 1)};
    ParamsSeries params = constant_params(one, s);

    std::vector<FitEvent> events;
    const Responsibilities resp = e_step(one, params, &events);
    CHECK(resp.gamma[0](0, 0) == 0.5);
    CHECK(resp.gamma[0](0, 1) == 0.5);
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == "underflow_uniform");
}

TEST_CASE("m_step_pi degenerate kernels and hand case") {
    Rng rng(23);
    CytoSeries series = testutil::random_series(4, 5, 1, rng);
    ParamsSeries params = testutil::random_params(series, 2, rng);
    const Responsibilities resp = e_step(series, params);
    const std::vector<double> times = series.times();

    SUBCASE("uniform weights pool the proportions") {
        KernelSpec wide{KernelFamily::boxcar, 1e9, 4.0};
        const Eigen::MatrixXd pi = m_step_pi(series, resp, wide, times);
        Eigen::VectorXd pooled = resp.cluster_mass.colwise().sum().transpose();
        pooled /= pooled.sum();
        for (int t = 0; t < series.size(); ++t)
            for (int k = 0; k < 2; ++k) CHECK(near_abs(pi(t, k), pooled[k]));
    }

    SUBCASE("sub-spacing boxcar reduces to the per-time update") {
        KernelSpec delta{KernelFamily::boxcar, 0.5, 4.0};
        const Eigen::MatrixXd pi = m_step_pi(series, resp, delta, times);
        for (int t = 0; t < series.size(); ++t) {
            const double n_t = series.cytograms[t].total_weight();
            for (int k = 0; k < 2; ++k) CHECK(near_abs(pi(t, k), resp.cluster_mass(t, k) / n_t));
        }
    }

    SUBCASE("two-time hand computation") {
        // masses [[3,1],[1,3]], totals (4,4), gaussian h=1, query at t=0
        CytoSeries two;
        two.dim = 1;
        for (int t = 0; t < 2; ++t) {
            Cytogram cyt;
            cyt.time = static_cast<double>(t);
            cyt.points = Eigen::MatrixXd::Zero(2, 1);
            cyt.points << -1.0, 1.0;
            cyt.weights = Eigen::VectorXd::Zero(2);
            two.cytograms.push_back(cyt);
        }
        Responsibilities hand;
        hand.gamma = {Eigen::MatrixXd(2, 2), Eigen::MatrixXd(2, 2)};
        hand.gamma[0] << 1.0, 0.0, 0.0, 1.0;
        hand.gamma[1] << 1.0, 0.0, 0.0, 1.0;
        two.cytograms[0].weights << 3.0, 1.0;
        two.cytograms[1].weights << 1.0, 3.0;
        hand.cluster_mass = Eigen::MatrixXd(2, 2);
        hand.cluster_mass << 3.0, 1.0, 1.0, 3.0;

        KernelSpec g1{KernelFamily::gaussian, 1.0, 8.0};
        const Eigen::MatrixXd pi = m_step_pi(two, hand, g1, {0.0});
        const double w = std::exp(-0.5);
        CHECK(pi(0, 0) == doctest::Approx((3.0 + w * 1.0) / (4.0 + 4.0 * w)).epsilon(1e-14));
        CHECK(pi(0, 1) == doctest::Approx((1.0 + w * 3.0) / (4.0 + 4.0 * w)).epsilon(1e-14));
    }

    SUBCASE("rows sum to one") {
        KernelSpec g{KernelFamily::gaussian, 1.7, 4.0};
        const Eigen::MatrixXd pi = m_step_pi(series, resp, g, times);
        for (int t = 0; t < series.size(); ++t) {
            CHECK(near_abs(pi.row(t).sum(), 1.0));
            CHECK(pi.row(t).minCoeff() >= 0.0);
        }
    }

    SUBCASE("query beyond the cutoff raises the reachability error") {
        KernelSpec g{KernelFamily::gaussian, 1.0, 4.0};
        CHECK_THROWS_WITH_AS(m_step_pi(series, resp, g, {1e4}),
                             doctest::Contains("no data within kernel reach"),
                             std::runtime_error);
    }
}

TEST_CASE("m_step_mu oracles") {
    Rng rng(31);
    CytoSeries series = testutil::random_series(3, 4, 2, rng);
    ParamsSeries params = testutil::random_params(series, 2, rng);
    const Responsibilities resp = e_step(series, params);
    const std::vector<double> times = series.times();

    SUBCASE("delta kernel gives the per-time weighted cluster mean") {
        KernelSpec delta{KernelFamily::boxcar, 0.4, 4.0};
        const MeanUpdate upd = m_step_mu(series, resp, delta, times);
        for (int t = 0; t < series.size(); ++t) {
            const Cytogram& cyt = series.cytograms[t];
            for (int k = 0; k < 2; ++k) {
                Eigen::VectorXd numer = Eigen::VectorXd::Zero(2);
                double denom = 0.0;
                for (int i = 0; i < cyt.n(); ++i) {
                    numer += cyt.weights[i] * resp.gamma[t](i, k) * cyt.points.row(i).transpose();
                    denom += cyt.weights[i] * resp.gamma[t](i, k);
                }
                CHECK((upd.mu[t].row(k).transpose() - numer / denom).cwiseAbs().maxCoeff() <=
                      kTol);
            }
        }
    }

    SUBCASE("K=1 with uniform weights gives the global weighted mean") {
        ParamsSeries p1 = testutil::random_params(series, 1, rng);
        const Responsibilities r1 = e_step(series, p1);
        KernelSpec wide{KernelFamily::boxcar, 1e9, 4.0};
        const MeanUpdate upd = m_step_mu(series, r1, wide, times);
        Eigen::VectorXd numer = Eigen::VectorXd::Zero(2);
        double denom = 0.0;
        for (const auto& cyt : series.cytograms)
            for (int i = 0; i < cyt.n(); ++i) {
                numer += cyt.weights[i] * cyt.points.row(i).transpose();
                denom += cyt.weights[i];
            }
        for (int t = 0; t < series.size(); ++t)
            CHECK((upd.mu[t].row(0).transpose() - numer / denom).cwiseAbs().maxCoeff() <= kTol);
    }

    SUBCASE("matches the brute-force double sum") {
        KernelSpec g{KernelFamily::gaussian, 1.3, 4.0};
        const MeanUpdate upd = m_step_mu(series, resp, g, times);
        for (int t = 0; t < series.size(); ++t)
            for (int k = 0; k < 2; ++k) {
                const Eigen::VectorXd naive =
                    testutil::naive_m_step_mu(series, resp.gamma, g, times[t], k);
                CHECK((upd.mu[t].row(k).transpose() - naive).cwiseAbs().maxCoeff() <= 1e-12);
            }
    }

    SUBCASE("vanished cluster holds the fallback and records an event") {
        Responsibilities dead = resp;
        for (int t = 0; t < series.size(); ++t) {
            dead.gamma[t].col(1).setZero();
            dead.gamma[t].col(0).setOnes();
            dead.cluster_mass(t, 1) = 0.0;
            dead.cluster_mass(t, 0) = series.cytograms[t].total_weight();
        }
        KernelSpec g{KernelFamily::gaussian, 1.0, 4.0};
        std::vector<Eigen::MatrixXd> fallback(series.size(),
                                              Eigen::MatrixXd::Constant(2, 2, 7.25));
        const MeanUpdate upd = m_step_mu(series, dead, g, times, &fallback);
        CHECK(!upd.events.empty());
        CHECK(upd.events[0].kind == "vanished_cluster");
        for (int t = 0; t < series.size(); ++t)
            CHECK((upd.mu[t].row(1).array() == 7.25).all());
        // without a fallback the same situation is an error
        CHECK_THROWS(m_step_mu(series, dead, g, times));
    }
}

TEST_CASE("m_step_sigma oracles") {
    Rng rng(47);
    CytoSeries series = testutil::random_series(3, 5, 2, rng);
    ParamsSeries params = testutil::random_params(series, 2, rng);
    const Responsibilities resp = e_step(series, params);
    const std::vector<double> times = series.times();
    KernelSpec g{KernelFamily::gaussian, 1.1, 4.0};
    const MeanUpdate mu_data = m_step_mu(series, resp, g, times);

    SUBCASE("matches the brute-force double sum") {
        const CovUpdate upd = m_step_sigma(series, resp, mu_data.mu, g, times);
        for (int t = 0; t < series.size(); ++t)
            for (int k = 0; k < 2; ++k) {
                const Eigen::MatrixXd naive =
                    testutil::naive_m_step_sigma(series, resp.gamma, mu_data.mu, g, times[t], k);
                CHECK((upd.sigma[t][k] - naive).cwiseAbs().maxCoeff() <= 1e-12);
            }
    }

    SUBCASE("delta kernel with K=1 and unit weights is the classical MLE covariance") {
        CytoSeries unit = testutil::random_series(3, 6, 2, rng, /*unit_weights=*/true);
        ParamsSeries p1 = testutil::random_params(unit, 1, rng);
        const Responsibilities r1 = e_step(unit, p1);
        KernelSpec delta{KernelFamily::boxcar, 0.3, 4.0};
        const MeanUpdate m1 = m_step_mu(unit, r1, delta, unit.times());
        const CovUpdate upd = m_step_sigma(unit, r1, m1.mu, delta, unit.times());
        for (int t = 0; t < unit.size(); ++t) {
            const Cytogram& cyt = unit.cytograms[t];
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
            for (int i = 0; i < cyt.n(); ++i) mean += cyt.points.row(i).transpose();
            mean /= cyt.n();
            Eigen::MatrixXd mle = Eigen::MatrixXd::Zero(2, 2);
            for (int i = 0; i < cyt.n(); ++i) {
                const Eigen::VectorXd r = cyt.points.row(i).transpose() - mean;
                mle += r * r.transpose();
            }
            mle /= cyt.n();
            CHECK((upd.sigma[t][0] - mle).cwiseAbs().maxCoeff() <= kTol);
        }
    }

    SUBCASE("single point per time degenerates to the ridge") {
        CytoSeries tiny;
        tiny.dim = 1;
        for (int t = 0; t < 2; ++t) {
            Cytogram cyt;
            cyt.time = static_cast<double>(t);
            cyt.points = Eigen::MatrixXd::Constant(1, 1, 1.0 + t);
            cyt.weights = Eigen::VectorXd::Ones(1);
            tiny.cytograms.push_back(cyt);
        }
        Responsibilities ones;
        ones.gamma = {Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1)};
        ones.cluster_mass = Eigen::MatrixXd::Ones(2, 1);
        KernelSpec delta{KernelFamily::boxcar, 0.4, 4.0};
        const MeanUpdate m1 = m_step_mu(tiny, ones, delta, tiny.times());
        const CovUpdate upd = m_step_sigma(tiny, ones, m1.mu, delta, tiny.times());
        bool saw_ridge = false;
        for (const auto& e : upd.events) saw_ridge = saw_ridge || e.kind == "ridge";
        CHECK(saw_ridge);
        for (int t = 0; t < 2; ++t) CHECK(upd.sigma[t][0](0, 0) > 0.0);
    }

    SUBCASE("outputs are symmetric and positive definite") {
        const CovUpdate upd = m_step_sigma(series, resp, mu_data.mu, g, times);
        for (int t = 0; t < series.size(); ++t)
            for (int k = 0; k < 2; ++k) {
                const Eigen::MatrixXd& S = upd.sigma[t][k];
                CHECK((S - S.transpose()).cwiseAbs().maxCoeff() <= kTol);
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
                CHECK(es.eigenvalues().minCoeff() > 0.0);
            }
    }
}

TEST_CASE("fit reductions to classical EM") {
    Rng rng(53);

    SUBCASE("T=1 coincides with classical weighted EM") {
        CytoSeries one;
        one.dim = 2;
        one.cytograms = {testutil::random_cytogram(0.0, 30, 2, rng)};
        MixtureState init_state = testutil::random_state(2, 2, rng);
        init_state.mu.row(0) = one.cytograms[0].points.row(0);
        init_state.mu.row(1) = one.cytograms[0].points.row(1);
        init_state.sigma = {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
        const ParamsSeries init = constant_params(one, init_state);

        FitConfig config;
        config.K = 2;
        config.bandwidths = {3.0, 5.0, 7.0};
        config.max_iters = 4;
        config.tol = 1e-15;
        const FitResult result = fit(one, init, config);
        REQUIRE(result.loglik_trace.size() == 4);

        MixtureState oracle = init_state;
        for (int it = 0; it < 4; ++it) oracle = classical_em_iteration(one.cytograms[0], oracle);
        check_states_close(result.params.states[0], oracle, 1e-9);
    }

    SUBCASE("uniform weights converge to a pooled fit, constant over time") {
        CytoSeries series = testutil::random_series(4, 12, 2, rng);
        MixtureState init_state = testutil::random_state(2, 2, rng);
        init_state.mu.row(0) = series.cytograms[0].points.row(0);
        init_state.mu.row(1) = series.cytograms[1].points.row(3);
        init_state.sigma = {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
        const ParamsSeries init = constant_params(series, init_state);

        FitConfig config;
        config.K = 2;
        config.bandwidths = {1e9, 1e9, 1e9};
        config.kernel_family = KernelFamily::boxcar;
        config.max_iters = 5;
        config.tol = 1e-15;
        const FitResult result = fit(series, init, config);
        REQUIRE(result.loglik_trace.size() == 5);

        // every per-time state identical
        for (int t = 1; t < series.size(); ++t)
            check_states_close(result.params.states[t], result.params.states[0], kTol);

        // and equal to the pooled classical EM run from the same init
        const Cytogram pooled = pool_series(series);
        MixtureState oracle = init_state;
        for (int it = 0; it < 5; ++it) oracle = classical_em_iteration(pooled, oracle);
        check_states_close(result.params.states[0], oracle, 1e-8);
    }
}

TEST_CASE("fit separates a well-separated synthetic pair") {
    // means +-5, sigma=0.3
    Rng rng(61);
    CytoSeries series;
    series.dim = 1;
    std::vector<std::vector<int>> truth;
    for (int t = 0; t < 10; ++t) {
        Cytogram cyt;
        cyt.time = static_cast<double>(t);
        cyt.points.resize(50, 1);
        cyt.weights = Eigen::VectorXd::Ones(50);
        std::vector<int> labels(50);
        for (int i = 0; i < 50; ++i) {
            const int z = rng.uniform() < 0.5 ? 1 : 0;
            labels[i] = z;
            cyt.points(i, 0) = (z == 0 ? -5.0 : 5.0) + 0.3 * rng.normal();
        }
        series.cytograms.push_back(std::move(cyt));
        truth.push_back(std::move(labels));
    }

    InitConfig ic;
    ic.seed = 9;
    const ParamsSeries init = constant_init(series, 2, ic);
    FitConfig config;
    config.K = 2;
    config.bandwidths = {3.0, 3.0, 5.0};
    const FitResult result = fit(series, init, config);

    const auto hard = argmax_labels(result.resp);
    double mean_rand = 0.0;
    for (int t = 0; t < series.size(); ++t) mean_rand += rand_index(truth[t], hard[t]);
    mean_rand /= series.size();
    CHECK(mean_rand > 0.99);
}

TEST_CASE("fit rejects more clusters than effective points") {
    Rng rng(67);
    CytoSeries series = testutil::random_series(2, 2, 1, rng);
    ParamsSeries init = testutil::random_params(series, 5, rng);
    FitConfig config;
    config.K = 5;
    CHECK_THROWS(fit(series, init, config));
}

TEST_CASE("fit invariance properties") {
    Rng rng(71);

    SUBCASE("label permutation equivariance") {
        for (int rep = 0; rep < 20; ++rep) {
            CytoSeries series = testutil::random_series(4, 8, 2, rng);
            ParamsSeries init = testutil::random_params(series, 3, rng);

            ParamsSeries permuted = init;
            const std::vector<int> perm = {2, 0, 1}; // new index of old cluster k
            for (int t = 0; t < init.size(); ++t) {
                MixtureState& s = permuted.states[t];
                const MixtureState& o = init.states[t];
                for (int k = 0; k < 3; ++k) {
                    s.pi[perm[k]] = o.pi[k];
                    s.mu.row(perm[k]) = o.mu.row(k);
                    s.sigma[perm[k]] = o.sigma[k];
                }
            }

            FitConfig config;
            config.K = 3;
            config.bandwidths = {2.0, 2.0, 3.0};
            config.max_iters = 3;
            const FitResult a = fit(series, init, config);
            const FitResult b = fit(series, permuted, config);
            for (int t = 0; t < series.size(); ++t)
                for (int k = 0; k < 3; ++k) {
                    CHECK(a.params.states[t].pi[k] ==
                          doctest::Approx(b.params.states[t].pi[perm[k]]).epsilon(1e-9));
                    CHECK((a.params.states[t].mu.row(k) - b.params.states[t].mu.row(perm[k]))
                              .cwiseAbs()
                              .maxCoeff() <= 1e-9);
                    CHECK((a.params.states[t].sigma[k] - b.params.states[t].sigma[perm[k]])
                              .cwiseAbs()
                              .maxCoeff() <= 1e-9);
                }
        }
    }

    SUBCASE("time translation invariance") {
        for (int rep = 0; rep < 20; ++rep) {
            CytoSeries series = testutil::random_series(4, 6, 1, rng);
            ParamsSeries init = testutil::random_params(series, 2, rng);
            FitConfig config;
            config.K = 2;
            config.bandwidths = {1.5, 1.5, 2.5};
            config.max_iters = 3;
            const FitResult a = fit(series, init, config);

            CytoSeries shifted = series;
            ParamsSeries shifted_init = init;
            for (int t = 0; t < series.size(); ++t) {
                shifted.cytograms[t].time += 1000.0;
                shifted_init.times[t] += 1000.0;
            }
            const FitResult b = fit(shifted, shifted_init, config);
            for (int t = 0; t < series.size(); ++t) {
                CHECK(a.params.states[t].pi == b.params.states[t].pi);
                CHECK(a.params.states[t].mu == b.params.states[t].mu);
                for (int k = 0; k < 2; ++k)
                    CHECK(a.params.states[t].sigma[k] == b.params.states[t].sigma[k]);
            }
        }
    }

    SUBCASE("bitwise determinism across repeated runs") {
        CytoSeries series = testutil::random_series(5, 10, 2, rng);
        ParamsSeries init = testutil::random_params(series, 2, rng);
        FitConfig config;
        config.K = 2;
        config.bandwidths = {2.0, 2.0, 4.0};
        const FitResult a = fit(series, init, config);
        const FitResult b = fit(series, init, config);
        REQUIRE(a.loglik_trace.size() == b.loglik_trace.size());
        for (size_t i = 0; i < a.loglik_trace.size(); ++i)
            CHECK(a.loglik_trace[i] == b.loglik_trace[i]);
        for (int t = 0; t < series.size(); ++t) {
            CHECK(a.params.states[t].pi == b.params.states[t].pi);
            CHECK(a.params.states[t].mu == b.params.states[t].mu);
            CHECK(a.resp.gamma[t] == b.resp.gamma[t]);
        }
    }
}

TEST_CASE("one kernel-EM iteration under degenerate kernels equals classical updates") {
    Rng rng(79);
    CytoSeries series = testutil::random_series(5, 8, 2, rng);
    ParamsSeries init = testutil::random_params(series, 2, rng);

    SUBCASE("sub-spacing boxcar equals independent per-time EM iterations") {
        FitConfig config;
        config.K = 2;
        config.bandwidths = {0.4, 0.4, 0.4};
        config.kernel_family = KernelFamily::boxcar;
        config.max_iters = 1;
        const FitResult result = fit(series, init, config);
        for (int t = 0; t < series.size(); ++t) {
            const MixtureState oracle =
                classical_em_iteration(series.cytograms[t], init.states[t]);
            check_states_close(result.params.states[t], oracle, 1e-10);
        }
    }

    SUBCASE("infinite boxcar equals one pooled EM iteration") {
        // the same constant init at every time, as in the pooled oracle
        ParamsSeries const_init = constant_params(series, init.states[0]);
        FitConfig config;
        config.K = 2;
        config.bandwidths = {1e9, 1e9, 1e9};
        config.kernel_family = KernelFamily::boxcar;
        config.max_iters = 1;
        const FitResult result = fit(series, const_init, config);
        const MixtureState oracle = classical_em_iteration(pool_series(series), init.states[0]);
        for (int t = 0; t < series.size(); ++t)
            check_states_close(result.params.states[t], oracle, 1e-10);
    }
}

TEST_CASE("predict_at_times consistency and errors") {
    Rng rng(83);
    CytoSeries series = testutil::random_series(4, 10, 1, rng);
    InitConfig ic;
    ic.seed = 4;
    const ParamsSeries init = constant_init(series, 2, ic);
    FitConfig config;
    config.K = 2;
    config.bandwidths = {1.5, 1.5, 2.0};
    const FitResult result = fit(series, init, config);
    const KernelSpec shape{config.kernel_family, 1.0, config.kernel_cutoff};

    SUBCASE("data times reproduce the smoothed M-step outputs") {
        const ParamsSeries predicted =
            predict_at_times(series, result.resp, config.bandwidths, shape, series.times());
        const Eigen::MatrixXd pi =
            m_step_pi(series, result.resp, config.pi_kernel(), series.times());
        const MeanUpdate mu =
            m_step_mu(series, result.resp, config.mu_kernel(), series.times());
        const CovUpdate sigma =
            m_step_sigma(series, result.resp, mu.mu, config.sigma_kernel(), series.times());
        for (int t = 0; t < series.size(); ++t) {
            CHECK((predicted.states[t].pi.transpose() - pi.row(t)).cwiseAbs().maxCoeff() == 0.0);
            CHECK(predicted.states[t].mu == mu.mu[t]);
            for (int k = 0; k < 2; ++k)
                CHECK(predicted.states[t].sigma[k] == sigma.sigma[t][k]);
        }
    }

    SUBCASE("midpoint under a covering boxcar is the two-term blend") {
        CytoSeries two;
        two.dim = 1;
        two.cytograms = {testutil::random_cytogram(0.0, 6, 1, rng),
                         testutil::random_cytogram(1.0, 7, 1, rng)};
        ParamsSeries p = testutil::random_params(two, 2, rng);
        const Responsibilities resp = e_step(two, p);
        Bandwidths bw{1.0, 1.0, 1.0};
        KernelSpec box{KernelFamily::boxcar, 1.0, 4.0};
        const ParamsSeries mid = predict_at_times(two, resp, bw, box, {0.5});

        const double m0 = resp.cluster_mass(0, 0) + resp.cluster_mass(1, 0);
        const double m1 = resp.cluster_mass(0, 1) + resp.cluster_mass(1, 1);
        const double n_all = two.cytograms[0].total_weight() + two.cytograms[1].total_weight();
        CHECK(mid.states[0].pi[0] == doctest::Approx(m0 / n_all).epsilon(1e-14));
        CHECK(mid.states[0].pi[1] == doctest::Approx(m1 / n_all).epsilon(1e-14));

        Eigen::VectorXd numer = Eigen::VectorXd::Zero(1);
        for (int t = 0; t < 2; ++t)
            for (int i = 0; i < two.cytograms[t].n(); ++i)
                numer += two.cytograms[t].weights[i] * resp.gamma[t](i, 0) *
                         two.cytograms[t].points.row(i).transpose();
        CHECK(mid.states[0].mu(0, 0) == doctest::Approx(numer[0] / m0).epsilon(1e-13));
    }

    SUBCASE("a time beyond the cutoff raises the reachability error") {
        CHECK_THROWS(predict_at_times(series, result.resp, config.bandwidths, shape, {1e5}));
    }
}
