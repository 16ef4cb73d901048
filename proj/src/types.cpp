#include "kernelmix/types.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace kernelmix {

std::vector<double> CytoSeries::times() const {
    std::vector<double> out;
    out.reserve(cytograms.size());
    for (const auto& c : cytograms) out.push_back(c.time);
    return out;
}

double CytoSeries::duration() const {
    if (cytograms.size() < 2) return 0.0;
    return cytograms.back().time - cytograms.front().time;
}

KernelFamily kernel_family_from_string(const std::string& name) {
    if (name == "gaussian") return KernelFamily::gaussian;
    if (name == "boxcar") return KernelFamily::boxcar;
    throw std::invalid_argument(fmt::format("unknown kernel family '{}'", name));
}

std::string to_string(KernelFamily family) {
    return family == KernelFamily::gaussian ? "gaussian" : "boxcar";
}

void validate(const Cytogram& cyt) {
    if (cyt.points.rows() < 1)
        throw std::invalid_argument("cytogram must contain at least one point");
    if (cyt.weights.size() != cyt.points.rows())
        throw std::invalid_argument(
            fmt::format("cytogram at t={} has {} points but {} weights",
                        cyt.time, cyt.points.rows(), cyt.weights.size()));
    if (!std::isfinite(cyt.time))
        throw std::invalid_argument("cytogram timestamp must be finite");
    if (!cyt.points.allFinite())
        throw std::invalid_argument(
            fmt::format("cytogram at t={} contains non-finite coordinates", cyt.time));
    bool any_positive = false;
    for (Eigen::Index i = 0; i < cyt.weights.size(); ++i) {
        const double w = cyt.weights[i];
        if (!std::isfinite(w) || w < 0.0)
            throw std::invalid_argument(
                fmt::format("cytogram at t={} has invalid weight {} at row {}", cyt.time, w, i));
        if (w > 0.0) any_positive = true;
    }
    if (!any_positive)
        throw std::invalid_argument(
            fmt::format("cytogram at t={} has no strictly positive weight", cyt.time));
}

void validate(const CytoSeries& series) {
    if (series.cytograms.empty())
        throw std::invalid_argument("series must contain at least one cytogram");
    if (series.dim < 1) throw std::invalid_argument("series dimension must be positive");
    double prev = -std::numeric_limits<double>::infinity();
    for (size_t t = 0; t < series.cytograms.size(); ++t) {
        const auto& cyt = series.cytograms[t];
        validate(cyt);
        if (cyt.dim() != series.dim)
            throw std::invalid_argument(
                fmt::format("cytogram at index {} has dimension {} but series has {}",
                            t, cyt.dim(), series.dim));
        if (cyt.time <= prev)
            throw std::invalid_argument(
                fmt::format("timestamps must be strictly increasing (index {}: {} after {})",
                            t, cyt.time, prev));
        prev = cyt.time;
    }
}

void validate(const MixtureState& state, double pi_tol, double sym_tol) {
    const int K = state.k();
    const int d = state.dim();
    if (K < 1) throw std::invalid_argument("mixture must have at least one cluster");
    if (state.mu.rows() != K || static_cast<int>(state.sigma.size()) != K)
        throw std::invalid_argument("pi, mu, sigma must agree on cluster count");
    for (int k = 0; k < K; ++k) {
        const double p = state.pi[k];
        if (!(p >= -pi_tol && p <= 1.0 + pi_tol))
            throw std::invalid_argument(fmt::format("pi[{}]={} outside [0,1]", k, p));
        const auto& S = state.sigma[k];
        if (S.rows() != d || S.cols() != d)
            throw std::invalid_argument(fmt::format("sigma[{}] has wrong shape", k));
        if ((S - S.transpose()).cwiseAbs().maxCoeff() > sym_tol)
            throw std::invalid_argument(fmt::format("sigma[{}] is not symmetric", k));
    }
    if (std::abs(state.pi.sum() - 1.0) > pi_tol)
        throw std::invalid_argument(
            fmt::format("mixture proportions sum to {} (expected 1)", state.pi.sum()));
}

void validate(const ParamsSeries& params) {
    if (params.states.empty()) throw std::invalid_argument("empty parameter series");
    if (params.times.size() != params.states.size())
        throw std::invalid_argument("times and states length mismatch");
    const int d = params.states.front().dim();
    for (size_t t = 0; t < params.states.size(); ++t) {
        validate(params.states[t]);
        if (params.states[t].k() != params.K || params.states[t].dim() != d)
            throw std::invalid_argument(
                fmt::format("state at index {} disagrees on K or dimension", t));
    }
}

void validate(const KernelSpec& spec) {
    if (!(spec.h > 0.0) || !std::isfinite(spec.h))
        throw std::invalid_argument("kernel bandwidth must be positive and finite");
    if (!(spec.cutoff >= 1.0))
        throw std::invalid_argument("kernel cutoff must be at least 1");
}

void validate(const Bandwidths& bw) {
    for (double h : {bw.h_pi, bw.h_mu, bw.h_sigma})
        if (!(h > 0.0) || !std::isfinite(h))
            throw std::invalid_argument("bandwidths must be positive and finite");
}

void check_aligned(const CytoSeries& series, const ParamsSeries& params) {
    if (params.size() != series.size())
        throw std::invalid_argument(
            fmt::format("parameter series has {} states but data has {} time points",
                        params.size(), series.size()));
    if (params.dim() != series.dim)
        throw std::invalid_argument(
            fmt::format("parameters have dimension {} but data has {}",
                        params.dim(), series.dim));
    for (int t = 0; t < series.size(); ++t)
        if (params.times[t] != series.cytograms[t].time)
            throw std::invalid_argument(
                fmt::format("parameter time {} != data time {} at index {}",
                            params.times[t], series.cytograms[t].time, t));
}

} // namespace kernelmix
