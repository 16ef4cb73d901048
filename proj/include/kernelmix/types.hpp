#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace kernelmix {

/// One time point's weighted point cloud. For binned cytometry data each row
/// of `points` is a bin center and `weights[i]` is the bin's biomass; for
/// particle-level data all weights are 1.
struct Cytogram {
    double time = 0.0;        // hours, real-valued
    Eigen::MatrixXd points;   // n x d
    Eigen::VectorXd weights;  // n, nonnegative, at least one positive

    int n() const { return static_cast<int>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }
    double total_weight() const { return weights.sum(); }
};

/// Ordered sequence of cytograms on a strictly increasing time grid.
struct CytoSeries {
    std::vector<Cytogram> cytograms;
    int dim = 0;

    int size() const { return static_cast<int>(cytograms.size()); }
    std::vector<double> times() const;
    double duration() const;  // last time minus first time
};

/// Mixture parameters at a single time: proportions, means, covariances.
struct MixtureState {
    Eigen::VectorXd pi;                 // K
    Eigen::MatrixXd mu;                 // K x d
    std::vector<Eigen::MatrixXd> sigma; // K matrices, each d x d symmetric PD

    int k() const { return static_cast<int>(pi.size()); }
    int dim() const { return static_cast<int>(mu.cols()); }
};

/// Per-time mixture parameters over the full series time grid.
struct ParamsSeries {
    std::vector<double> times;
    std::vector<MixtureState> states;
    int K = 0;

    int size() const { return static_cast<int>(states.size()); }
    int dim() const { return states.empty() ? 0 : states.front().dim(); }
};

/// E-step output: soft assignments per point and the per-time cluster masses
/// derived from them.
struct Responsibilities {
    std::vector<Eigen::MatrixXd> gamma; // per time: n_t x K, rows sum to 1
    Eigen::MatrixXd cluster_mass;       // T x K, entry (t,k) = sum_i C_i gamma_itk

    int size() const { return static_cast<int>(gamma.size()); }
};

enum class KernelFamily { gaussian, boxcar };

/// Smoothing kernel over time differences. Unnormalized: w(0) = 1. Weights
/// are treated as exactly zero beyond cutoff * h.
struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;
    double h = 1.0;
    double cutoff = 4.0;

    KernelSpec() = default;
    KernelSpec(KernelFamily f, double bandwidth, double cut = 4.0)
        : family(f), h(bandwidth), cutoff(cut) {}

    KernelSpec with_bandwidth(double bandwidth) const { return {family, bandwidth, cutoff}; }
};

/// The three smoothing bandwidths (hours), one per parameter family.
struct Bandwidths {
    double h_pi = 1.0;
    double h_mu = 1.0;
    double h_sigma = 1.0;
};

/// Degeneracy / recovery record emitted by fitting code.
struct FitEvent {
    std::string kind;     // "ridge", "vanished_cluster", "underflow_uniform",
                          // "reseed", "carry_forward", ...
    int iteration = -1;
    int time_index = -1;
    int cluster = -1;
    std::string detail;
};

KernelFamily kernel_family_from_string(const std::string& name);
std::string to_string(KernelFamily family);

// Invariant checks; throw std::invalid_argument with a descriptive message.
void validate(const Cytogram& cyt);
void validate(const CytoSeries& series);
void validate(const MixtureState& state, double pi_tol = 1e-10, double sym_tol = 1e-10);
void validate(const ParamsSeries& params);
void validate(const KernelSpec& spec);
void validate(const Bandwidths& bw);

/// Checks that params has the same time grid and dimension as series.
void check_aligned(const CytoSeries& series, const ParamsSeries& params);

} // namespace kernelmix
