#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kernelmix/kernel_em.hpp"
#include "kernelmix/simulation.hpp"
#include "kernelmix/theory.hpp"
#include "kernelmix/types.hpp"

namespace kernelmix {

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

/// Whole-file write: temp file in the same directory, then rename.
void atomic_write(const std::string& path, const std::string& content);

struct LoadedSeries {
    CytoSeries series;
    std::vector<std::vector<std::string>> labels; // per time, per point; empty if no label column

    bool has_labels() const { return !labels.empty(); }
};

/// Reads CSV `time,x1,...,xd,weight[,label]` (header required). Rows with the
/// same time value form one cytogram; times must not decrease. A missing
/// weight column means unit weights. Parse errors carry the file line number.
LoadedSeries load_series(const std::string& path);

void write_series(const CytoSeries& series, const std::string& path,
                  const std::vector<std::vector<std::string>>* labels = nullptr);

/// Fit artifact: parameters plus trace, events and the configuration echo,
/// written as canonical JSON (format_version "1").
struct FitDocument {
    ParamsSeries params;
    std::vector<double> loglik_trace;
    std::vector<FitEvent> events;
    nlohmann::ordered_json config_echo = nlohmann::ordered_json::object();
};

nlohmann::ordered_json fit_document_json(const FitDocument& doc);
void write_fit(const FitDocument& doc, const std::string& path);
FitDocument read_fit(const std::string& path);

/// Optional companion artifact: per-point responsibilities as CSV
/// `time,point,gamma_1,...,gamma_K`.
void write_responsibilities(const CytoSeries& series, const Responsibilities& resp,
                            const std::string& path);

/// Per-time, per-cluster biomass: entry (t,k) = sum_i C_i gamma_itk.
Eigen::MatrixXd cluster_biomass(const CytoSeries& series, const Responsibilities& resp);

/// Combined biomass of a subset of clusters (0-based indices).
Eigen::VectorXd biomass_subset(const Eigen::MatrixXd& biomass, const std::vector<int>& clusters);

std::string biomass_csv(const CytoSeries& series, const Eigen::MatrixXd& biomass);

struct ConfusionMatrix {
    std::vector<std::string> populations; // lexicographic order
    Eigen::MatrixXd fractions;            // K x L, each nonempty column sums to 1
    std::vector<std::string> warnings;    // populations with zero total weight
};

/// Column-normalized overlap between fitted clusters and external labels:
/// entry (k, pop) = sum of C * gamma_itk over points labeled pop, divided by
/// the population's total weight.
ConfusionMatrix confusion_matrix(const CytoSeries& series, const Responsibilities& resp,
                                 const std::vector<std::vector<std::string>>& labels,
                                 const std::vector<std::string>* populations = nullptr);

std::string confusion_csv(const ConfusionMatrix& matrix);

// Benchmark and theory-report serialization.
std::string bench_csv(const BenchResult& result);
nlohmann::ordered_json bench_summary_json(const BenchResult& result);
nlohmann::ordered_json theory_report_json(const TheoryReport& report);

} // namespace kernelmix
