#include "kernelmix/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/core.h>

namespace kernelmix {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void atomic_write(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", tmp.string()));
        out << content;
        if (!out) throw std::runtime_error(fmt::format("write to '{}' failed", tmp.string()));
    }
    fs::rename(tmp, target);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& token, int line_no, const std::string& what) {
    double v = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end)
        throw std::runtime_error(
            fmt::format("line {}: cannot parse {} '{}'", line_no, what, token));
    return v;
}

} // namespace

LoadedSeries load_series(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path));

    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(fmt::format("'{}': empty file, header required", path));
    const std::vector<std::string> header = split_csv_line(line);
    if (header.empty() || header[0] != "time")
        throw std::runtime_error(fmt::format("'{}': first column must be 'time'", path));

    bool has_label = !header.empty() && header.back() == "label";
    const size_t tail = has_label ? 1 : 0;
    bool has_weight = header.size() > 1 + tail && header[header.size() - 1 - tail] == "weight";
    const int d = static_cast<int>(header.size() - 1 - tail - (has_weight ? 1 : 0));
    if (d < 1)
        throw std::runtime_error(fmt::format("'{}': no coordinate columns found", path));

    struct Row {
        double time;
        Eigen::VectorXd x;
        double weight;
        std::string label;
    };
    std::vector<Row> rows;
    int line_no = 1;
    double prev_time = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error(
                fmt::format("line {}: expected {} columns, found {}", line_no, header.size(),
                            cells.size()));
        Row row;
        row.time = parse_double(cells[0], line_no, "time");
        if (row.time < prev_time)
            throw std::runtime_error(
                fmt::format("line {}: time {} decreases below {}; rows must be grouped by "
                            "nondecreasing time", line_no, row.time, prev_time));
        prev_time = row.time;
        row.x.resize(d);
        for (int j = 0; j < d; ++j) {
            row.x[j] = parse_double(cells[1 + j], line_no, fmt::format("coordinate {}", j + 1));
            if (!std::isfinite(row.x[j]))
                throw std::runtime_error(
                    fmt::format("line {}: non-finite coordinate '{}'", line_no, cells[1 + j]));
        }
        row.weight = has_weight ? parse_double(cells[1 + d], line_no, "weight") : 1.0;
        if (!(row.weight >= 0.0) || !std::isfinite(row.weight))
            throw std::runtime_error(
                fmt::format("line {}: weight {} must be nonnegative", line_no, row.weight));
        if (has_label) row.label = cells.back();
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(fmt::format("'{}': no data rows", path));

    LoadedSeries out;
    out.series.dim = d;
    size_t i = 0;
    while (i < rows.size()) {
        size_t j = i;
        while (j < rows.size() && rows[j].time == rows[i].time) ++j;
        Cytogram cyt;
        cyt.time = rows[i].time;
        cyt.points.resize(static_cast<Eigen::Index>(j - i), d);
        cyt.weights.resize(static_cast<Eigen::Index>(j - i));
        std::vector<std::string> label_group;
        for (size_t r = i; r < j; ++r) {
            cyt.points.row(static_cast<Eigen::Index>(r - i)) = rows[r].x.transpose();
            cyt.weights[static_cast<Eigen::Index>(r - i)] = rows[r].weight;
            if (has_label) label_group.push_back(rows[r].label);
        }
        out.series.cytograms.push_back(std::move(cyt));
        if (has_label) out.labels.push_back(std::move(label_group));
        i = j;
    }
    validate(out.series);
    return out;
}

void write_series(const CytoSeries& series, const std::string& path,
                  const std::vector<std::vector<std::string>>* labels) {
    validate(series);
    if (labels && static_cast<int>(labels->size()) != series.size())
        throw std::invalid_argument("labels do not cover every time point");

    std::string out = "time";
    for (int j = 1; j <= series.dim; ++j) out += fmt::format(",x{}", j);
    out += ",weight";
    if (labels) out += ",label";
    out += "\n";
    for (int t = 0; t < series.size(); ++t) {
        const Cytogram& cyt = series.cytograms[t];
        if (labels && static_cast<int>((*labels)[t].size()) != cyt.n())
            throw std::invalid_argument(
                fmt::format("label count mismatch at time index {}", t));
        for (int i = 0; i < cyt.n(); ++i) {
            out += format_double(cyt.time);
            for (int j = 0; j < series.dim; ++j) out += "," + format_double(cyt.points(i, j));
            out += "," + format_double(cyt.weights[i]);
            if (labels) out += "," + (*labels)[t][i];
            out += "\n";
        }
    }
    atomic_write(path, out);
}

nlohmann::ordered_json fit_document_json(const FitDocument& doc) {
    nlohmann::ordered_json j;
    j["format_version"] = "1";
    j["config"] = doc.config_echo;
    j["K"] = doc.params.K;
    j["dim"] = doc.params.dim();
    nlohmann::ordered_json states = nlohmann::ordered_json::array();
    for (int t = 0; t < doc.params.size(); ++t) {
        const MixtureState& s = doc.params.states[t];
        nlohmann::ordered_json js;
        js["time"] = doc.params.times[t];
        js["pi"] = std::vector<double>(s.pi.data(), s.pi.data() + s.pi.size());
        nlohmann::ordered_json mu = nlohmann::ordered_json::array();
        for (int k = 0; k < s.k(); ++k) {
            std::vector<double> row(s.mu.row(k).begin(), s.mu.row(k).end());
            mu.push_back(row);
        }
        js["mu"] = mu;
        nlohmann::ordered_json sigma = nlohmann::ordered_json::array();
        for (int k = 0; k < s.k(); ++k) {
            nlohmann::ordered_json m = nlohmann::ordered_json::array();
            for (Eigen::Index r = 0; r < s.sigma[k].rows(); ++r) {
                std::vector<double> row(s.sigma[k].row(r).begin(), s.sigma[k].row(r).end());
                m.push_back(row);
            }
            sigma.push_back(m);
        }
        js["sigma"] = sigma;
        states.push_back(js);
    }
    j["states"] = states;
    j["loglik_trace"] = doc.loglik_trace;
    nlohmann::ordered_json events = nlohmann::ordered_json::array();
    for (const FitEvent& e : doc.events) {
        nlohmann::ordered_json je;
        je["kind"] = e.kind;
        je["iteration"] = e.iteration;
        je["time_index"] = e.time_index;
        je["cluster"] = e.cluster;
        je["detail"] = e.detail;
        events.push_back(je);
    }
    j["events"] = events;
    return j;
}

void write_fit(const FitDocument& doc, const std::string& path) {
    atomic_write(path, fit_document_json(doc).dump(2) + "\n");
}

FitDocument read_fit(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path));
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error(fmt::format("'{}': invalid JSON ({})", path, e.what()));
    }
    if (j.value("format_version", "") != "1")
        throw std::runtime_error(fmt::format("'{}': unsupported format_version", path));

    FitDocument doc;
    doc.config_echo = j.at("config");
    doc.params.K = j.at("K").get<int>();
    const int d = j.at("dim").get<int>();
    for (const auto& js : j.at("states")) {
        doc.params.times.push_back(js.at("time").get<double>());
        MixtureState s;
        const auto pi = js.at("pi").get<std::vector<double>>();
        s.pi = Eigen::Map<const Eigen::VectorXd>(pi.data(), pi.size());
        s.mu.resize(doc.params.K, d);
        for (int k = 0; k < doc.params.K; ++k) {
            const auto row = js.at("mu")[k].get<std::vector<double>>();
            s.mu.row(k) = Eigen::Map<const Eigen::VectorXd>(row.data(), row.size()).transpose();
        }
        s.sigma.resize(doc.params.K);
        for (int k = 0; k < doc.params.K; ++k) {
            s.sigma[k].resize(d, d);
            for (int r = 0; r < d; ++r) {
                const auto row = js.at("sigma")[k][r].get<std::vector<double>>();
                s.sigma[k].row(r) =
                    Eigen::Map<const Eigen::VectorXd>(row.data(), row.size()).transpose();
            }
        }
        doc.params.states.push_back(std::move(s));
    }
    doc.loglik_trace = j.at("loglik_trace").get<std::vector<double>>();
    for (const auto& je : j.at("events")) {
        FitEvent e;
        e.kind = je.at("kind").get<std::string>();
        e.iteration = je.at("iteration").get<int>();
        e.time_index = je.at("time_index").get<int>();
        e.cluster = je.at("cluster").get<int>();
        e.detail = je.at("detail").get<std::string>();
        doc.events.push_back(std::move(e));
    }
    return doc;
}

void write_responsibilities(const CytoSeries& series, const Responsibilities& resp,
                            const std::string& path) {
    if (resp.size() != series.size())
        throw std::invalid_argument("responsibilities do not match the series");
    const int K = static_cast<int>(resp.cluster_mass.cols());
    std::string out = "time,point";
    for (int k = 1; k <= K; ++k) out += fmt::format(",gamma_{}", k);
    out += "\n";
    for (int t = 0; t < series.size(); ++t) {
        for (Eigen::Index i = 0; i < resp.gamma[t].rows(); ++i) {
            out += format_double(series.cytograms[t].time) + "," + std::to_string(i);
            for (int k = 0; k < K; ++k) out += "," + format_double(resp.gamma[t](i, k));
            out += "\n";
        }
    }
    atomic_write(path, out);
}

Eigen::MatrixXd cluster_biomass(const CytoSeries& series, const Responsibilities& resp) {
    if (resp.size() != series.size())
        throw std::invalid_argument("responsibilities do not match the series");
    return resp.cluster_mass;
}

Eigen::VectorXd biomass_subset(const Eigen::MatrixXd& biomass, const std::vector<int>& clusters) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(biomass.rows());
    for (int k : clusters) {
        if (k < 0 || k >= biomass.cols())
            throw std::invalid_argument(fmt::format("cluster index {} out of range", k));
        out += biomass.col(k);
    }
    return out;
}

std::string biomass_csv(const CytoSeries& series, const Eigen::MatrixXd& biomass) {
    const int K = static_cast<int>(biomass.cols());
    std::string out = "time";
    for (int k = 1; k <= K; ++k) out += fmt::format(",cluster_{}", k);
    out += ",total\n";
    for (int t = 0; t < series.size(); ++t) {
        out += format_double(series.cytograms[t].time);
        for (int k = 0; k < K; ++k) out += "," + format_double(biomass(t, k));
        out += "," + format_double(biomass.row(t).sum());
        out += "\n";
    }
    return out;
}

ConfusionMatrix confusion_matrix(const CytoSeries& series, const Responsibilities& resp,
                                 const std::vector<std::vector<std::string>>& labels,
                                 const std::vector<std::string>* populations) {
    if (resp.size() != series.size() || static_cast<int>(labels.size()) != series.size())
        throw std::invalid_argument("series, responsibilities and labels must align");
    const int K = static_cast<int>(resp.cluster_mass.cols());

    std::set<std::string> pops;
    if (populations) {
        pops.insert(populations->begin(), populations->end());
    } else {
        for (const auto& per_time : labels) pops.insert(per_time.begin(), per_time.end());
    }

    ConfusionMatrix out;
    out.populations.assign(pops.begin(), pops.end()); // set iterates lexicographically
    std::map<std::string, int> col;
    for (size_t c = 0; c < out.populations.size(); ++c) col[out.populations[c]] = static_cast<int>(c);

    out.fractions = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(out.populations.size()));
    for (int t = 0; t < series.size(); ++t) {
        const Cytogram& cyt = series.cytograms[t];
        if (static_cast<int>(labels[t].size()) != cyt.n())
            throw std::invalid_argument(
                fmt::format("label count mismatch at time index {}", t));
        for (int i = 0; i < cyt.n(); ++i) {
            const auto it = col.find(labels[t][i]);
            if (it == col.end())
                throw std::invalid_argument(
                    fmt::format("label '{}' not in the population list", labels[t][i]));
            for (int k = 0; k < K; ++k)
                out.fractions(k, it->second) += cyt.weights[i] * resp.gamma[t](i, k);
        }
    }
    for (Eigen::Index c = 0; c < out.fractions.cols(); ++c) {
        const double total = out.fractions.col(c).sum();
        if (total > 0.0) {
            out.fractions.col(c) /= total;
        } else {
            out.warnings.push_back(
                fmt::format("population '{}' has zero total weight", out.populations[c]));
        }
    }
    return out;
}

std::string confusion_csv(const ConfusionMatrix& matrix) {
    std::string out = "cluster";
    for (const auto& pop : matrix.populations) out += "," + pop;
    out += "\n";
    for (Eigen::Index k = 0; k < matrix.fractions.rows(); ++k) {
        out += fmt::format("cluster_{}", k + 1);
        for (Eigen::Index c = 0; c < matrix.fractions.cols(); ++c)
            out += "," + format_double(matrix.fractions(k, c));
        out += "\n";
    }
    return out;
}

std::string bench_csv(const BenchResult& result) {
    std::string out = "method,scenario_param,run,rand_index\n";
    for (const auto& cell : result.cells)
        for (size_t run = 0; run < cell.scores.size(); ++run)
            out += fmt::format("{},{},{},{}\n", to_string(cell.method),
                               format_double(cell.scenario_param), run,
                               format_double(cell.scores[run]));
    return out;
}

nlohmann::ordered_json bench_summary_json(const BenchResult& result) {
    nlohmann::ordered_json j;
    j["scenario"] = result.config.scenario;
    j["runs"] = result.config.runs;
    j["T"] = result.config.T;
    j["n_per_time"] = result.config.n_per_time;
    j["sigma"] = result.config.sigma;
    j["K"] = result.config.K;
    j["seed"] = result.config.seed;
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const auto& cell : result.cells) {
        nlohmann::ordered_json jc;
        jc["method"] = to_string(cell.method);
        jc["scenario_param"] = cell.scenario_param;
        jc["mean_rand_index"] = cell.mean;
        jc["se"] = cell.se;
        jc["runs_ok"] = cell.scores.size();
        jc["failures"] = cell.failures;
        cells.push_back(jc);
    }
    j["cells"] = cells;
    return j;
}

nlohmann::ordered_json theory_report_json(const TheoryReport& report) {
    nlohmann::ordered_json j;
    j["scenario"] = {{"T", report.scenario.T},
                     {"n", report.scenario.n},
                     {"sigma", report.scenario.sigma},
                     {"kernel", to_string(report.scenario.kernel.family)},
                     {"h", report.scenario.kernel.h},
                     {"cutoff", report.scenario.kernel.cutoff},
                     {"reps", report.scenario.reps},
                     {"seed", report.scenario.seed}};
    auto labeling_name = [](int l) { return l == 0 ? "linear" : "absolute"; };

    nlohmann::ordered_json bias = nlohmann::ordered_json::array();
    for (const auto& r : report.bias)
        bias.push_back({{"t", r.t},
                        {"labeling", labeling_name(r.labeling)},
                        {"cluster", r.cluster},
                        {"mc_bias", r.mc_bias},
                        {"mc_se", r.mc_se},
                        {"exact_bias", r.exact_bias},
                        {"interior", r.interior}});
    j["bias"] = bias;

    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : report.theorem1.rows)
        rows.push_back({{"t", r.t},
                        {"interior", r.interior},
                        {"mse_lin", r.mse_lin},
                        {"mse_lin_se", r.mse_lin_se},
                        {"mse_av", r.mse_av},
                        {"mse_av_se", r.mse_av_se},
                        {"mse_diff_se", r.mse_diff_se},
                        {"exact_mse_diff", r.exact_mse_diff},
                        {"mse_ok", r.mse_ok},
                        {"epe_lin", r.epe_lin},
                        {"epe_lin_se", r.epe_lin_se},
                        {"epe_av", r.epe_av},
                        {"epe_av_se", r.epe_av_se},
                        {"epe_diff_se", r.epe_diff_se},
                        {"epe_ok", r.epe_ok}});
    j["theorem1"] = {{"rows", rows},
                     {"all_mse_ok", report.theorem1.all_mse_ok},
                     {"all_epe_ok", report.theorem1.all_epe_ok},
                     {"exact_mse_av_at_zero_noiseless",
                      report.theorem1.exact_mse_av_at_zero_noiseless}};

    nlohmann::ordered_json var_rows = nlohmann::ordered_json::array();
    for (const auto& r : report.variance.rows)
        var_rows.push_back({{"t", r.t},
                            {"labeling", labeling_name(r.labeling)},
                            {"cluster", r.cluster},
                            {"mc_var", r.mc_var},
                            {"formula_var", r.formula_var},
                            {"se", r.se},
                            {"ok", r.ok}});
    j["variance"] = {{"rows", var_rows}, {"all_ok", report.variance.all_ok}};
    return j;
}

} // namespace kernelmix
