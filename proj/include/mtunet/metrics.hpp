#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mtunet {

inline constexpr double kKldEpsilon = 1e-12;

struct SaliencyMetrics {
    double kld = 0.0;
    std::optional<double> pcc;  // undefined when either map is constant
    double hs = 0.0;
};

struct ClassMetrics {
    double acc = 0.0;
    double auc = 0.0;
    std::vector<double> auc_per_class;
};

// sum t_i ln((t_i + eps) / (p_i + eps)).
double kld_metric(std::span<const double> truth, std::span<const double> pred);
// Sample Pearson correlation of the flattened maps; nullopt for zero variance.
std::optional<double> pcc(std::span<const double> a, std::span<const double> b);
// Histogram intersection sum min(a_i, b_i).
double hs(std::span<const double> truth, std::span<const double> pred);

SaliencyMetrics saliency_metrics(std::span<const double> truth, std::span<const double> pred);

// One score vector per sample.
using ScoreTable = std::vector<std::vector<double>>;

// Index of the largest score; ties go to the lowest class index.
std::size_t argmax(std::span<const double> scores);

double accuracy(std::span<const int> labels, const ScoreTable& scores);

// Mann-Whitney statistic with midranks: P(pos > neg) + 0.5 P(pos == neg).
double binary_auc(std::span<const double> positive, std::span<const double> negative);

// Class-k score of class-k samples against everything else.
double auc_one_vs_rest(const ScoreTable& scores, std::span<const int> labels, std::size_t k);

// Hand & Till M-measure: mean over unordered class pairs of
// (A(i|j) + A(j|i)) / 2.
double auc_multiclass(const ScoreTable& scores, std::span<const int> labels, std::size_t num_classes);

ClassMetrics class_metrics(const ScoreTable& scores, std::span<const int> labels, std::size_t num_classes);

struct Summary {
    double median = 0.0;
    double std = 0.0;
    std::size_t count = 0;  // finite values that entered the summary
};

// Median (mean of the middle pair for even counts) and population standard
// deviation of the finite values; NaN entries are skipped.
Summary summarize(std::span<const double> values);

// Runs share a column set; missing metrics are NaN.
struct RunReport {
    std::vector<std::string> columns;
    std::vector<std::string> run_names;
    std::vector<std::vector<double>> rows;
    std::map<std::string, Summary> aggregate;
};

RunReport aggregate_runs(std::vector<std::string> columns, std::vector<std::string> run_names,
                         std::vector<std::vector<double>> rows);

// One row per run, then a `median` row and a `std` row. Absent values print
// as NA.
void write_report_csv(const std::filesystem::path& path, const RunReport& report);
RunReport read_report_csv(const std::filesystem::path& path);

std::string format_number(double v);

}  // namespace mtunet
