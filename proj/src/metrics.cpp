#include "mtunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "mtunet/errors.hpp"

namespace mtunet {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b)
        throw ShapeError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

double kld_metric(std::span<const double> truth, std::span<const double> pred) {
    require_same_length(truth.size(), pred.size(), "kld");
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        acc += truth[i] * std::log((truth[i] + kKldEpsilon) / (pred[i] + kKldEpsilon));
    return acc;
}

std::optional<double> pcc(std::span<const double> a, std::span<const double> b) {
    require_same_length(a.size(), b.size(), "pcc");
    if (a.size() < 2) return std::nullopt;
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double hs(std::span<const double> truth, std::span<const double> pred) {
    require_same_length(truth.size(), pred.size(), "hs");
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) acc += std::min(truth[i], pred[i]);
    return acc;
}

SaliencyMetrics saliency_metrics(std::span<const double> truth, std::span<const double> pred) {
    return {kld_metric(truth, pred), pcc(truth, pred), hs(truth, pred)};
}

std::size_t argmax(std::span<const double> scores) {
    if (scores.empty()) throw ShapeError("argmax of an empty score vector");
    return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

double accuracy(std::span<const int> labels, const ScoreTable& scores) {
    require_same_length(labels.size(), scores.size(), "accuracy");
    if (labels.empty()) throw Error("accuracy of an empty prediction set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (static_cast<int>(argmax(scores[i])) == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double binary_auc(std::span<const double> positive, std::span<const double> negative) {
    if (positive.empty() || negative.empty()) throw Error("AUC needs samples on both sides");
    struct Item {
        double score;
        bool pos;
    };
    std::vector<Item> items;
    items.reserve(positive.size() + negative.size());
    for (double s : positive) items.push_back({s, true});
    for (double s : negative) items.push_back({s, false});
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

    // Ranks are doubled so midranks stay integral.
    long long rank_sum_x2 = 0;
    std::size_t i = 0;
    while (i < items.size()) {
        std::size_t j = i;
        while (j < items.size() && items[j].score == items[i].score) ++j;
        const long long midrank_x2 = static_cast<long long>(i + 1 + j);  // (i+1)+(j) over tie block
        for (std::size_t k = i; k < j; ++k)
            if (items[k].pos) rank_sum_x2 += midrank_x2;
        i = j;
    }
    const long long n1 = static_cast<long long>(positive.size());
    const long long n0 = static_cast<long long>(negative.size());
    const double u = static_cast<double>(rank_sum_x2 - n1 * (n1 + 1)) / 2.0;
    return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

double auc_one_vs_rest(const ScoreTable& scores, std::span<const int> labels, std::size_t k) {
    require_same_length(labels.size(), scores.size(), "auc_one_vs_rest");
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (k >= scores[i].size()) throw ShapeError("class index out of range for score vector");
        (labels[i] == static_cast<int>(k) ? pos : neg).push_back(scores[i][k]);
    }
    if (pos.empty() || neg.empty())
        throw Error("one-vs-rest AUC for class " + std::to_string(k) + " needs both positive and negative samples");
    return binary_auc(pos, neg);
}

double auc_multiclass(const ScoreTable& scores, std::span<const int> labels, std::size_t num_classes) {
    require_same_length(labels.size(), scores.size(), "auc_multiclass");
    if (num_classes < 2) throw Error("multi-class AUC needs at least two classes");
    std::vector<std::vector<std::size_t>> members(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
            throw Error("label " + std::to_string(labels[i]) + " out of range");
        if (scores[i].size() != num_classes) throw ShapeError("score vector length differs from class count");
        members[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    for (std::size_t c = 0; c < num_classes; ++c)
        if (members[c].empty()) throw Error("multi-class AUC: class " + std::to_string(c) + " has no samples");

    auto conditional = [&](std::size_t i, std::size_t j) {
        std::vector<double> pos, neg;
        for (auto s : members[i]) pos.push_back(scores[s][i]);
        for (auto s : members[j]) neg.push_back(scores[s][i]);
        return binary_auc(pos, neg);
    };
    double acc = 0.0;
    for (std::size_t i = 0; i < num_classes; ++i)
        for (std::size_t j = i + 1; j < num_classes; ++j) acc += (conditional(i, j) + conditional(j, i)) / 2.0;
    const double pairs = static_cast<double>(num_classes * (num_classes - 1)) / 2.0;
    return acc / pairs;
}

ClassMetrics class_metrics(const ScoreTable& scores, std::span<const int> labels, std::size_t num_classes) {
    ClassMetrics m;
    m.acc = accuracy(labels, scores);
    m.auc = auc_multiclass(scores, labels, num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) m.auc_per_class.push_back(auc_one_vs_rest(scores, labels, k));
    return m;
}

Summary summarize(std::span<const double> values) {
    std::vector<double> v;
    for (double x : values)
        if (std::isfinite(x)) v.push_back(x);
    Summary s;
    s.count = v.size();
    if (v.empty()) {
        s.median = s.std = kNaN;
        return s;
    }
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    s.median = n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    s.std = std::sqrt(ss / static_cast<double>(n));
    return s;
}

RunReport aggregate_runs(std::vector<std::string> columns, std::vector<std::string> run_names,
                         std::vector<std::vector<double>> rows) {
    if (rows.empty()) throw Error("aggregate_runs needs at least one run");
    if (run_names.size() != rows.size()) throw ShapeError("run names and rows differ in length");
    for (const auto& r : rows) require_same_length(r.size(), columns.size(), "aggregate_runs");
    RunReport rep;
    rep.columns = std::move(columns);
    rep.run_names = std::move(run_names);
    rep.rows = std::move(rows);
    for (std::size_t c = 0; c < rep.columns.size(); ++c) {
        std::vector<double> col;
        for (const auto& r : rep.rows) col.push_back(r[c]);
        rep.aggregate[rep.columns[c]] = summarize(col);
    }
    return rep;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "NA";
    return fmt::format("{}", v);
}

void write_report_csv(const std::filesystem::path& path, const RunReport& report) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "run";
    for (const auto& c : report.columns) out << ',' << c;
    out << '\n';
    for (std::size_t r = 0; r < report.rows.size(); ++r) {
        out << report.run_names[r];
        for (double v : report.rows[r]) out << ',' << format_number(v);
        out << '\n';
    }
    out << "median";
    for (const auto& c : report.columns) out << ',' << format_number(report.aggregate.at(c).median);
    out << "\nstd";
    for (const auto& c : report.columns) out << ',' << format_number(report.aggregate.at(c).std);
    out << '\n';
}

RunReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty report " + path.string());
    auto header = split(line);
    if (header.empty() || header[0] != "run") throw FormatError("report header must start with 'run'");
    std::vector<std::string> columns(header.begin() + 1, header.end());
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != header.size()) throw FormatError("ragged report row in " + path.string());
        if (cells[0] == "median" || cells[0] == "std") continue;
        std::vector<double> row;
        for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(cells[i] == "NA" ? kNaN : std::stod(cells[i]));
        names.push_back(cells[0]);
        rows.push_back(std::move(row));
    }
    return aggregate_runs(std::move(columns), std::move(names), std::move(rows));
}

}  // namespace mtunet
