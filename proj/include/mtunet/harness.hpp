#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtunet/checkpoint.hpp"
#include "mtunet/data.hpp"
#include "mtunet/losses.hpp"
#include "mtunet/metrics.hpp"
#include "mtunet/model.hpp"

namespace mtunet {

struct TrainConfig {
    ModelConfig model;
    Scheme scheme = Scheme::MTLS3;
    double lr = 1e-3;
    int patience = 10;
    std::size_t batch_size = 16;
    int max_epochs = 150;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    // Stop once the scheduler has fired this many times; 0 disables.
    int max_reductions = 0;
    std::filesystem::path dataset;
    std::filesystem::path output_dir;

    void validate() const;
};

// Flat key/value form; model fields sit at the top level next to the
// training fields.
nlohmann::json to_json(const TrainConfig& c);
// Overlays keys from `j` onto `base`. Unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

inline bool is_multitask(Variant v) { return has_saliency_head(v) && has_class_head(v); }

struct EpochRow {
    int epoch = 0;
    double train_L_s = 0, train_L_c = 0, train_total = 0;
    double val_L_s = 0, val_L_c = 0, val_total = 0;
    double sigma_s = 1, sigma_c = 1;
    double lr = 0;
    double r_eff_s = 0, r_eff_c = 0;
    bool rollback = false;

    bool operator==(const EpochRow&) const = default;
};

struct TrainingLog {
    static constexpr int kSchemaVersion = 1;
    std::vector<EpochRow> rows;
    bool operator==(const TrainingLog&) const = default;
};

extern const std::vector<std::string> kLogColumns;

void write_log_csv(const std::filesystem::path& path, const TrainingLog& log);
TrainingLog read_log_csv(const std::filesystem::path& path);

struct EvalReport {
    std::size_t samples = 0;
    LossBreakdown loss;  // mean component losses and the scheme total
    std::optional<SaliencyMetrics> saliency;  // per-sample means
    std::optional<ClassMetrics> classes;
};

std::vector<std::string> metric_columns(std::size_t num_classes);
// Row aligned with metric_columns; absent metrics are NaN.
std::vector<double> metric_row(const EvalReport& r, std::size_t num_classes);

// Trainable state of one run: the network plus both uncertainty scalars.
struct TrainState {
    Model<float> model;
    Parameter<float> sigma_s{"sigma_s", Tensor<float>::scalar(1.0f)};
    Parameter<float> sigma_c{"sigma_c", Tensor<float>::scalar(1.0f)};

    // Parameters the optimizer updates under `scheme`.
    ParamRefs<float> trainable(Scheme scheme);
    // Network weights plus both sigmas, for checkpoints.
    ParamRefs<float> all();
};

EvalReport evaluate(TrainState& state, Scheme scheme, const Dataset& data, const std::vector<std::size_t>& indices,
                    double lr = 1.0);

struct TrainResult {
    TrainingLog log;
    Checkpoint<float> best;
    EvalReport test;
    EvalReport final_val;
    TrainState state;  // restored to the best checkpoint
    double seconds = 0;  // wall clock, including the final evaluations
};

using ProgressFn = std::function<void(const EpochRow&)>;

// In-memory training run. Deterministic in (config, dataset).
TrainResult train(const TrainConfig& config, const Dataset& data, const ProgressFn& progress = {});

// Loads config.dataset, trains, and writes train_log.csv, checkpoint.json/.bin,
// metrics.csv and run.json into config.output_dir.
TrainResult cmd_train(const TrainConfig& config, const ProgressFn& progress = {});

enum class SplitName { Train, Val, Test, All };
SplitName parse_split(std::string_view name);

// Evaluates a checkpoint on one split of a dataset and writes a metrics CSV.
EvalReport cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset, SplitName split,
                    const std::filesystem::path& out_csv);

struct AblationEntry {
    std::string name;
    Scheme scheme;
    Variant variant;
};

// MTLS1/2/3 on MT, then MTLS3 on MT-B, MT-T, UNET-S, UNET-C.
std::vector<AblationEntry> default_ablation();

struct AblationResult {
    std::vector<AblationEntry> entries;
    std::vector<RunReport> reports;  // one per entry, rows are seeds
    std::vector<std::vector<TrainingLog>> logs;  // [entry][seed]
    std::vector<std::vector<double>> seconds;    // [entry][seed]
};

// Runs every (entry, seed) pair and writes per-run outputs under
// out_dir/<entry>/seed_<s>/, a report.csv per entry and ablation_table.csv
// (one row per metric, one median±std column per entry).
AblationResult cmd_ablate(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                          const std::filesystem::path& out_dir, std::vector<AblationEntry> entries = default_ablation(),
                          const ProgressFn& progress = {});

void write_ablation_table(const std::filesystem::path& path, const AblationResult& result);

struct LossPhase {
    double loss = 0;
    std::size_t steps = 0;
};

// Parses "L:steps,L:steps,...".
std::vector<LossPhase> parse_schedule(std::string_view text);

enum class Task { Saliency, Classification };

struct SigmaLabRow {
    std::size_t t = 0;
    std::size_t phase = 0;
    double loss = 0;
    double sigma = 1;
    double equilibrium = 1;
    double r_eff = 0;
};

// Drives the chosen task's sigma by gradient descent through the scripted
// loss schedule. A task the scheme leaves unscaled keeps sigma = 1.
std::vector<SigmaLabRow> cmd_sigma_lab(const std::vector<LossPhase>& schedule, double sigma0, double step,
                                       Scheme scheme, Task task, double lr);

void write_sigma_lab_csv(const std::filesystem::path& path, const std::vector<SigmaLabRow>& rows);

}  // namespace mtunet
