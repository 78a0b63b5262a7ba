#include "mtunet/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "mtunet/optim.hpp"

namespace mtunet {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
    model.validate();
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (max_reductions < 0) throw ConfigError("max_reductions must be >= 0");
}

json to_json(const TrainConfig& c) {
    json j = to_json(c.model);
    j["scheme"] = std::string(to_string(c.scheme));
    j["lr"] = c.lr;
    j["patience"] = c.patience;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["seed"] = c.seed;
    j["split_seed"] = c.split_seed;
    j["max_reductions"] = c.max_reductions;
    j["dataset"] = c.dataset.string();
    j["output_dir"] = c.output_dir.string();
    return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    static const std::set<std::string> model_keys = {"height",      "width",        "depth",      "base_features",
                                                     "num_classes", "variant",      "dropout_rate", "head_hidden"};
    static const std::set<std::string> train_keys = {"scheme",     "lr",   "patience",   "batch_size",
                                                     "max_epochs", "seed", "split_seed", "max_reductions",
                                                     "dataset",    "output_dir"};
    json model = to_json(base.model);
    try {
        for (const auto& [key, value] : j.items()) {
            if (model_keys.count(key)) {
                model[key] = value;
            } else if (key == "scheme") {
                base.scheme = parse_scheme(value.get<std::string>());
            } else if (key == "lr") {
                base.lr = value.get<double>();
            } else if (key == "patience") {
                base.patience = value.get<int>();
            } else if (key == "batch_size") {
                base.batch_size = value.get<std::size_t>();
            } else if (key == "max_epochs") {
                base.max_epochs = value.get<int>();
            } else if (key == "seed") {
                base.seed = value.get<std::uint64_t>();
            } else if (key == "split_seed") {
                base.split_seed = value.get<std::uint64_t>();
            } else if (key == "max_reductions") {
                base.max_reductions = value.get<int>();
            } else if (key == "dataset") {
                base.dataset = value.get<std::string>();
            } else if (key == "output_dir") {
                base.output_dir = value.get<std::string>();
            } else if (!train_keys.count(key)) {
                throw ConfigError("unknown config key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad train config: ") + e.what());
    }
    base.model = model_config_from_json(model);
    return base;
}

// ---------------------------------------------------------------------------
// Training log

const std::vector<std::string> kLogColumns = {"epoch",  "train_L_s", "train_L_c", "train_total", "val_L_s",
                                              "val_L_c", "val_total", "sigma_s",   "sigma_c",     "lr",
                                              "r_eff_s", "r_eff_c",   "rollback"};

void write_log_csv(const fs::path& path, const TrainingLog& log) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (std::size_t i = 0; i < kLogColumns.size(); ++i) out << (i ? "," : "") << kLogColumns[i];
    out << '\n';
    for (const auto& r : log.rows) {
        out << r.epoch;
        for (double v : {r.train_L_s, r.train_L_c, r.train_total, r.val_L_s, r.val_L_c, r.val_total, r.sigma_s,
                         r.sigma_c, r.lr, r.r_eff_s, r.r_eff_c})
            out << ',' << format_number(v);
        out << ',' << (r.rollback ? 1 : 0) << '\n';
    }
}

TrainingLog read_log_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    std::string expected;
    for (std::size_t i = 0; i < kLogColumns.size(); ++i) expected += (i ? "," : "") + kLogColumns[i];
    if (line != expected) throw FormatError("unexpected training log header in " + path.string());
    TrainingLog log;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != kLogColumns.size()) throw FormatError("ragged training log row");
        EpochRow r;
        r.epoch = std::stoi(cells[0]);
        double* fields[] = {&r.train_L_s, &r.train_L_c, &r.train_total, &r.val_L_s, &r.val_L_c, &r.val_total,
                            &r.sigma_s,   &r.sigma_c,   &r.lr,          &r.r_eff_s, &r.r_eff_c};
        for (std::size_t i = 0; i < 11; ++i) *fields[i] = std::stod(cells[i + 1]);
        r.rollback = cells[12] == "1";
        log.rows.push_back(r);
    }
    return log;
}

// ---------------------------------------------------------------------------
// Evaluation

ParamRefs<float> TrainState::trainable(Scheme scheme) {
    ParamRefs<float> out = model.parameters();
    if (is_multitask(model.config().variant)) {
        if (scales_saliency(scheme)) out.push_back(&sigma_s);
        if (scales_class(scheme)) out.push_back(&sigma_c);
    }
    return out;
}

ParamRefs<float> TrainState::all() {
    ParamRefs<float> out = model.parameters();
    out.push_back(&sigma_s);
    out.push_back(&sigma_c);
    return out;
}

namespace {

Tensor<float> one_hot(int label, std::size_t classes) {
    Tensor<float> t({classes});
    t[static_cast<std::size_t>(label)] = 1.0f;
    return t;
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

// Single-task variants train on their own loss alone; sigmas stay at 1.
LossBreakdown combine(Scheme scheme, Variant variant, double ls, double lc, double sigma_s, double sigma_c,
                      double lr) {
    if (is_multitask(variant)) return scheme_total(scheme, ls, lc, sigma_s, sigma_c, lr);
    LossBreakdown b;
    b.saliency = ls;
    b.classification = lc;
    b.total = ls + lc;
    b.r_eff_s = b.r_eff_c = lr;
    return b;
}

std::vector<std::size_t> split_indices(const Split& s, SplitName which, std::size_t n) {
    switch (which) {
        case SplitName::Train: return s.train;
        case SplitName::Val: return s.val;
        case SplitName::Test: return s.test;
        case SplitName::All: {
            std::vector<std::size_t> all(n);
            std::iota(all.begin(), all.end(), std::size_t{0});
            return all;
        }
    }
    return {};
}

void check_compatible(const ModelConfig& m, const Dataset& d) {
    if (m.height != d.height || m.width != d.width)
        throw ConfigError(fmt::format("model expects {}x{} inputs, dataset holds {}x{}", m.height, m.width, d.height,
                                      d.width));
    if (m.num_classes != d.num_classes)
        throw ConfigError(fmt::format("model has {} classes, dataset has {}", m.num_classes, d.num_classes));
}

}  // namespace

EvalReport evaluate(TrainState& state, Scheme scheme, const Dataset& data, const std::vector<std::size_t>& indices,
                    double lr) {
    if (indices.empty()) throw Error("cannot evaluate an empty split");
    const auto& cfg = state.model.config();
    EvalReport rep;
    rep.samples = indices.size();
    double ls = 0.0, lc = 0.0;
    double kld = 0.0, hs_sum = 0.0, pcc_sum = 0.0;
    std::size_t pcc_n = 0;
    ScoreTable scores;
    std::vector<int> labels;
    for (std::size_t idx : indices) {
        const Sample& s = data.samples.at(idx);
        const auto out = state.model.forward(s.image);
        if (out.saliency) {
            ls += saliency_loss<float>(s.saliency.data(), out.saliency->data());
            const auto truth = to_double(s.saliency.data());
            const auto pred = to_double(out.saliency->data());
            const auto m = saliency_metrics(truth, pred);
            kld += m.kld;
            hs_sum += m.hs;
            if (m.pcc) {
                pcc_sum += *m.pcc;
                ++pcc_n;
            }
        }
        if (out.classes) {
            const auto target = one_hot(s.label, cfg.num_classes);
            lc += classification_loss<float>(target.data(), out.classes->data());
            scores.push_back(to_double(out.classes->data()));
            labels.push_back(s.label);
        }
    }
    const double n = static_cast<double>(indices.size());
    rep.loss = combine(scheme, cfg.variant, ls / n, lc / n, state.sigma_s.value[0], state.sigma_c.value[0], lr);
    if (has_saliency_head(cfg.variant))
        rep.saliency = SaliencyMetrics{kld / n, pcc_n ? std::optional<double>(pcc_sum / static_cast<double>(pcc_n))
                                                      : std::nullopt,
                                       hs_sum / n};
    if (has_class_head(cfg.variant)) {
        ClassMetrics cm;
        cm.acc = accuracy(labels, scores);
        // AUCs need every class on both sides; leave them NaN otherwise.
        try {
            cm.auc = auc_multiclass(scores, labels, cfg.num_classes);
        } catch (const Error&) {
            cm.auc = std::numeric_limits<double>::quiet_NaN();
        }
        for (std::size_t k = 0; k < cfg.num_classes; ++k) {
            try {
                cm.auc_per_class.push_back(auc_one_vs_rest(scores, labels, k));
            } catch (const Error&) {
                cm.auc_per_class.push_back(std::numeric_limits<double>::quiet_NaN());
            }
        }
        rep.classes = cm;
    }
    return rep;
}

std::vector<std::string> metric_columns(std::size_t num_classes) {
    std::vector<std::string> cols = {"kld", "pcc", "hs", "acc", "auc"};
    for (std::size_t k = 1; k <= num_classes; ++k) cols.push_back("auc_y" + std::to_string(k));
    cols.push_back("test_total");
    return cols;
}

std::vector<double> metric_row(const EvalReport& r, std::size_t num_classes) {
    constexpr double na = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> row;
    if (r.saliency) {
        row.push_back(r.saliency->kld);
        row.push_back(r.saliency->pcc.value_or(na));
        row.push_back(r.saliency->hs);
    } else {
        row.insert(row.end(), 3, na);
    }
    if (r.classes) {
        row.push_back(r.classes->acc);
        row.push_back(r.classes->auc);
        for (std::size_t k = 0; k < num_classes; ++k)
            row.push_back(k < r.classes->auc_per_class.size() ? r.classes->auc_per_class[k] : na);
    } else {
        row.insert(row.end(), 2 + num_classes, na);
    }
    row.push_back(r.loss.total);
    return row;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(const TrainConfig& config, const Dataset& data, const ProgressFn& progress) {
    const auto started = std::chrono::steady_clock::now();
    config.validate();
    check_compatible(config.model, data);
    const Variant variant = config.model.variant;
    const Scheme scheme = config.scheme;

    SeededRng init_rng(SeededRng::derive(config.seed, 1));
    SeededRng shuffle_rng(SeededRng::derive(config.seed, 2));
    SeededRng dropout_rng(SeededRng::derive(config.seed, 3));

    TrainState state{Model<float>::build(config.model, init_rng)};
    const Split split = stratified_split(data, {0.7, 0.1, 0.2, config.split_seed});
    if (split.train.empty() || split.val.empty() || split.test.empty())
        throw ConfigError("dataset too small for a train/val/test split");

    Adam<float> adam(config.lr);
    RlrpConfig rcfg;
    rcfg.patience = config.patience;
    RlrpScheduler<float> scheduler(rcfg);

    const bool want_s = has_saliency_head(variant);
    const bool want_c = has_class_head(variant);
    const bool multitask = is_multitask(variant);

    TrainResult result;
    std::vector<std::size_t> order = split.train;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        const double lr_used = adam.lr();
        double sum_s = 0.0, sum_c = 0.0, sum_total = 0.0;
        auto params = state.trainable(scheme);

        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const float inv_batch = 1.0f / static_cast<float>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const Sample& s = data.samples[order[i]];
                Tape<float> tape;
                ForwardOptions opts;
                opts.train = true;
                opts.rng = &dropout_rng;
                const auto g = state.model.forward_graph(tape, tape.constant(s.image), opts);

                Var<float> ls = tape.constant(Tensor<float>::scalar(0.0f));
                Var<float> lc = ls;
                if (want_s) {
                    const float h_truth = static_cast<float>(entropy<float>(s.saliency.data()));
                    ls = add_scalar(cross_entropy(s.saliency, *g.saliency), -h_truth);
                }
                if (want_c) lc = cross_entropy(one_hot(s.label, config.model.num_classes), *g.classes);

                Var<float> total = add(ls, lc);
                if (multitask) {
                    auto bind_sigma = [&](Parameter<float>& p, bool scaled) {
                        return scaled ? tape.param(p) : tape.constant(p.value);
                    };
                    total = scheme_total_graph(scheme, ls, lc, bind_sigma(state.sigma_s, scales_saliency(scheme)),
                                               bind_sigma(state.sigma_c, scales_class(scheme)));
                }
                sum_s += ls.value()[0];
                sum_c += lc.value()[0];
                sum_total += total.value()[0];
                tape.backward(total, inv_batch);
            }
            adam.step(params);
            for (auto* sigma : {&state.sigma_s, &state.sigma_c})
                sigma->value[0] = std::max(sigma->value[0], static_cast<float>(kSigmaFloor));
        }

        const double n_train = static_cast<double>(order.size());
        const EvalReport val = evaluate(state, scheme, data, split.val, lr_used);
        EpochRow row;
        row.epoch = epoch;
        row.train_L_s = sum_s / n_train;
        row.train_L_c = sum_c / n_train;
        row.train_total = sum_total / n_train;
        row.val_L_s = val.loss.saliency;
        row.val_L_c = val.loss.classification;
        row.val_total = val.loss.total;
        row.sigma_s = state.sigma_s.value[0];
        row.sigma_c = state.sigma_c.value[0];
        row.lr = lr_used;
        row.r_eff_s = val.loss.r_eff_s;
        row.r_eff_c = val.loss.r_eff_c;
        row.rollback = scheduler.observe(epoch, val.loss.total, state.all(), adam) == RlrpAction::ReduceAndRollback;
        result.log.rows.push_back(row);
        if (progress) progress(row);
        if (config.max_reductions > 0 && scheduler.reductions() >= config.max_reductions) break;
    }

    if (scheduler.best_checkpoint()) {
        result.best = *scheduler.best_checkpoint();
        restore(state.all(), result.best);
    } else {
        result.best = snapshot(state.all());
    }
    result.final_val = evaluate(state, scheme, data, split.val, adam.lr());
    result.test = evaluate(state, scheme, data, split.test, adam.lr());
    result.state = std::move(state);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

namespace {

void write_metrics_csv(const fs::path& path, const std::string& run, const EvalReport& rep, std::size_t classes) {
    write_report_csv(path, aggregate_runs(metric_columns(classes), {run}, {metric_row(rep, classes)}));
}

}  // namespace

TrainResult cmd_train(const TrainConfig& config, const ProgressFn& progress) {
    config.validate();
    if (config.dataset.empty()) throw ConfigError("train config needs a dataset path");
    if (config.output_dir.empty()) throw ConfigError("train config needs an output_dir");
    const Dataset data = load_dataset(config.dataset);
    TrainResult res = train(config, data, progress);

    fs::create_directories(config.output_dir);
    write_log_csv(config.output_dir / "train_log.csv", res.log);
    save_checkpoint(config.output_dir / "checkpoint.json", res.best, {{"train_config", to_json(config)}});
    write_metrics_csv(config.output_dir / "metrics.csv", "seed_" + std::to_string(config.seed), res.test,
                      config.model.num_classes);
    json summary = {{"config", to_json(config)},
                    {"log_schema", TrainingLog::kSchemaVersion},
                    {"epochs_run", res.log.rows.size()},
                    {"seconds", res.seconds},
                    {"best_epoch", res.best.epoch},
                    {"best_val_total", res.best.val_loss},
                    {"parameter_count", res.state.model.parameter_count()}};
    std::ofstream(config.output_dir / "run.json") << summary.dump(2) << '\n';
    return res;
}

SplitName parse_split(std::string_view name) {
    if (name == "train") return SplitName::Train;
    if (name == "val") return SplitName::Val;
    if (name == "test") return SplitName::Test;
    if (name == "all") return SplitName::All;
    throw ConfigError("unknown split '" + std::string(name) + "' (expected train, val, test, all)");
}

EvalReport cmd_eval(const fs::path& checkpoint, const fs::path& dataset, SplitName split, const fs::path& out_csv) {
    const auto loaded = load_checkpoint(checkpoint);
    if (!loaded.meta.contains("train_config")) throw FormatError("checkpoint lacks its train_config");
    const TrainConfig cfg = train_config_from_json(loaded.meta.at("train_config"));
    const Dataset data = load_dataset(dataset);
    check_compatible(cfg.model, data);

    SeededRng rng(0);
    TrainState state{Model<float>::build(cfg.model, rng)};
    restore(state.all(), loaded.checkpoint);

    const Split s = stratified_split(data, {0.7, 0.1, 0.2, cfg.split_seed});
    const auto indices = split_indices(s, split, data.size());
    EvalReport rep = evaluate(state, cfg.scheme, data, indices);
    if (!out_csv.empty()) {
        if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
        write_metrics_csv(out_csv, "eval", rep, cfg.model.num_classes);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<AblationEntry> default_ablation() {
    return {{"MTLS1-MT", Scheme::MTLS1, Variant::MT},         {"MTLS2-MT", Scheme::MTLS2, Variant::MT},
            {"MTLS3-MT", Scheme::MTLS3, Variant::MT},         {"MTLS3-MT-B", Scheme::MTLS3, Variant::MT_B},
            {"MTLS3-MT-T", Scheme::MTLS3, Variant::MT_T},     {"MTLS3-UNET-S", Scheme::MTLS3, Variant::UNET_S},
            {"MTLS3-UNET-C", Scheme::MTLS3, Variant::UNET_C}};
}

AblationResult cmd_ablate(const TrainConfig& base, const std::vector<std::uint64_t>& seeds, const fs::path& out_dir,
                          std::vector<AblationEntry> entries, const ProgressFn& progress) {
    if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
    if (entries.empty()) throw ConfigError("ablation needs at least one configuration");
    base.validate();
    const Dataset data = load_dataset(base.dataset);
    const std::size_t classes = base.model.num_classes;

    AblationResult result;
    result.entries = entries;
    for (const auto& entry : entries) {
        std::vector<std::string> names;
        std::vector<std::vector<double>> rows;
        auto& logs = result.logs.emplace_back();
        auto& seconds = result.seconds.emplace_back();
        for (auto seed : seeds) {
            TrainConfig cfg = base;
            cfg.scheme = entry.scheme;
            cfg.model.variant = entry.variant;
            cfg.seed = seed;
            cfg.output_dir = out_dir / entry.name / ("seed_" + std::to_string(seed));
            TrainResult res = train(cfg, data, progress);
            fs::create_directories(cfg.output_dir);
            write_log_csv(cfg.output_dir / "train_log.csv", res.log);
            save_checkpoint(cfg.output_dir / "checkpoint.json", res.best, {{"train_config", to_json(cfg)}});
            write_metrics_csv(cfg.output_dir / "metrics.csv", "seed_" + std::to_string(seed), res.test, classes);
            names.push_back("seed_" + std::to_string(seed));
            rows.push_back(metric_row(res.test, classes));
            logs.push_back(std::move(res.log));
            seconds.push_back(res.seconds);
        }
        result.reports.push_back(aggregate_runs(metric_columns(classes), std::move(names), std::move(rows)));
        fs::create_directories(out_dir / entry.name);
        write_report_csv(out_dir / entry.name / "report.csv", result.reports.back());
    }
    write_ablation_table(out_dir / "ablation_table.csv", result);
    return result;
}

void write_ablation_table(const fs::path& path, const AblationResult& result) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "metric";
    for (const auto& e : result.entries) out << ',' << e.name;
    out << '\n';
    if (result.reports.empty()) return;
    for (const auto& col : result.reports.front().columns) {
        out << col;
        for (const auto& rep : result.reports) {
            const Summary& s = rep.aggregate.at(col);
            if (std::isnan(s.median))
                out << ",NA";
            else
                out << ',' << format_number(s.median) << "±" << format_number(s.std);
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Sigma lab

std::vector<LossPhase> parse_schedule(std::string_view text) {
    std::vector<LossPhase> phases;
    std::stringstream ss{std::string(text)};
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("schedule entries must look like LOSS:STEPS, got '" + item + "'");
        LossPhase p;
        try {
            p.loss = std::stod(item.substr(0, colon));
            p.steps = std::stoul(item.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("cannot parse schedule entry '" + item + "'");
        }
        if (!(p.loss > 0.0) || p.steps == 0) throw ConfigError("schedule phases need loss > 0 and steps > 0");
        phases.push_back(p);
    }
    if (phases.empty()) throw ConfigError("empty loss schedule");
    return phases;
}

std::vector<SigmaLabRow> cmd_sigma_lab(const std::vector<LossPhase>& schedule, double sigma0, double step,
                                       Scheme scheme, Task task, double lr) {
    if (schedule.empty()) throw ConfigError("empty loss schedule");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    const bool scaled = task == Task::Saliency ? scales_saliency(scheme) : scales_class(scheme);

    std::vector<double> losses;
    std::vector<std::size_t> phase_of;
    for (std::size_t p = 0; p < schedule.size(); ++p)
        for (std::size_t i = 0; i < schedule[p].steps; ++i) {
            losses.push_back(schedule[p].loss);
            phase_of.push_back(p);
        }

    std::vector<double> trace;
    if (scaled) {
        trace = sigma_descent_trace(losses, sigma0, step);
    } else {
        trace.assign(losses.size() + 1, 1.0);
    }

    std::vector<SigmaLabRow> rows;
    rows.reserve(losses.size());
    for (std::size_t t = 0; t < losses.size(); ++t) {
        SigmaLabRow r;
        r.t = t + 1;
        r.phase = phase_of[t];
        r.loss = losses[t];
        r.sigma = trace[t + 1];
        r.equilibrium = scaled ? equilibrium_inverse(losses[t]) : 1.0;
        r.r_eff = scaled ? lr / (r.sigma * r.sigma) : lr;
        rows.push_back(r);
    }
    return rows;
}

void write_sigma_lab_csv(const fs::path& path, const std::vector<SigmaLabRow>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "t,phase,L,sigma,equilibrium,r_eff\n";
    for (const auto& r : rows)
        out << r.t << ',' << r.phase << ',' << format_number(r.loss) << ',' << format_number(r.sigma) << ','
            << format_number(r.equilibrium) << ',' << format_number(r.r_eff) << '\n';
}

}  // namespace mtunet
