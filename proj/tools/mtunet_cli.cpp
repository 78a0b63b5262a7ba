// Command-line harness: generate, train, eval, ablate, sigma-lab.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "mtunet/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mtunet;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
}

void print_error(const char* kind, const std::string& message) {
    std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << std::endl;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            seeds.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw ConfigError("bad seed '" + item + "'");
        }
    }
    return seeds;
}

ProgressFn make_progress(bool quiet, std::string label = {}) {
    if (quiet) return {};
    return [label](const EpochRow& r) {
        fmt::print(stderr, "{}epoch {:3d}  train {:.4f}  val {:.4f} (L_s {:.4f}, L_c {:.4f})  sigma {:.4f}/{:.4f}  lr {:g}{}\n",
                   label, r.epoch, r.train_total, r.val_total, r.val_L_s, r.val_L_c, r.sigma_s, r.sigma_c, r.lr,
                   r.rollback ? "  [rollback]" : "");
    };
}

struct TrainFlags {
    std::string config, dataset, out, scheme, variant;
    std::optional<std::uint64_t> seed, split_seed;
    std::optional<double> lr;
    std::optional<int> patience, max_epochs, max_reductions;
    std::optional<std::size_t> batch_size;
    bool quiet = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config, "Flat JSON train config");
        cmd->add_option("--dataset", dataset, "Dataset directory");
        cmd->add_option("--out", out, "Output directory");
        cmd->add_option("--seed", seed, "Run seed");
        cmd->add_option("--split-seed", split_seed, "Seed for the stratified split");
        cmd->add_option("--scheme", scheme, "MTLS1, MTLS2 or MTLS3");
        cmd->add_option("--variant", variant, "MT, MT-B, MT-T, UNET-S or UNET-C");
        cmd->add_option("--lr", lr, "Base learning rate");
        cmd->add_option("--patience", patience, "RLRP patience in epochs");
        cmd->add_option("--batch-size", batch_size);
        cmd->add_option("--max-epochs", max_epochs);
        cmd->add_option("--max-reductions", max_reductions, "Stop after this many RLRP reductions (0 = never)");
        cmd->add_flag("--quiet", quiet, "No per-epoch progress");
    }

    TrainConfig resolve() const {
        json j = config.empty() ? json::object() : read_json_file(config);
        if (!dataset.empty()) j["dataset"] = dataset;
        if (!out.empty()) j["output_dir"] = out;
        if (seed) j["seed"] = *seed;
        if (split_seed) j["split_seed"] = *split_seed;
        if (!scheme.empty()) j["scheme"] = scheme;
        if (!variant.empty()) j["variant"] = variant;
        if (lr) j["lr"] = *lr;
        if (patience) j["patience"] = *patience;
        if (batch_size) j["batch_size"] = *batch_size;
        if (max_epochs) j["max_epochs"] = *max_epochs;
        if (max_reductions) j["max_reductions"] = *max_reductions;
        return train_config_from_json(j);
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-task UNet laboratory: synthetic data, training, evaluation, ablations, sigma dynamics"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a synthetic dual-task dataset");
    std::string gen_config, gen_out;
    std::optional<std::uint64_t> gen_seed;
    std::optional<std::size_t> gen_per_class, gen_size;
    std::optional<double> gen_noise, gen_spread;
    gen->add_option("--config", gen_config, "JSON synth config");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_seed);
    gen->add_option("--samples-per-class", gen_per_class);
    gen->add_option("--size", gen_size, "Image height and width");
    gen->add_option("--noise", gen_noise, "Background noise amplitude");
    gen->add_option("--spread", gen_spread, "Saliency Gaussian spread in pixels");

    // train
    auto* tr = app.add_subcommand("train", "Train one model");
    TrainFlags train_flags;
    train_flags.attach(tr);

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint.json")->required();
    ev->add_option("--dataset", ev_data, "Dataset directory")->required();
    ev->add_option("--split", ev_split, "train, val, test or all");
    ev->add_option("--out", ev_out, "Metrics CSV path");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Scheme and head ablation over several seeds");
    TrainFlags ablate_flags;
    ablate_flags.attach(ab);
    std::string ab_seeds = "1,2,3,4,5", ab_entries;
    ab->add_option("--seeds", ab_seeds, "Comma-separated seeds");
    ab->add_option("--configs", ab_entries, "Comma-separated subset of configuration names");

    // sigma-lab
    auto* sl = app.add_subcommand("sigma-lab", "Sigma dynamics under a scripted loss schedule");
    std::string sl_config, sl_schedule = "0.5:3000,0.25:3000,0.1:3000,0.05:3000", sl_scheme = "MTLS1",
                           sl_task = "s", sl_out;
    double sl_sigma0 = 1.0, sl_step = 0.05, sl_lr = 1e-3;
    sl->add_option("--config", sl_config, "JSON with schedule, sigma0, step, scheme, task, lr");
    sl->add_option("--schedule", sl_schedule, "LOSS:STEPS,LOSS:STEPS,...");
    sl->add_option("--sigma0", sl_sigma0);
    sl->add_option("--step", sl_step, "Gradient-descent step on sigma");
    sl->add_option("--scheme", sl_scheme);
    sl->add_option("--task", sl_task, "s (saliency) or c (classification)");
    sl->add_option("--lr", sl_lr, "Base learning rate for r_eff");
    sl->add_option("--out", sl_out, "Trajectory CSV path")->required();
    std::optional<std::uint64_t> sl_seed;
    sl->add_option("--seed", sl_seed, "Accepted for interface symmetry; the lab is deterministic");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return 2;
    }

    try {
        if (gen->parsed()) {
            SynthConfig cfg = gen_config.empty() ? SynthConfig{} : synth_config_from_json(read_json_file(gen_config));
            if (gen_seed) cfg.seed = *gen_seed;
            if (gen_per_class) cfg.samples_per_class = *gen_per_class;
            if (gen_size) cfg.height = cfg.width = *gen_size;
            if (gen_noise) cfg.noise = *gen_noise;
            if (gen_spread) cfg.blob_spread = *gen_spread;
            const Dataset d = generate(cfg);
            save_dataset(d, gen_out, {{"generator", "synthetic"}, {"config", to_json(cfg)}});
            std::cout << json{{"dataset", gen_out}, {"samples", d.size()}}.dump() << std::endl;
        } else if (tr->parsed()) {
            const TrainConfig cfg = train_flags.resolve();
            const TrainResult res = cmd_train(cfg, make_progress(train_flags.quiet));
            const auto row = metric_row(res.test, cfg.model.num_classes);
            const auto cols = metric_columns(cfg.model.num_classes);
            json summary = {{"output_dir", cfg.output_dir.string()}, {"best_epoch", res.best.epoch}};
            for (std::size_t i = 0; i < cols.size(); ++i)
                summary["test"][cols[i]] = std::isnan(row[i]) ? json(nullptr) : json(row[i]);
            std::cout << summary.dump() << std::endl;
        } else if (ev->parsed()) {
            const EvalReport rep = cmd_eval(ev_ckpt, ev_data, parse_split(ev_split), ev_out);
            const auto loaded = load_checkpoint(ev_ckpt);
            const std::size_t classes = train_config_from_json(loaded.meta.at("train_config")).model.num_classes;
            const auto row = metric_row(rep, classes);
            const auto cols = metric_columns(classes);
            json summary = {{"split", ev_split}, {"samples", rep.samples}};
            for (std::size_t i = 0; i < cols.size(); ++i)
                summary["metrics"][cols[i]] = std::isnan(row[i]) ? json(nullptr) : json(row[i]);
            std::cout << summary.dump() << std::endl;
        } else if (ab->parsed()) {
            const TrainConfig base = ablate_flags.resolve();
            if (base.output_dir.empty()) throw ConfigError("ablate needs --out");
            const auto seeds = parse_seeds(ab_seeds);
            if (seeds.size() < 5)
                fmt::print(stderr, "warning: {} seed(s); at least 5 are recommended for median/std reporting\n",
                           seeds.size());
            std::vector<AblationEntry> entries = default_ablation();
            if (!ab_entries.empty()) {
                std::vector<AblationEntry> picked;
                std::stringstream ss(ab_entries);
                std::string name;
                while (std::getline(ss, name, ',')) {
                    auto it = std::find_if(entries.begin(), entries.end(),
                                           [&](const AblationEntry& e) { return e.name == name; });
                    if (it == entries.end()) throw ConfigError("unknown ablation configuration '" + name + "'");
                    picked.push_back(*it);
                }
                entries = picked;
            }
            cmd_ablate(base, seeds, base.output_dir, entries, make_progress(ablate_flags.quiet));
            std::cout << json{{"table", (base.output_dir / "ablation_table.csv").string()}}.dump() << std::endl;
        } else if (sl->parsed()) {
            if (!sl_config.empty()) {
                const json j = read_json_file(sl_config);
                sl_schedule = j.value("schedule", sl_schedule);
                sl_sigma0 = j.value("sigma0", sl_sigma0);
                sl_step = j.value("step", sl_step);
                sl_scheme = j.value("scheme", sl_scheme);
                sl_task = j.value("task", sl_task);
                sl_lr = j.value("lr", sl_lr);
            }
            Task task;
            if (sl_task == "s" || sl_task == "saliency")
                task = Task::Saliency;
            else if (sl_task == "c" || sl_task == "classification")
                task = Task::Classification;
            else
                throw ConfigError("task must be s or c");
            const auto rows =
                cmd_sigma_lab(parse_schedule(sl_schedule), sl_sigma0, sl_step, parse_scheme(sl_scheme), task, sl_lr);
            write_sigma_lab_csv(sl_out, rows);
            std::cout << json{{"rows", rows.size()}, {"final_sigma", rows.back().sigma}}.dump() << std::endl;
        }
    } catch (const Error& e) {
        print_error(e.kind(), e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 1;
    }
    return 0;
}
