#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtunet/harness.hpp"

using namespace mtunet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("mtunet_test_" + name);
    fs::remove_all(p);
    return p;
}

SynthConfig toy_synth() {
    SynthConfig s;
    s.height = s.width = 16;
    s.samples_per_class = 10;
    s.blob_spread = 2.0;
    s.seed = 3;
    return s;
}

const Dataset& toy_data() {
    static const Dataset d = generate(toy_synth());
    return d;
}

TrainConfig toy_config(Scheme scheme = Scheme::MTLS1, Variant variant = Variant::MT) {
    TrainConfig c;
    c.model.height = c.model.width = 16;
    c.model.depth = 2;
    c.model.base_features = 4;
    c.model.head_hidden = 8;
    c.model.variant = variant;
    c.scheme = scheme;
    c.lr = 3e-3;
    c.batch_size = 4;
    c.max_epochs = 4;
    c.patience = 2;
    c.seed = 1;
    return c;
}

fs::path toy_dataset_dir() {
    static const fs::path dir = [] {
        auto d = temp_dir("harness_data");
        save_dataset(toy_data(), d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("train config json round trip and validation") {
    TrainConfig c = toy_config(Scheme::MTLS2, Variant::MT_T);
    c.dataset = "some/data";
    c.output_dir = "out";
    c.max_reductions = 2;
    const TrainConfig back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.model == c.model);
    CHECK(back.scheme == Scheme::MTLS2);

    CHECK_THROWS_AS(train_config_from_json({{"learning_rate", 0.1}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"lr", "fast"}}), ConfigError);
    TrainConfig bad = toy_config();
    bad.lr = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = toy_config();
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = toy_config();
    bad.max_epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("scheme structure shows in the sigma columns") {
    const auto mtls3 = train(toy_config(Scheme::MTLS3), toy_data());
    for (const auto& r : mtls3.log.rows) CHECK(r.sigma_s == 1.0);
    const auto mtls2 = train(toy_config(Scheme::MTLS2), toy_data());
    for (const auto& r : mtls2.log.rows) CHECK(r.sigma_c == 1.0);
    const auto mtls1 = train(toy_config(Scheme::MTLS1), toy_data());
    CHECK(mtls1.log.rows.back().sigma_s != 1.0);
    CHECK(mtls1.log.rows.back().sigma_c != 1.0);
}

TEST_CASE("log rows are consistent with the scheme") {
    for (Scheme scheme : {Scheme::MTLS1, Scheme::MTLS2, Scheme::MTLS3}) {
        const auto res = train(toy_config(scheme), toy_data());
        REQUIRE(res.log.rows.size() == 4);
        for (std::size_t i = 0; i < res.log.rows.size(); ++i) {
            const auto& r = res.log.rows[i];
            CHECK(r.epoch == static_cast<int>(i) + 1);
            const double es = scales_saliency(scheme) ? r.lr / (r.sigma_s * r.sigma_s) : r.lr;
            const double ec = scales_class(scheme) ? r.lr / (r.sigma_c * r.sigma_c) : r.lr;
            CHECK(r.r_eff_s == doctest::Approx(es).epsilon(1e-12));
            CHECK(r.r_eff_c == doctest::Approx(ec).epsilon(1e-12));
            CHECK(r.val_total ==
                  doctest::Approx(scheme_total(scheme, r.val_L_s, r.val_L_c, r.sigma_s, r.sigma_c).total)
                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("identical seeds give bit-identical logs") {
    const auto a = train(toy_config(), toy_data());
    const auto b = train(toy_config(), toy_data());
    CHECK(a.log == b.log);
    CHECK(a.best == b.best);
    TrainConfig other = toy_config();
    other.seed = 2;
    CHECK_FALSE(train(other, toy_data()).log == a.log);
}

TEST_CASE("the final evaluation uses the best validation epoch") {
    TrainConfig c = toy_config();
    c.max_epochs = 6;
    const auto res = train(c, toy_data());
    double best = 1e300;
    int best_epoch = 0;
    for (const auto& r : res.log.rows)
        if (r.val_total < best) {
            best = r.val_total;
            best_epoch = r.epoch;
        }
    CHECK(res.best.epoch == best_epoch);
    CHECK(res.final_val.loss.total == best);
}

TEST_CASE("a plateau produces one logged rollback with a tenfold rate cut") {
    TrainConfig c = toy_config();
    c.lr = 1e-9;
    c.patience = 1;
    c.max_epochs = 6;
    c.max_reductions = 1;
    const auto res = train(c, toy_data());
    const auto rollbacks = std::count_if(res.log.rows.begin(), res.log.rows.end(),
                                         [](const EpochRow& r) { return r.rollback; });
    CHECK(rollbacks == 1);
    CHECK(res.log.rows.back().rollback);
}

TEST_CASE("rollback lowers the logged rate on the next epoch") {
    TrainConfig c = toy_config();
    c.lr = 1e-9;
    c.patience = 1;
    c.max_epochs = 4;
    const auto res = train(c, toy_data());
    for (std::size_t i = 1; i < res.log.rows.size(); ++i) {
        const auto& prev = res.log.rows[i - 1];
        const double expect = prev.rollback ? std::max(prev.lr * 0.1, 1e-7) : prev.lr;
        CHECK(res.log.rows[i].lr == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("training log csv round trip") {
    const auto res = train(toy_config(), toy_data());
    const auto dir = temp_dir("log");
    fs::create_directories(dir);
    write_log_csv(dir / "log.csv", res.log);
    CHECK(read_log_csv(dir / "log.csv") == res.log);
    const std::string text = slurp(dir / "log.csv");
    CHECK(text.substr(0, text.find('\n')) ==
          "epoch,train_L_s,train_L_c,train_total,val_L_s,val_L_c,val_total,sigma_s,sigma_c,lr,r_eff_s,r_eff_c,rollback");
}

TEST_CASE("cmd_train writes its outputs and cmd_eval reproduces the test metrics") {
    TrainConfig c = toy_config();
    c.dataset = toy_dataset_dir();
    c.output_dir = temp_dir("train_run");
    const auto res = cmd_train(c);
    for (const char* f : {"train_log.csv", "checkpoint.json", "checkpoint.bin", "metrics.csv", "run.json"})
        CHECK(fs::exists(c.output_dir / f));

    const auto rep = cmd_eval(c.output_dir / "checkpoint.json", c.dataset, SplitName::Test, c.output_dir / "eval.csv");
    CHECK(metric_row(rep, 3) == metric_row(res.test, 3));
    CHECK(slurp(c.output_dir / "eval.csv").find("kld,pcc,hs,acc,auc,auc_y1,auc_y2,auc_y3") != std::string::npos);

    const auto again = cmd_eval(c.output_dir / "checkpoint.json", c.dataset, SplitName::Test, {});
    CHECK(metric_row(again, 3) == metric_row(rep, 3));
}

TEST_CASE("eval of a saliency-only checkpoint reports no class metrics") {
    TrainConfig c = toy_config(Scheme::MTLS3, Variant::UNET_S);
    c.dataset = toy_dataset_dir();
    c.output_dir = temp_dir("unet_s");
    c.max_epochs = 2;
    cmd_train(c);
    const auto rep = cmd_eval(c.output_dir / "checkpoint.json", c.dataset, SplitName::Test, c.output_dir / "e.csv");
    CHECK(rep.saliency.has_value());
    CHECK_FALSE(rep.classes.has_value());
    const auto row = metric_row(rep, 3);
    const auto cols = metric_columns(3);
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i] == "acc" || cols[i].rfind("auc", 0) == 0) CHECK(std::isnan(row[i]));
        if (cols[i] == "kld") CHECK_FALSE(std::isnan(row[i]));
    }
    CHECK(slurp(c.output_dir / "e.csv").find("NA") != std::string::npos);
}

TEST_CASE("single-task variants keep both sigmas at one") {
    for (Variant v : {Variant::UNET_S, Variant::UNET_C}) {
        TrainConfig c = toy_config(Scheme::MTLS1, v);
        c.max_epochs = 2;
        const auto res = train(c, toy_data());
        for (const auto& r : res.log.rows) {
            CHECK(r.sigma_s == 1.0);
            CHECK(r.sigma_c == 1.0);
        }
    }
}

TEST_CASE("mismatched dataset and model are rejected") {
    TrainConfig c = toy_config();
    c.model.height = c.model.width = 32;
    CHECK_THROWS_AS(train(c, toy_data()), ConfigError);
}

TEST_CASE("ablation table has one row per metric and medians match per-run files") {
    TrainConfig c = toy_config();
    c.dataset = toy_dataset_dir();
    c.max_epochs = 1;
    const auto out = temp_dir("ablate");
    const std::vector<AblationEntry> entries{{"MTLS3-MT", Scheme::MTLS3, Variant::MT},
                                             {"MTLS3-UNET-S", Scheme::MTLS3, Variant::UNET_S}};
    const auto res = cmd_ablate(c, {1, 2, 3}, out, entries);
    REQUIRE(res.reports.size() == 2);

    std::ifstream in(out / "ablation_table.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "metric,MTLS3-MT,MTLS3-UNET-S");
    std::vector<std::string> metrics;
    while (std::getline(in, line)) metrics.push_back(line.substr(0, line.find(',')));
    CHECK(metrics == metric_columns(3));

    // Recompute the aggregate from the per-seed metrics files.
    std::vector<double> kld;
    for (int s : {1, 2, 3}) {
        const auto r = read_report_csv(out / "MTLS3-MT" / ("seed_" + std::to_string(s)) / "metrics.csv");
        kld.push_back(r.rows.at(0).at(0));
    }
    CHECK(summarize(kld).median == res.reports[0].aggregate.at("kld").median);
    CHECK(summarize(kld).std == res.reports[0].aggregate.at("kld").std);
}

TEST_CASE("a single-seed ablation has zero spread") {
    TrainConfig c = toy_config();
    c.dataset = toy_dataset_dir();
    c.max_epochs = 1;
    const auto res = cmd_ablate(c, {4}, temp_dir("ablate_one"), {{"MTLS1-MT", Scheme::MTLS1, Variant::MT}});
    for (const auto& [name, s] : res.reports[0].aggregate) CHECK(s.std == 0.0);
}

TEST_CASE("sigma lab") {
    const auto constant = cmd_sigma_lab(parse_schedule("0.25:5000"), 2.0, 0.05, Scheme::MTLS1, Task::Saliency, 1e-3);
    CHECK(constant.size() == 5000);
    CHECK(std::abs(constant.back().sigma - equilibrium_inverse(0.25)) < 1e-4);

    const auto falling =
        cmd_sigma_lab(parse_schedule("1:4000,0.5:4000,0.2:4000,0.1:4000"), 1.0, 0.05, Scheme::MTLS1, Task::Classification, 1e-3);
    double prev_eq = 1e9, prev_r = 0;
    for (std::size_t p = 0; p < 4; ++p) {
        const auto& end = falling[(p + 1) * 4000 - 1];
        CHECK(end.phase == p);
        CHECK(end.equilibrium < prev_eq);
        CHECK(end.r_eff > prev_r);
        prev_eq = end.equilibrium;
        prev_r = end.r_eff;
    }

    const auto flat = cmd_sigma_lab(parse_schedule("0.3:100,0.1:100"), 1.0, 0.05, Scheme::MTLS3, Task::Saliency, 1e-3);
    for (const auto& r : flat) {
        CHECK(r.sigma == 1.0);
        CHECK(r.r_eff == 1e-3);
    }

    CHECK_THROWS_AS(parse_schedule("0.3"), ConfigError);
    CHECK_THROWS_AS(parse_schedule("-1:10"), ConfigError);
    CHECK_THROWS_AS(cmd_sigma_lab(parse_schedule("0.25:1000"), 2.0, 50.0, Scheme::MTLS1, Task::Saliency, 1e-3),
                    DivergenceError);
}
