#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <cmath>
#include <optional>

#include <json.hpp>

#include "mtunet/data.hpp"
#include "mtunet/harness.hpp"
#include "mtunet/losses.hpp"
#include "mtunet/metrics.hpp"

namespace py = pybind11;
using namespace mtunet;
using nlohmann::json;

namespace {

py::object maybe(double v) { return std::isnan(v) ? py::object(py::none()) : py::object(py::float_(v)); }

py::dict metrics_dict(const EvalReport& rep, std::size_t classes) {
    py::dict d;
    const auto cols = metric_columns(classes);
    const auto row = metric_row(rep, classes);
    for (std::size_t i = 0; i < cols.size(); ++i) d[py::str(cols[i])] = maybe(row[i]);
    return d;
}

py::dict log_dict(const TrainingLog& log) {
    std::vector<int> epoch, rollback;
    std::vector<double> ts, tc, tt, vs, vc, vt, ss, sc, lr, rs, rc;
    for (const auto& r : log.rows) {
        epoch.push_back(r.epoch);
        ts.push_back(r.train_L_s);
        tc.push_back(r.train_L_c);
        tt.push_back(r.train_total);
        vs.push_back(r.val_L_s);
        vc.push_back(r.val_L_c);
        vt.push_back(r.val_total);
        ss.push_back(r.sigma_s);
        sc.push_back(r.sigma_c);
        lr.push_back(r.lr);
        rs.push_back(r.r_eff_s);
        rc.push_back(r.r_eff_c);
        rollback.push_back(r.rollback);
    }
    py::dict d;
    d["epoch"] = epoch;
    d["train_L_s"] = ts;
    d["train_L_c"] = tc;
    d["train_total"] = tt;
    d["val_L_s"] = vs;
    d["val_L_c"] = vc;
    d["val_total"] = vt;
    d["sigma_s"] = ss;
    d["sigma_c"] = sc;
    d["lr"] = lr;
    d["r_eff_s"] = rs;
    d["r_eff_c"] = rc;
    d["rollback"] = rollback;
    return d;
}

TrainConfig parse_train(const std::string& config_json) { return train_config_from_json(json::parse(config_json)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "MT-UNet core: losses, metrics, sigma dynamics and the training harness";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base);
    py::register_exception<ShapeError>(m, "ShapeError", base);
    py::register_exception<FormatError>(m, "FormatError", base);
    py::register_exception<DivergenceError>(m, "DivergenceError", base);

    // losses
    m.def("cross_entropy", [](const std::vector<double>& q, const std::vector<double>& r) {
        return cross_entropy<double>(q, r);
    });
    m.def("entropy", [](const std::vector<double>& q) { return entropy<double>(q); });
    m.def("saliency_loss", [](const std::vector<double>& truth, const std::vector<double>& pred) {
        return saliency_loss<double>(truth, pred);
    });
    m.def("classification_loss", [](const std::vector<double>& truth, const std::vector<double>& pred) {
        return classification_loss<double>(truth, pred);
    });
    m.def(
        "scheme_total",
        [](const std::string& scheme, double ls, double lc, double ss, double sc, double lr) {
            const LossBreakdown b = scheme_total(parse_scheme(scheme), ls, lc, ss, sc, lr);
            py::dict d;
            d["L_s"] = b.saliency;
            d["L_c"] = b.classification;
            d["total"] = b.total;
            d["sigma_s"] = b.sigma_s;
            d["sigma_c"] = b.sigma_c;
            d["r_eff_s"] = b.r_eff_s;
            d["r_eff_c"] = b.r_eff_c;
            return d;
        },
        py::arg("scheme"), py::arg("L_s"), py::arg("L_c"), py::arg("sigma_s") = 1.0, py::arg("sigma_c") = 1.0,
        py::arg("lr") = 1.0);
    m.def("sigma_gradient", &sigma_gradient, py::arg("loss"), py::arg("sigma"));
    m.def("equilibrium_f", &equilibrium_f, py::arg("sigma"));
    m.def("equilibrium_inverse", &equilibrium_inverse, py::arg("loss"));
    m.def(
        "sigma_descent_trace",
        [](const std::vector<double>& losses, double sigma0, double step) {
            return sigma_descent_trace(losses, sigma0, step);
        },
        py::arg("losses"), py::arg("sigma0"), py::arg("step"));

    // metrics
    m.def("kld", [](const std::vector<double>& t, const std::vector<double>& p) { return kld_metric(t, p); });
    m.def("pcc", [](const std::vector<double>& a, const std::vector<double>& b) { return pcc(a, b); });
    m.def("hs", [](const std::vector<double>& t, const std::vector<double>& p) { return hs(t, p); });
    m.def("accuracy", [](const std::vector<int>& labels, const ScoreTable& s) { return accuracy(labels, s); });
    m.def(
        "auc_one_vs_rest",
        [](const ScoreTable& s, const std::vector<int>& labels, std::size_t k) { return auc_one_vs_rest(s, labels, k); },
        py::arg("scores"), py::arg("labels"), py::arg("k"));
    m.def(
        "auc_multiclass",
        [](const ScoreTable& s, const std::vector<int>& labels, std::size_t classes) {
            return auc_multiclass(s, labels, classes);
        },
        py::arg("scores"), py::arg("labels"), py::arg("num_classes"));

    // data
    m.def(
        "generate",
        [](const std::string& config_json, const std::filesystem::path& out) {
            const SynthConfig cfg = synth_config_from_json(json::parse(config_json));
            const Dataset d = generate(cfg);
            save_dataset(d, out, {{"generator", "synthetic"}, {"config", to_json(cfg)}});
            return d.size();
        },
        py::arg("config_json"), py::arg("out"));
    m.def(
        "split",
        [](const std::filesystem::path& dataset, double train, double val, double test, std::uint64_t seed) {
            const Split s = stratified_split(load_dataset(dataset), SplitSpec{train, val, test, seed});
            py::dict d;
            d["train"] = s.train;
            d["val"] = s.val;
            d["test"] = s.test;
            return d;
        },
        py::arg("dataset"), py::arg("train") = 0.7, py::arg("val") = 0.1, py::arg("test") = 0.2, py::arg("seed") = 0);
    m.def(
        "labels",
        [](const std::filesystem::path& dataset) {
            std::vector<int> out;
            for (const auto& s : load_dataset(dataset).samples) out.push_back(s.label);
            return out;
        },
        py::arg("dataset"));

    // harness
    m.def(
        "train",
        [](const std::string& config_json) {
            const TrainConfig cfg = parse_train(config_json);
            std::optional<TrainResult> out;
            {
                py::gil_scoped_release release;
                out.emplace(cmd_train(cfg));
            }
            const TrainResult& res = *out;
            py::dict d;
            d["output_dir"] = cfg.output_dir;
            d["best_epoch"] = res.best.epoch;
            d["seconds"] = res.seconds;
            d["test"] = metrics_dict(res.test, cfg.model.num_classes);
            d["log"] = log_dict(res.log);
            return d;
        },
        py::arg("config_json"));
    m.def(
        "evaluate",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& dataset, const std::string& split,
           const std::filesystem::path& out_csv) {
            EvalReport rep;
            {
                py::gil_scoped_release release;
                rep = cmd_eval(checkpoint, dataset, parse_split(split), out_csv);
            }
            const auto meta = load_checkpoint(checkpoint).meta;
            return metrics_dict(rep, train_config_from_json(meta.at("train_config")).model.num_classes);
        },
        py::arg("checkpoint"), py::arg("dataset"), py::arg("split") = "test", py::arg("out_csv"));
    m.def(
        "ablate",
        [](const std::string& config_json, const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out,
           const std::vector<std::string>& configs) {
            const TrainConfig cfg = parse_train(config_json);
            std::vector<AblationEntry> entries;
            for (const auto& e : default_ablation())
                if (configs.empty() || std::find(configs.begin(), configs.end(), e.name) != configs.end())
                    entries.push_back(e);
            if (entries.empty()) throw ConfigError("no ablation configuration matches");
            AblationResult res;
            {
                py::gil_scoped_release release;
                res = cmd_ablate(cfg, seeds, out, entries);
            }
            py::dict table;
            for (std::size_t i = 0; i < res.entries.size(); ++i) {
                py::dict col;
                for (const auto& [metric, s] : res.reports[i].aggregate)
                    col[py::str(metric)] = py::make_tuple(maybe(s.median), maybe(s.std));
                table[py::str(res.entries[i].name)] = col;
            }
            return table;
        },
        py::arg("config_json"), py::arg("seeds"), py::arg("out"), py::arg("configs") = std::vector<std::string>{});
    m.def(
        "sigma_lab",
        [](const std::string& schedule, double sigma0, double step, const std::string& scheme,
           const std::string& task, double lr) {
            const Task t = task == "s" || task == "saliency" ? Task::Saliency
                           : task == "c" || task == "classification"
                               ? Task::Classification
                               : throw ConfigError("task must be saliency or classification");
            const auto rows = cmd_sigma_lab(parse_schedule(schedule), sigma0, step, parse_scheme(scheme), t, lr);
            std::vector<double> loss, sigma, eq, r_eff;
            for (const auto& r : rows) {
                loss.push_back(r.loss);
                sigma.push_back(r.sigma);
                eq.push_back(r.equilibrium);
                r_eff.push_back(r.r_eff);
            }
            py::dict d;
            d["loss"] = loss;
            d["sigma"] = sigma;
            d["equilibrium"] = eq;
            d["r_eff"] = r_eff;
            return d;
        },
        py::arg("schedule"), py::arg("sigma0") = 1.0, py::arg("step") = 0.05, py::arg("scheme") = "MTLS1",
        py::arg("task") = "saliency", py::arg("lr") = 1e-3);
}
