// ============================================================================
// wagcn._core — Python bindings for the main pipeline operations
// ============================================================================

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"

#include "wagcn/checkpoint.hpp"
#include "wagcn/config.hpp"
#include "wagcn/data.hpp"
#include "wagcn/errors.hpp"
#include "wagcn/eval.hpp"
#include "wagcn/gradcheck.hpp"
#include "wagcn/graph.hpp"
#include "wagcn/loss.hpp"
#include "wagcn/trainer.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// --------------------------------------------------------------------------
// dict <-> json bridging

json py_to_json(const py::handle& obj) {
    if (obj.is_none()) return nullptr;
    if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
    if (py::isinstance<py::int_>(obj)) return obj.cast<std::int64_t>();
    if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
    if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
    if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
        json arr = json::array();
        for (const auto& item : obj) arr.push_back(py_to_json(item));
        return arr;
    }
    if (py::isinstance<py::dict>(obj)) {
        json o = json::object();
        for (const auto& item : obj.cast<py::dict>())
            o[item.first.cast<std::string>()] = py_to_json(item.second);
        return o;
    }
    throw wagcn::validation_error("config values must be JSON-compatible (None/bool/int/float/"
                                  "str/list/dict)");
}

py::object json_to_py(const json& j) {
    switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<std::int64_t>());
    case json::value_t::number_unsigned: return py::int_(j.get<std::uint64_t>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
        py::list lst;
        for (const auto& item : j) lst.append(json_to_py(item));
        return lst;
    }
    case json::value_t::object: {
        py::dict d;
        for (auto it = j.begin(); it != j.end(); ++it)
            d[py::str(it.key())] = json_to_py(it.value());
        return d;
    }
    default: throw wagcn::validation_error("unsupported JSON value type");
    }
}

wagcn::TrainConfig train_config_from_dict(const py::dict& overrides) {
    json doc = wagcn::train_config_to_json(wagcn::TrainConfig{});
    const json user = py_to_json(overrides);
    for (auto it = user.begin(); it != user.end(); ++it) doc[it.key()] = it.value();
    return wagcn::train_config_from_json(doc);
}

py::dict eval_result_to_dict(const wagcn::EvalResult& res) {
    json j;
    j["auc"] = res.auc;
    j["num_frames"] = res.num_frames;
    j["num_positive_frames"] = res.num_positive_frames;
    json roc = json::array();
    for (std::size_t i = 0; i < res.roc.fpr.size(); ++i)
        roc.push_back({res.roc.fpr[i], res.roc.tpr[i]});
    j["roc"] = roc;
    return json_to_py(j).cast<py::dict>();
}

// --------------------------------------------------------------------------
// operation wrappers

py::list py_temporal_adjacency(std::size_t t) {
    const auto a = wagcn::build_temporal_adjacency<double>(t);
    py::list rows;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        py::list row;
        for (std::size_t c = 0; c < a.cols(); ++c) row.append(a(r, c));
        rows.append(row);
    }
    return rows;
}

py::dict py_synth_generate(const py::dict& config, const std::string& out_dir) {
    json doc = wagcn::synth_config_to_json(wagcn::SynthConfig{});
    const json user = py_to_json(config);
    for (auto it = user.begin(); it != user.end(); ++it) doc[it.key()] = it.value();
    const wagcn::SynthConfig cfg = wagcn::synth_config_from_json(doc);
    const auto result = wagcn::synth_generate(cfg, out_dir);
    py::dict d;
    d["train_manifest"] = result.train_manifest;
    d["test_manifest"] = result.test_manifest;
    return d;
}

py::dict py_train(const std::string& manifest, const py::dict& config, const std::string& out_dir,
                  const std::optional<std::string>& eval_manifest, std::size_t workers) {
    const wagcn::TrainConfig cfg = train_config_from_dict(config);
    const wagcn::TrainSummary s = wagcn::train(manifest, cfg, eval_manifest, out_dir, workers);
    py::dict d;
    d["checkpoint"] = s.final_checkpoint;
    d["best_checkpoint"] =
        s.best_checkpoint.empty() ? py::object(py::none()) : py::object(py::str(s.best_checkpoint));
    d["train_log"] = s.log_path;
    d["final_auc"] = s.final_auc ? py::object(py::float_(*s.final_auc)) : py::object(py::none());
    d["best_auc"] = s.best_auc ? py::object(py::float_(*s.best_auc)) : py::object(py::none());
    py::list log;
    for (const auto& e : s.log) {
        py::dict entry;
        entry["epoch"] = e.epoch;
        entry["loss"] = e.loss;
        if (e.auc) entry["auc"] = *e.auc;
        entry["wall_time_sec"] = e.wall_time_sec;
        log.append(entry);
    }
    d["log"] = log;
    return d;
}

template <typename T>
py::dict score_manifest(const std::string& model_path, const wagcn::DatasetManifest& man) {
    auto branches = wagcn::load_checkpoint<T>(model_path);
    py::dict out;
    for (const auto& rec : man.records) {
        auto crops = wagcn::load_video_crops<T>(man, rec);
        const auto scores = wagcn::score_video_fused(branches, crops);
        py::list lst;
        for (double s : scores) lst.append(s);
        out[py::str(rec.id)] = lst;
    }
    return out;
}

py::dict py_score_videos(const std::string& model_path, const std::string& manifest_path) {
    const auto meta = wagcn::read_checkpoint_meta(model_path);
    const auto man = wagcn::load_manifest(manifest_path);
    if (meta.precision == "single") return score_manifest<float>(model_path, man);
    return score_manifest<double>(model_path, man);
}

py::dict py_evaluate(const std::string& manifest_path, const py::dict& segment_scores) {
    const auto man = wagcn::load_manifest(manifest_path);
    std::map<std::string, std::vector<double>> scores;
    for (const auto& item : segment_scores)
        scores[item.first.cast<std::string>()] = item.second.cast<std::vector<double>>();
    return eval_result_to_dict(wagcn::dataset_eval(man, scores));
}

py::dict py_roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    return eval_result_to_dict(wagcn::roc_auc(scores, labels));
}

py::dict py_gradcheck(const py::dict& config) {
    json doc = wagcn::gradcheck_config_to_json(wagcn::GradcheckConfig{});
    const json user = py_to_json(config);
    for (auto it = user.begin(); it != user.end(); ++it) doc[it.key()] = it.value();
    const wagcn::GradcheckConfig cfg = wagcn::gradcheck_config_from_json(doc);
    const wagcn::GradReport report = wagcn::run_gradcheck(cfg);
    py::dict d;
    d["pass"] = report.pass;
    d["tolerance"] = report.tolerance;
    d["max_rel_err"] = report.max_rel_err();
    py::list params;
    for (const auto& p : report.params) {
        py::dict pd;
        pd["name"] = p.name;
        pd["max_rel_err"] = p.max_rel_err;
        pd["max_abs_err"] = p.max_abs_err;
        params.append(pd);
    }
    d["params"] = params;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "weakly supervised adaptive graph convolutional network for video "
              "anomaly detection";

    py::register_exception<wagcn::format_error>(m, "FormatError", PyExc_ValueError);
    py::register_exception<wagcn::validation_error>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<wagcn::numeric_error>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<wagcn::io_error>(m, "IoError", PyExc_OSError);

    m.def("compute_k", &wagcn::compute_k, py::arg("t"),
          "Number of top segments entering the MIL loss: floor(t/8 + 1).");
    m.def("temporal_adjacency", &py_temporal_adjacency, py::arg("t"),
          "Fixed temporal-consistency adjacency exp(-|i-j|) as nested lists.");
    m.def("uniform_sample_indices", &wagcn::uniform_sample_indices, py::arg("t_full"),
          py::arg("t"), "Uniform segment sampling indices floor(i*t_full/t).");
    m.def("expand_scores", &wagcn::expand_scores, py::arg("segment_scores"),
          py::arg("frame_count"), "Repeat segment scores 16x and fit to frame_count.");
    m.def("roc_auc", &py_roc_auc, py::arg("scores"), py::arg("labels"),
          "Frame-level ROC/AUC with tie-grouped thresholds.");
    m.def("synth_generate", &py_synth_generate, py::arg("config"), py::arg("out_dir"),
          "Generate a synthetic dataset; returns manifest paths.");
    m.def("train", &py_train, py::arg("manifest"), py::arg("config"), py::arg("out_dir"),
          py::arg("eval_manifest") = std::nullopt, py::arg("workers") = 1,
          "Train a model; writes checkpoints and the epoch log under out_dir.");
    m.def("score_videos", &py_score_videos, py::arg("model"), py::arg("manifest"),
          "Per-segment anomaly scores for every video: {video_id: [scores]}.");
    m.def("evaluate", &py_evaluate, py::arg("manifest"), py::arg("segment_scores"),
          "Frame-level evaluation of segment scores against a manifest.");
    m.def("gradcheck", &py_gradcheck, py::arg("config"),
          "Finite-difference gradient check; returns the per-parameter report.");
}
