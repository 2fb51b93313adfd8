// ============================================================================
// wagcn — command-line front end for the anomaly-detection pipeline
// ============================================================================

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "wagcn/checkpoint.hpp"
#include "wagcn/config.hpp"
#include "wagcn/data.hpp"
#include "wagcn/errors.hpp"
#include "wagcn/eval.hpp"
#include "wagcn/gradcheck.hpp"
#include "wagcn/trainer.hpp"

namespace fs = std::filesystem;
using namespace wagcn;

namespace {

// ----------------------------------------------------------------------------
// plumbing

constexpr const char* kConfigDirEnv = "WAGCN_CONFIG_DIR";

int emit_error(const char* type, const std::string& message, int code) {
    nlohmann::json j;
    j["error"]["type"] = type;
    j["error"]["message"] = message;
    j["exit_code"] = code;
    std::cerr << j.dump() << "\n";
    return code;
}

// Bare config names (no directory component) fall back to $WAGCN_CONFIG_DIR.
std::string resolve_config_path(const std::string& p) {
    if (p.empty() || fs::exists(p)) return p;
    if (p.find('/') == std::string::npos) {
        if (const char* dir = std::getenv(kConfigDirEnv)) {
            const fs::path cand = fs::path(dir) / p;
            if (fs::exists(cand)) return cand.string();
        }
    }
    return p;
}

// defaults <- config file <- --set overrides, in that order.
nlohmann::json resolve_config(const std::string& path, nlohmann::json defaults,
                              const std::vector<std::string>& overrides) {
    nlohmann::json doc = std::move(defaults);
    if (!path.empty()) {
        nlohmann::json user = load_json_file(resolve_config_path(path));
        if (!user.is_object()) throw format_error(path + ": config root must be a JSON object");
        for (auto it = user.begin(); it != user.end(); ++it) doc[it.key()] = *it;
    }
    for (const auto& a : overrides) apply_override(doc, a);
    return doc;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory " + dir + ": " + ec.message());
}

void write_effective_config(const std::string& out_dir, const nlohmann::json& doc) {
    save_json_file((fs::path(out_dir) / "effective_config.json").string(), doc);
}

void write_score_csv(const std::string& path, const std::vector<double>& scores) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "segment_idx,score\n";
    char buf[64];
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, scores[i]);
        out << buf;
    }
    if (!out) throw io_error("write failed for " + path);
}

std::vector<double> read_score_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "segment_idx,score")
        throw format_error(path + ": expected header 'segment_idx,score'");
    std::vector<double> scores;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw format_error(where + ": expected 'segment_idx,score'");
        char* end = nullptr;
        const unsigned long long idx = std::strtoull(line.c_str(), &end, 10);
        if (end != line.c_str() + comma) throw format_error(where + ": bad segment index");
        if (idx != scores.size())
            throw format_error(where + ": segment indices must be consecutive from 0");
        const std::string val = line.substr(comma + 1);
        end = nullptr;
        const double s = std::strtod(val.c_str(), &end);
        if (end == val.c_str() || *end != '\0') throw format_error(where + ": bad score value");
        scores.push_back(s);
    }
    if (scores.empty()) throw format_error(path + ": no score rows");
    return scores;
}

// ----------------------------------------------------------------------------
// subcommands

void run_synth(const std::string& config_path, const std::vector<std::string>& sets,
               const std::string& out_dir) {
    const auto doc = resolve_config(config_path, synth_config_to_json(SynthConfig{}), sets);
    const SynthConfig cfg = synth_config_from_json(doc);
    cfg.validate();

    ensure_dir(out_dir);
    nlohmann::json eff;
    eff["subcommand"] = "synth";
    eff["out"] = out_dir;
    eff["config"] = synth_config_to_json(cfg);
    write_effective_config(out_dir, eff);

    const auto result = synth_generate(cfg, out_dir);

    nlohmann::json summary;
    summary["train_manifest"] = result.train_manifest;
    if (!result.test_manifest.empty()) summary["test_manifest"] = result.test_manifest;
    std::cout << summary.dump() << "\n";
}

void run_train(const std::string& manifest, const std::string& config_path,
               const std::vector<std::string>& sets,
               const std::optional<std::string>& eval_manifest, const std::string& out_dir,
               std::size_t workers) {
    const auto doc = resolve_config(config_path, train_config_to_json(TrainConfig{}), sets);
    const TrainConfig cfg = train_config_from_json(doc);
    cfg.validate();

    ensure_dir(out_dir);
    nlohmann::json eff;
    eff["subcommand"] = "train";
    eff["manifest"] = manifest;
    if (eval_manifest) eff["eval_manifest"] = *eval_manifest;
    eff["out"] = out_dir;
    eff["workers"] = workers;
    eff["config"] = train_config_to_json(cfg);
    write_effective_config(out_dir, eff);

    const TrainSummary summary = train(manifest, cfg, eval_manifest, out_dir, workers);

    nlohmann::json out;
    out["checkpoint"] = summary.final_checkpoint;
    if (!summary.best_checkpoint.empty()) out["best_checkpoint"] = summary.best_checkpoint;
    out["train_log"] = summary.log_path;
    out["epochs"] = summary.log.size();
    if (summary.final_auc) out["final_auc"] = *summary.final_auc;
    if (summary.best_auc) out["best_auc"] = *summary.best_auc;
    std::cout << out.dump() << "\n";
}

template <typename T>
void score_videos(const std::string& model_path, const DatasetManifest& man,
                  const std::string& out_dir) {
    auto branches = load_checkpoint<T>(model_path);
    for (const auto& rec : man.records) {
        auto crops = load_video_crops<T>(man, rec);
        const auto scores = score_video_fused(branches, crops);
        write_score_csv((fs::path(out_dir) / (rec.id + ".csv")).string(), scores);
    }
}

void run_score(const std::string& model_path, const std::string& manifest_path,
               const std::string& out_dir) {
    const CheckpointMeta meta = read_checkpoint_meta(model_path);
    const DatasetManifest man = load_manifest(manifest_path);

    ensure_dir(out_dir);
    nlohmann::json eff;
    eff["subcommand"] = "score";
    eff["model"] = model_path;
    eff["manifest"] = manifest_path;
    eff["out"] = out_dir;
    eff["precision"] = meta.precision;
    write_effective_config(out_dir, eff);

    if (meta.precision == "single")
        score_videos<float>(model_path, man, out_dir);
    else
        score_videos<double>(model_path, man, out_dir);

    nlohmann::json summary;
    summary["videos"] = man.records.size();
    summary["out"] = out_dir;
    std::cout << summary.dump() << "\n";
}

void run_eval(const std::string& scores_dir, const std::string& manifest_path,
              const std::string& out_dir) {
    const DatasetManifest man = load_manifest(manifest_path);
    std::map<std::string, std::vector<double>> scores;
    for (const auto& rec : man.records)
        scores[rec.id] = read_score_csv((fs::path(scores_dir) / (rec.id + ".csv")).string());
    const EvalResult res = dataset_eval(man, scores);

    ensure_dir(out_dir);
    nlohmann::json eff;
    eff["subcommand"] = "eval";
    eff["scores_dir"] = scores_dir;
    eff["manifest"] = manifest_path;
    eff["out"] = out_dir;
    write_effective_config(out_dir, eff);

    nlohmann::json metrics;
    metrics["auc"] = res.auc;
    metrics["num_frames"] = res.num_frames;
    metrics["num_positive_frames"] = res.num_positive_frames;
    auto& roc = metrics["roc"];
    roc = nlohmann::json::array();
    for (std::size_t i = 0; i < res.roc.fpr.size(); ++i)
        roc.push_back({res.roc.fpr[i], res.roc.tpr[i]});
    const std::string metrics_path = (fs::path(out_dir) / "metrics.json").string();
    save_json_file(metrics_path, metrics);

    nlohmann::json summary;
    summary["auc"] = res.auc;
    summary["num_frames"] = res.num_frames;
    summary["num_positive_frames"] = res.num_positive_frames;
    summary["metrics"] = metrics_path;
    std::cout << summary.dump() << "\n";
}

void run_curves(const std::string& scores_dir, const std::string& manifest_path,
                const std::string& out_dir) {
    const DatasetManifest man = load_manifest(manifest_path);

    ensure_dir(out_dir);
    nlohmann::json eff;
    eff["subcommand"] = "curves";
    eff["scores_dir"] = scores_dir;
    eff["manifest"] = manifest_path;
    eff["out"] = out_dir;
    write_effective_config(out_dir, eff);

    for (const auto& rec : man.records) {
        const auto scores = read_score_csv((fs::path(scores_dir) / (rec.id + ".csv")).string());
        export_curve_csv((fs::path(out_dir) / (rec.id + ".curve.csv")).string(), scores,
                         rec.anomaly_intervals, rec.frame_count);
        const auto frames = expand_scores(scores, rec.frame_count);
        const auto gt = frame_labels(rec.frame_count, rec.anomaly_intervals);
        export_curve_svg((fs::path(out_dir) / (rec.id + ".curve.svg")).string(), rec.id, frames,
                         gt);
    }

    nlohmann::json summary;
    summary["videos"] = man.records.size();
    summary["out"] = out_dir;
    std::cout << summary.dump() << "\n";
}

void run_sweep(const std::string& manifest, const std::string& eval_manifest,
               const std::string& config_path, const std::vector<std::string>& sets,
               const std::vector<std::size_t>& t_values, const std::string& out_dir,
               std::size_t workers) {
    const auto doc = resolve_config(config_path, train_config_to_json(TrainConfig{}), sets);
    const TrainConfig cfg = train_config_from_json(doc);
    cfg.validate();

    ensure_dir(out_dir);
    nlohmann::json eff;
    eff["subcommand"] = "sweep";
    eff["manifest"] = manifest;
    eff["eval_manifest"] = eval_manifest;
    eff["out"] = out_dir;
    eff["workers"] = workers;
    eff["t_values"] = t_values;
    eff["config"] = train_config_to_json(cfg);
    write_effective_config(out_dir, eff);

    const auto rows = sweep_sampling_length(manifest, cfg, t_values, eval_manifest, workers);

    const std::string csv_path = (fs::path(out_dir) / "sweep.csv").string();
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw io_error("cannot open " + csv_path + " for writing");
    csv << "t,auc\n";
    char buf[64];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", row.t, row.auc);
        csv << buf;
    }
    if (!csv) throw io_error("write failed for " + csv_path);

    nlohmann::json out = nlohmann::json::array();
    for (const auto& row : rows) out.push_back({{"t", row.t}, {"auc", row.auc}});
    std::cout << out.dump() << "\n";
}

void run_ablate(const std::string& manifest, const std::string& eval_manifest,
                const std::string& config_path, const std::vector<std::string>& sets,
                const std::string& out_dir, std::size_t workers) {
    const auto doc = resolve_config(config_path, train_config_to_json(TrainConfig{}), sets);
    const TrainConfig cfg = train_config_from_json(doc);
    cfg.validate();

    ensure_dir(out_dir);
    nlohmann::json eff;
    eff["subcommand"] = "ablate";
    eff["manifest"] = manifest;
    eff["eval_manifest"] = eval_manifest;
    eff["out"] = out_dir;
    eff["workers"] = workers;
    eff["config"] = train_config_to_json(cfg);
    write_effective_config(out_dir, eff);

    const auto rows = run_ablation(manifest, cfg, eval_manifest, workers);

    nlohmann::json out = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json r;
        r["variant"] = row.variant;
        r["mode"] = row.mode;
        r["residual"] = row.residual;
        r["auc"] = row.auc;
        if (row.best_auc)
            r["best_auc"] = *row.best_auc;
        else
            r["best_auc"] = nullptr;
        out.push_back(r);
    }
    save_json_file((fs::path(out_dir) / "ablation.json").string(), out);
    std::cout << out.dump() << "\n";
}

int run_gradcheck_cmd(const std::string& config_path, const std::vector<std::string>& sets,
                      const std::string& out_dir) {
    const auto doc = resolve_config(config_path, gradcheck_config_to_json(GradcheckConfig{}), sets);
    const GradcheckConfig cfg = gradcheck_config_from_json(doc);

    const GradReport report = run_gradcheck(cfg);

    nlohmann::json j;
    j["pass"] = report.pass;
    j["tolerance"] = report.tolerance;
    j["max_rel_err"] = report.max_rel_err();
    auto& params = j["params"];
    params = nlohmann::json::array();
    for (const auto& p : report.params) {
        nlohmann::json pj;
        pj["name"] = p.name;
        pj["max_rel_err"] = p.max_rel_err;
        pj["max_abs_err"] = p.max_abs_err;
        params.push_back(pj);
    }

    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        nlohmann::json eff;
        eff["subcommand"] = "gradcheck";
        eff["out"] = out_dir;
        eff["config"] = gradcheck_config_to_json(cfg);
        write_effective_config(out_dir, eff);
        save_json_file((fs::path(out_dir) / "gradcheck.json").string(), j);
    }
    std::cout << j.dump() << "\n";

    if (!report.pass) {
        char msg[128];
        std::snprintf(msg, sizeof msg,
                      "gradient check failed: max relative error %.6g exceeds tolerance %.6g",
                      report.max_rel_err(), report.tolerance);
        return emit_error("numeric", msg, 2);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"weakly supervised adaptive graph convolutional network for "
                 "video anomaly detection"};
    app.require_subcommand(1);

    // synth
    std::string synth_config, synth_out;
    std::vector<std::string> synth_sets;
    auto* synth = app.add_subcommand("synth", "generate a synthetic feature dataset");
    synth->add_option("--config", synth_config, "synth config JSON");
    synth->add_option("--set", synth_sets, "override config key, e.g. --set delta=0");
    synth->add_option("--out", synth_out, "output directory")->required();

    // train
    std::string train_manifest, train_config, train_eval, train_out;
    std::vector<std::string> train_sets;
    std::size_t train_workers = 1;
    auto* train_cmd = app.add_subcommand("train", "train a model from a dataset manifest");
    train_cmd->add_option("--manifest", train_manifest, "training manifest (JSONL)")->required();
    train_cmd->add_option("--config", train_config, "train config JSON");
    train_cmd->add_option("--set", train_sets, "override config key, e.g. --set t=64");
    auto* train_eval_opt =
        train_cmd->add_option("--eval-manifest", train_eval, "eval manifest for periodic AUC");
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_option("--workers", train_workers, "parallel batch workers")
        ->capture_default_str();

    // score
    std::string score_model, score_manifest, score_out;
    auto* score = app.add_subcommand("score", "score every video in a manifest");
    score->add_option("--model", score_model, "checkpoint file (.fckp)")->required();
    score->add_option("--manifest", score_manifest, "manifest (JSONL)")->required();
    score->add_option("--out", score_out, "output directory for per-video CSVs")->required();

    // eval
    std::string eval_scores, eval_manifest, eval_out;
    auto* eval = app.add_subcommand("eval", "frame-level ROC/AUC from score CSVs");
    eval->add_option("--scores-dir", eval_scores, "directory of per-video score CSVs")
        ->required();
    eval->add_option("--manifest", eval_manifest, "manifest (JSONL)")->required();
    eval->add_option("--out", eval_out, "output directory")->required();

    // curves
    std::string curves_scores, curves_manifest, curves_out;
    auto* curves = app.add_subcommand("curves", "per-video frame curves (CSV + SVG)");
    curves->add_option("--scores-dir", curves_scores, "directory of per-video score CSVs")
        ->required();
    curves->add_option("--manifest", curves_manifest, "manifest (JSONL)")->required();
    curves->add_option("--out", curves_out, "output directory")->required();

    // sweep
    std::string sweep_manifest, sweep_eval, sweep_config, sweep_out;
    std::vector<std::string> sweep_sets;
    std::vector<std::size_t> sweep_t;
    std::size_t sweep_workers = 1;
    auto* sweep = app.add_subcommand("sweep", "train once per sampling length T");
    sweep->add_option("--manifest", sweep_manifest, "training manifest (JSONL)")->required();
    sweep->add_option("--eval-manifest", sweep_eval, "eval manifest (JSONL)")->required();
    sweep->add_option("--config", sweep_config, "train config JSON");
    sweep->add_option("--set", sweep_sets, "override config key");
    sweep->add_option("--t", sweep_t, "sampling lengths, e.g. --t 32,64,150")
        ->required()
        ->delimiter(',');
    sweep->add_option("--out", sweep_out, "output directory")->required();
    sweep->add_option("--workers", sweep_workers, "parallel batch workers")
        ->capture_default_str();

    // ablate
    std::string ablate_manifest, ablate_eval, ablate_config, ablate_out;
    std::vector<std::string> ablate_sets;
    std::size_t ablate_workers = 1;
    auto* ablate = app.add_subcommand("ablate", "adjacency/graph-mode/residual ablation grid");
    ablate->add_option("--manifest", ablate_manifest, "training manifest (JSONL)")->required();
    ablate->add_option("--eval-manifest", ablate_eval, "eval manifest (JSONL)")->required();
    ablate->add_option("--config", ablate_config, "train config JSON");
    ablate->add_option("--set", ablate_sets, "override config key");
    ablate->add_option("--out", ablate_out, "output directory")->required();
    ablate->add_option("--workers", ablate_workers, "parallel batch workers")
        ->capture_default_str();

    // gradcheck
    std::string gc_config, gc_out;
    std::vector<std::string> gc_sets;
    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference check of the whole model gradient");
    gradcheck_cmd->add_option("--config", gc_config, "gradcheck config JSON");
    gradcheck_cmd->add_option("--set", gc_sets, "override config key, e.g. --set variant=para_a");
    gradcheck_cmd->add_option("--out", gc_out, "optional output directory for the report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return emit_error("validation", e.what(), 1);
    }

    try {
        if (synth->parsed()) {
            run_synth(synth_config, synth_sets, synth_out);
        } else if (train_cmd->parsed()) {
            std::optional<std::string> ev;
            if (train_eval_opt->count() > 0) ev = train_eval;
            run_train(train_manifest, train_config, train_sets, ev, train_out, train_workers);
        } else if (score->parsed()) {
            run_score(score_model, score_manifest, score_out);
        } else if (eval->parsed()) {
            run_eval(eval_scores, eval_manifest, eval_out);
        } else if (curves->parsed()) {
            run_curves(curves_scores, curves_manifest, curves_out);
        } else if (sweep->parsed()) {
            run_sweep(sweep_manifest, sweep_eval, sweep_config, sweep_sets, sweep_t, sweep_out,
                      sweep_workers);
        } else if (ablate->parsed()) {
            run_ablate(ablate_manifest, ablate_eval, ablate_config, ablate_sets, ablate_out,
                       ablate_workers);
        } else if (gradcheck_cmd->parsed()) {
            return run_gradcheck_cmd(gc_config, gc_sets, gc_out);
        }
        return 0;
    } catch (const format_error& e) {
        return emit_error("format", e.what(), 3);
    } catch (const io_error& e) {
        return emit_error("io", e.what(), 3);
    } catch (const numeric_error& e) {
        return emit_error("numeric", e.what(), 2);
    } catch (const validation_error& e) {
        return emit_error("validation", e.what(), 1);
    } catch (const std::exception& e) {
        return emit_error("internal", e.what(), 1);
    }
}
