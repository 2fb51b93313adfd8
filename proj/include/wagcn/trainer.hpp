#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wagcn/config.hpp"
#include "wagcn/data.hpp"
#include "wagcn/eval.hpp"
#include "wagcn/model.hpp"

namespace wagcn {

struct EpochLogEntry {
    std::size_t epoch = 0; // 1-based
    double loss = 0.0;     // mean per-sample loss across the epoch (and branches)
    std::optional<double> auc;
    double wall_time_sec = 0.0; // the only non-deterministic field anywhere
};

// Initialization seed for branch k of a run. Exposed so tests can reproduce
// the epochs=0 checkpoint.
inline std::uint64_t branch_init_seed(std::uint64_t seed, std::size_t branch) {
    return derive_seed(seed, 0xB1A0 + branch);
}

// One video's features in memory, one matrix per crop; cache follows manifest
// order.
template <typename T>
using FeatureCache = std::vector<std::vector<Tensor2<T>>>;

// Loads every feature file and checks the dataset agrees on one input_dim.
template <typename T>
FeatureCache<T> load_features(const DatasetManifest& manifest);

// Crop-averaged scores for one video, averaged again across branches (late
// fusion averages after the sigmoid).
template <typename T>
std::vector<double> score_video_fused(std::vector<ModelParams<T>>& branches,
                                      const std::vector<Tensor2<T>>& crops);

// Frame-level AUC of the given model over a dataset.
template <typename T>
EvalResult evaluate_model(std::vector<ModelParams<T>>& branches, const DatasetManifest& manifest,
                          const FeatureCache<T>& features);

template <typename T>
struct TrainedModel {
    std::vector<ModelParams<T>> branches; // after the last epoch
    std::optional<std::vector<ModelParams<T>>> best_branches;
    std::optional<double> best_auc;
    std::vector<EpochLogEntry> log;
};

// Core loop: per-epoch seeded shuffle, uniform sampling to cfg.t, mean-reduced
// k-max BCE per batch, Adam step; periodic evaluation when an eval set is
// given (always again at the last epoch). late_fusion trains a feature_only
// and a temporal_only branch side by side.
//
// Deterministic for a fixed seed and precision regardless of `workers`:
// per-sample dropout streams are derived from (seed, branch, epoch, position)
// and gradients are reduced in batch order.
template <typename T>
TrainedModel<T> run_training(const DatasetManifest& train_manifest, const TrainConfig& cfg,
                             const FeatureCache<T>& train_features, std::size_t workers,
                             const DatasetManifest* eval_manifest = nullptr,
                             const FeatureCache<T>* eval_features = nullptr);

// ============================================================================
// Artifact-producing wrappers (used by the CLI)
// ============================================================================

struct TrainSummary {
    std::vector<EpochLogEntry> log;
    std::optional<double> final_auc; // eval of the final parameters
    std::optional<double> best_auc;
    std::string final_checkpoint;
    std::string best_checkpoint; // empty when eval never ran
    std::string log_path;
};

// Writes checkpoint.fckp, checkpoint_best.fckp (when eval ran) and
// train_log.jsonl under out_dir. Precision is dispatched from cfg.precision.
TrainSummary train(const std::string& train_manifest_path, const TrainConfig& cfg,
                   const std::optional<std::string>& eval_manifest_path,
                   const std::string& out_dir, std::size_t workers = 1);

struct SweepRow {
    std::size_t t = 0;
    double auc = 0.0; // final-checkpoint AUC
};

// Independent train+eval per sampling length, identical seeds.
std::vector<SweepRow> sweep_sampling_length(const std::string& train_manifest_path,
                                            const TrainConfig& cfg,
                                            const std::vector<std::size_t>& t_values,
                                            const std::string& eval_manifest_path,
                                            std::size_t workers = 1);

struct AblationRow {
    std::string variant;
    std::string mode;
    bool residual = true;
    double auc = 0.0;               // final-checkpoint AUC
    std::optional<double> best_auc; // best periodic eval, reported alongside
};

// Nine configurations: five adjacency variants with the global graph, the
// dyn_a1 single-graph and late-fusion modes, and dyn_a1 with residuals off.
std::vector<AblationRow> run_ablation(const std::string& train_manifest_path,
                                      const TrainConfig& cfg,
                                      const std::string& eval_manifest_path,
                                      std::size_t workers = 1);

} // namespace wagcn
