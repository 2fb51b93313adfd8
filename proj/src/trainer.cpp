#include "wagcn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include "json.hpp"

#include "wagcn/checkpoint.hpp"
#include "wagcn/errors.hpp"
#include "wagcn/loss.hpp"
#include "wagcn/optim.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace wagcn {

namespace {

// Stream id for one sample's dropout RNG: unique per (branch, epoch, position
// in the shuffled epoch order), independent of worker scheduling.
std::uint64_t sample_stream(std::size_t branch, std::size_t epoch, std::size_t position) {
    return (std::uint64_t{1} << 62) | (std::uint64_t(branch) << 56) |
           (std::uint64_t(epoch & 0xFFFFFF) << 32) | std::uint64_t(position & 0xFFFFFFFF);
}

std::uint64_t shuffle_stream(std::size_t epoch) {
    return (std::uint64_t{2} << 62) | std::uint64_t(epoch);
}

} // namespace

template <typename T>
FeatureCache<T> load_features(const DatasetManifest& manifest) {
    FeatureCache<T> cache;
    cache.reserve(manifest.records.size());
    std::size_t dim = 0;
    std::string dim_source;
    for (const auto& rec : manifest.records) {
        auto crops = load_video_crops<T>(manifest, rec);
        if (dim == 0) {
            dim = crops[0].cols();
            dim_source = rec.id;
        } else if (crops[0].cols() != dim) {
            throw validation_error("video " + rec.id + " has feature dim " +
                                   std::to_string(crops[0].cols()) + " but video " + dim_source +
                                   " has " + std::to_string(dim));
        }
        cache.push_back(std::move(crops));
    }
    return cache;
}

template <typename T>
std::vector<double> score_video_fused(std::vector<ModelParams<T>>& branches,
                                      const std::vector<Tensor2<T>>& crops) {
    if (branches.empty()) throw validation_error("score: no model branches");
    std::vector<double> mean;
    for (auto& params : branches) {
        auto s = score_video(params, crops);
        if (mean.empty()) {
            mean = std::move(s);
        } else {
            if (s.size() != mean.size())
                throw validation_error("score: branches disagree on segment count");
            for (std::size_t i = 0; i < s.size(); ++i) mean[i] += s[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(branches.size());
    for (double& v : mean) v *= inv;
    return mean;
}

template <typename T>
EvalResult evaluate_model(std::vector<ModelParams<T>>& branches, const DatasetManifest& manifest,
                          const FeatureCache<T>& features) {
    if (features.size() != manifest.records.size())
        throw validation_error("evaluate: feature cache does not match the manifest");
    std::map<std::string, std::vector<double>> scores;
    for (std::size_t v = 0; v < manifest.records.size(); ++v)
        scores[manifest.records[v].id] = score_video_fused(branches, features[v]);
    return dataset_eval(manifest, scores);
}

template <typename T>
TrainedModel<T> run_training(const DatasetManifest& train_manifest, const TrainConfig& cfg,
                             const FeatureCache<T>& train_features, std::size_t workers,
                             const DatasetManifest* eval_manifest,
                             const FeatureCache<T>* eval_features) {
    cfg.validate();
    if (train_manifest.records.empty()) throw validation_error("train: empty manifest");
    if (train_features.size() != train_manifest.records.size())
        throw validation_error("train: feature cache does not match the manifest");
    if (eval_manifest && (!eval_features || eval_features->size() != eval_manifest->records.size()))
        throw validation_error("train: eval feature cache does not match the eval manifest");

    bool has_normal = false, has_abnormal = false;
    for (const auto& rec : train_manifest.records)
        (rec.label == 1 ? has_abnormal : has_normal) = true;
    if (!has_normal || !has_abnormal)
        throw validation_error("train: manifest must contain both normal and abnormal videos");

    const std::size_t input_dim = train_features[0][0].cols();

    std::vector<GraphMode> branch_modes;
    if (cfg.mode == GraphMode::LateFusion)
        branch_modes = {GraphMode::FeatureOnly, GraphMode::TemporalOnly};
    else
        branch_modes = {cfg.mode};

    TrainedModel<T> out;
    std::vector<Adam<T>> optimizers;
    for (std::size_t b = 0; b < branch_modes.size(); ++b) {
        ModelSpec spec = cfg.to_model_spec(input_dim);
        spec.mode = branch_modes[b];
        out.branches.push_back(init_params<T>(spec, branch_init_seed(cfg.seed, b)));
        typename Adam<T>::Config ocfg;
        ocfg.lr = cfg.lr;
        ocfg.weight_decay = cfg.weight_decay;
        optimizers.emplace_back(ocfg);
    }

    struct Sample {
        std::size_t video = 0, crop = 0;
        int label = 0;
    };
    std::vector<Sample> samples;
    for (std::size_t v = 0; v < train_manifest.records.size(); ++v)
        for (std::size_t c = 0; c < train_manifest.records[v].crops; ++c)
            samples.push_back({v, c, train_manifest.records[v].label});

    struct SlotResult {
        double loss = 0.0;
        std::vector<Tensor2<T>> grads; // aligned with the branch's named_tensors()
        std::exception_ptr error;
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        auto order = samples;
        RandomStream shuffle_rng(derive_seed(cfg.seed, shuffle_stream(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t loss_count = 0;

        for (std::size_t batch_start = 0; batch_start < order.size();
             batch_start += cfg.batch_size) {
            const std::size_t bsz = std::min(cfg.batch_size, order.size() - batch_start);

            for (std::size_t b = 0; b < out.branches.size(); ++b) {
                auto named = out.branches[b].named_tensors();
                std::vector<SlotResult> slots(bsz);

                auto process = [&](std::size_t slot) {
                    try {
                        const Sample& s = order[batch_start + slot];
                        const Tensor2<T>& full = train_features[s.video][s.crop];
                        const auto idx = uniform_sample_indices(full.rows(), cfg.t);
                        Tensor2<T> x = select_rows(full, idx);

                        RandomStream dropout_rng(derive_seed(
                            cfg.seed, sample_stream(b, epoch, batch_start + slot)));
                        auto fo = forward(out.branches[b], x, /*training=*/true, dropout_rng);
                        auto loss = kmax_bce(fo.tape, fo.scores, s.label);

                        const double lval = static_cast<double>(fo.tape.value(loss)(0, 0));
                        if (!std::isfinite(lval))
                            throw numeric_error(
                                "train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                ", batch " + std::to_string(batch_start / cfg.batch_size + 1) +
                                ", video " + train_manifest.records[s.video].id);

                        fo.tape.backward(loss, T(1) / static_cast<T>(bsz));

                        SlotResult& res = slots[slot];
                        res.loss = lval;
                        res.grads.reserve(named.size());
                        for (const auto& [name, ptr] : named) {
                            bool found = false;
                            for (const auto& [vname, var] : fo.param_vars) {
                                if (vname == name) {
                                    res.grads.push_back(fo.tape.grad(var));
                                    found = true;
                                    break;
                                }
                            }
                            if (!found)
                                throw validation_error("train: forward never registered " + name);
                        }
                    } catch (...) {
                        slots[slot].error = std::current_exception();
                    }
                };

                const std::size_t nw = std::min(std::max<std::size_t>(workers, 1), bsz);
                if (nw <= 1) {
                    for (std::size_t slot = 0; slot < bsz; ++slot) process(slot);
                } else {
                    std::vector<std::thread> pool;
                    pool.reserve(nw);
                    for (std::size_t w = 0; w < nw; ++w)
                        pool.emplace_back([&, w] {
                            for (std::size_t slot = w; slot < bsz; slot += nw) process(slot);
                        });
                    for (auto& th : pool) th.join();
                }

                for (std::size_t slot = 0; slot < bsz; ++slot)
                    if (slots[slot].error) std::rethrow_exception(slots[slot].error);

                // reduce in batch order, then one optimizer step on the means
                std::vector<Tensor2<T>> acc;
                acc.reserve(named.size());
                for (const auto& [name, ptr] : named)
                    acc.emplace_back(ptr->rows(), ptr->cols(), T(0));
                for (std::size_t slot = 0; slot < bsz; ++slot) {
                    for (std::size_t i = 0; i < named.size(); ++i) {
                        const Tensor2<T>& g = slots[slot].grads[i];
                        for (std::size_t j = 0; j < g.size(); ++j) acc[i].at(j) += g.at(j);
                    }
                    loss_sum += slots[slot].loss;
                    ++loss_count;
                }

                std::vector<std::string> names;
                std::vector<Tensor2<T>*> params;
                std::vector<const Tensor2<T>*> grads;
                for (std::size_t i = 0; i < named.size(); ++i) {
                    names.push_back(named[i].first);
                    params.push_back(named[i].second);
                    grads.push_back(&acc[i]);
                }
                optimizers[b].step(names, params, grads);
            }
        }

        for (std::size_t b = 0; b < out.branches.size(); ++b)
            for (const auto& [name, ptr] : out.branches[b].named_tensors())
                if (!ptr->all_finite())
                    throw numeric_error("train: parameter " + name + " is non-finite after epoch " +
                                        std::to_string(epoch + 1));

        EpochLogEntry entry;
        entry.epoch = epoch + 1;
        entry.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;

        const bool last_epoch = epoch + 1 == cfg.epochs;
        if (eval_manifest && ((epoch + 1) % cfg.eval_every == 0 || last_epoch)) {
            const double auc =
                evaluate_model(out.branches, *eval_manifest, *eval_features).auc;
            entry.auc = auc;
            if (!out.best_auc || auc > *out.best_auc) {
                out.best_auc = auc;
                out.best_branches = out.branches;
            }
        }

        entry.wall_time_sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.log.push_back(entry);
    }

    return out;
}

// ============================================================================
// Artifact-producing wrappers
// ============================================================================

namespace {

ordered_json log_entry_json(const EpochLogEntry& e) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    if (e.auc) j["auc"] = *e.auc;
    j["wall_time_sec"] = e.wall_time_sec;
    return j;
}

template <typename T>
TrainSummary train_impl(const DatasetManifest& man, const std::optional<DatasetManifest>& eman,
                        const TrainConfig& cfg, const std::string& out_dir,
                        std::size_t workers) {
    FeatureCache<T> feats = load_features<T>(man);
    std::optional<FeatureCache<T>> efeats;
    if (eman) efeats = load_features<T>(*eman);

    auto model = run_training<T>(man, cfg, feats, workers, eman ? &*eman : nullptr,
                                 efeats ? &*efeats : nullptr);

    TrainSummary summary;
    summary.log = model.log;
    summary.best_auc = model.best_auc;
    if (!model.log.empty() && model.log.back().auc) {
        summary.final_auc = model.log.back().auc;
    } else if (eman && cfg.epochs == 0) {
        summary.final_auc = evaluate_model(model.branches, *eman, *efeats).auc;
    }

    summary.final_checkpoint = (fs::path(out_dir) / "checkpoint.fckp").string();
    save_checkpoint(summary.final_checkpoint, model.branches, cfg.seed);
    if (model.best_branches) {
        summary.best_checkpoint = (fs::path(out_dir) / "checkpoint_best.fckp").string();
        save_checkpoint(summary.best_checkpoint, *model.best_branches, cfg.seed);
    }

    summary.log_path = (fs::path(out_dir) / "train_log.jsonl").string();
    std::ofstream log_out(summary.log_path, std::ios::trunc);
    if (!log_out) throw io_error("cannot open " + summary.log_path + " for writing");
    for (const auto& e : model.log) log_out << log_entry_json(e).dump() << "\n";
    if (!log_out) throw io_error("write failed for " + summary.log_path);

    return summary;
}

} // namespace

TrainSummary train(const std::string& train_manifest_path, const TrainConfig& cfg,
                   const std::optional<std::string>& eval_manifest_path,
                   const std::string& out_dir, std::size_t workers) {
    cfg.validate();
    DatasetManifest man = load_manifest(train_manifest_path);
    std::optional<DatasetManifest> eman;
    if (eval_manifest_path) eman = load_manifest(*eval_manifest_path);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create output directory " + out_dir + ": " + ec.message());

    if (cfg.precision == "single") return train_impl<float>(man, eman, cfg, out_dir, workers);
    return train_impl<double>(man, eman, cfg, out_dir, workers);
}

namespace {

template <typename T>
std::vector<SweepRow> sweep_impl(const DatasetManifest& man, const DatasetManifest& eman,
                                 const TrainConfig& cfg, const std::vector<std::size_t>& ts,
                                 std::size_t workers) {
    FeatureCache<T> feats = load_features<T>(man);
    FeatureCache<T> efeats = load_features<T>(eman);

    std::vector<SweepRow> rows;
    for (std::size_t t : ts) {
        TrainConfig c = cfg;
        c.t = t;
        auto model = run_training<T>(man, c, feats, workers, &eman, &efeats);
        SweepRow row;
        row.t = t;
        row.auc = model.log.empty() || !model.log.back().auc
                      ? evaluate_model(model.branches, eman, efeats).auc
                      : *model.log.back().auc;
        rows.push_back(row);
    }
    return rows;
}

template <typename T>
std::vector<AblationRow> ablation_impl(const DatasetManifest& man, const DatasetManifest& eman,
                                       const TrainConfig& cfg, std::size_t workers) {
    FeatureCache<T> feats = load_features<T>(man);
    FeatureCache<T> efeats = load_features<T>(eman);

    std::vector<TrainConfig> configs;
    for (GraphVariant v : {GraphVariant::DynA1, GraphVariant::DynA2, GraphVariant::ParaA,
                           GraphVariant::CsimA, GraphVariant::JsimA}) {
        TrainConfig c = cfg;
        c.variant = v;
        c.mode = GraphMode::Global;
        configs.push_back(c);
    }
    for (GraphMode m :
         {GraphMode::FeatureOnly, GraphMode::TemporalOnly, GraphMode::LateFusion}) {
        TrainConfig c = cfg;
        c.variant = GraphVariant::DynA1;
        c.mode = m;
        configs.push_back(c);
    }
    {
        TrainConfig c = cfg;
        c.variant = GraphVariant::DynA1;
        c.mode = GraphMode::Global;
        c.residual = false;
        configs.push_back(c);
    }

    std::vector<AblationRow> rows;
    for (const TrainConfig& c : configs) {
        auto model = run_training<T>(man, c, feats, workers, &eman, &efeats);
        AblationRow row;
        row.variant = to_string(c.variant);
        row.mode = to_string(c.mode);
        row.residual = c.residual;
        row.auc = model.log.empty() || !model.log.back().auc
                      ? evaluate_model(model.branches, eman, efeats).auc
                      : *model.log.back().auc;
        row.best_auc = model.best_auc;
        rows.push_back(row);
    }
    return rows;
}

} // namespace

std::vector<SweepRow> sweep_sampling_length(const std::string& train_manifest_path,
                                            const TrainConfig& cfg,
                                            const std::vector<std::size_t>& t_values,
                                            const std::string& eval_manifest_path,
                                            std::size_t workers) {
    if (t_values.empty()) throw validation_error("sweep: need at least one sampling length");
    for (std::size_t t : t_values)
        if (t == 0) throw validation_error("sweep: sampling lengths must be >= 1");
    cfg.validate();
    DatasetManifest man = load_manifest(train_manifest_path);
    DatasetManifest eman = load_manifest(eval_manifest_path);
    if (cfg.precision == "single") return sweep_impl<float>(man, eman, cfg, t_values, workers);
    return sweep_impl<double>(man, eman, cfg, t_values, workers);
}

std::vector<AblationRow> run_ablation(const std::string& train_manifest_path,
                                      const TrainConfig& cfg,
                                      const std::string& eval_manifest_path,
                                      std::size_t workers) {
    cfg.validate();
    DatasetManifest man = load_manifest(train_manifest_path);
    DatasetManifest eman = load_manifest(eval_manifest_path);
    if (cfg.precision == "single") return ablation_impl<float>(man, eman, cfg, workers);
    return ablation_impl<double>(man, eman, cfg, workers);
}

// explicit instantiations for the two supported precisions
template FeatureCache<float> load_features<float>(const DatasetManifest&);
template FeatureCache<double> load_features<double>(const DatasetManifest&);
template std::vector<double> score_video_fused<float>(std::vector<ModelParams<float>>&,
                                                      const std::vector<Tensor2<float>>&);
template std::vector<double> score_video_fused<double>(std::vector<ModelParams<double>>&,
                                                       const std::vector<Tensor2<double>>&);
template EvalResult evaluate_model<float>(std::vector<ModelParams<float>>&,
                                          const DatasetManifest&, const FeatureCache<float>&);
template EvalResult evaluate_model<double>(std::vector<ModelParams<double>>&,
                                           const DatasetManifest&, const FeatureCache<double>&);
template TrainedModel<float> run_training<float>(const DatasetManifest&, const TrainConfig&,
                                                 const FeatureCache<float>&, std::size_t,
                                                 const DatasetManifest*,
                                                 const FeatureCache<float>*);
template TrainedModel<double> run_training<double>(const DatasetManifest&, const TrainConfig&,
                                                   const FeatureCache<double>&, std::size_t,
                                                   const DatasetManifest*,
                                                   const FeatureCache<double>*);

} // namespace wagcn
