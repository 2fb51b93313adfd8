#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wagcn/errors.hpp"
#include "wagcn/loss.hpp"
#include "wagcn/model.hpp"
#include "wagcn/rng.hpp"

namespace wagcn {

// Small-model finite-difference check of the full loss pipeline.
//
// Meaningful for the differentiable adjacencies (dyn_a1, dyn_a2, para_a) and
// any residual/mode setting. csim_a/jsim_a stop the gradient through the
// adjacency on purpose, so a finite-difference probe of fc.* reports that
// (intended) discrepancy as a failure.
struct GradcheckConfig {
    std::size_t t = 8;
    std::size_t d = 16;
    std::vector<std::size_t> dims = {16, 8, 4, 1};
    std::size_t embed_dim = 16;
    GraphVariant variant = GraphVariant::DynA1;
    GraphMode mode = GraphMode::Global;
    bool residual = true;
    double dropout = 0.6;
    std::uint64_t seed = 1;
    double h = 1e-6;
    double tolerance = 1e-4;

    ModelSpec to_model_spec() const {
        ModelSpec spec;
        spec.input_dim = d;
        spec.dims = dims;
        spec.embed_dim = embed_dim;
        spec.variant = variant;
        spec.mode = mode;
        spec.residual = residual;
        spec.dropout = dropout;
        spec.train_t = t;
        return spec;
    }
};

struct GradReport {
    struct Param {
        std::string name;
        double max_rel_err = 0.0;
        double max_abs_err = 0.0;
    };
    std::vector<Param> params;
    double tolerance = 0.0;
    bool pass = false;

    double max_rel_err() const {
        double m = 0.0;
        for (const auto& p : params) m = std::max(m, p.max_rel_err);
        return m;
    }
};

// Compares tape gradients against central finite differences, perturbing every
// scalar parameter by ±h. Both labels (anomalous / normal) are checked and the
// worst error per parameter is reported. The dropout mask is pinned by
// reseeding the stream before every forward, so the loss is a fixed smooth
// function of the parameters across perturbations.
//
// `tape_hook` runs on the gradient tape before backward; tests use it to
// inject faults and confirm the check catches them.
template <typename T = double>
GradReport run_gradcheck(const GradcheckConfig& cfg,
                         const std::function<void(Tape<T>&)>& tape_hook = nullptr) {
    const ModelSpec spec = cfg.to_model_spec();
    ModelParams<T> params = init_params<T>(spec, cfg.seed);

    RandomStream feat_rng(derive_seed(cfg.seed, 0xFEA7));
    Tensor2<T> features(cfg.t, cfg.d);
    for (std::size_t i = 0; i < features.size(); ++i)
        features.at(i) = static_cast<T>(feat_rng.gaussian());

    const std::uint64_t mask_seed = derive_seed(cfg.seed, 0xD509);
    auto eval_loss = [&](int label) -> double {
        RandomStream drop_rng(mask_seed);
        auto fo = forward(params, features, /*training=*/true, drop_rng);
        auto loss = kmax_bce(fo.tape, fo.scores, label);
        return static_cast<double>(fo.tape.value(loss)(0, 0));
    };

    GradReport report;
    report.tolerance = cfg.tolerance;
    auto named = params.named_tensors();
    report.params.resize(named.size());
    for (std::size_t i = 0; i < named.size(); ++i) report.params[i].name = named[i].first;

    for (int label : {1, 0}) {
        // tape gradients at the unperturbed point
        RandomStream drop_rng(mask_seed);
        auto fo = forward(params, features, /*training=*/true, drop_rng);
        auto loss = kmax_bce(fo.tape, fo.scores, label);
        if (tape_hook) tape_hook(fo.tape);
        fo.tape.backward(loss);

        std::vector<Tensor2<T>> tape_grads;
        tape_grads.reserve(named.size());
        for (std::size_t i = 0; i < named.size(); ++i) {
            auto it = std::find_if(fo.param_vars.begin(), fo.param_vars.end(),
                                   [&](const auto& pv) { return pv.first == named[i].first; });
            if (it == fo.param_vars.end())
                throw validation_error("gradcheck: forward never registered parameter " +
                                       named[i].first);
            tape_grads.push_back(fo.tape.grad(it->second));
        }

        for (std::size_t i = 0; i < named.size(); ++i) {
            Tensor2<T>& tensor = *named[i].second;
            for (std::size_t j = 0; j < tensor.size(); ++j) {
                const T orig = tensor.at(j);
                tensor.at(j) = static_cast<T>(static_cast<double>(orig) + cfg.h);
                const double up = eval_loss(label);
                tensor.at(j) = static_cast<T>(static_cast<double>(orig) - cfg.h);
                const double down = eval_loss(label);
                tensor.at(j) = orig;

                const double g_fd = (up - down) / (2.0 * cfg.h);
                const double g_tape = static_cast<double>(tape_grads[i].at(j));
                const double abs_err = std::abs(g_tape - g_fd);
                const double rel_err = abs_err / std::max(1.0, std::abs(g_fd));
                report.params[i].max_abs_err = std::max(report.params[i].max_abs_err, abs_err);
                report.params[i].max_rel_err = std::max(report.params[i].max_rel_err, rel_err);
            }
        }
    }

    report.pass = true;
    for (const auto& p : report.params)
        if (!(p.max_rel_err < cfg.tolerance)) report.pass = false;
    return report;
}

} // namespace wagcn
