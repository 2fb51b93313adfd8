#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wagcn/errors.hpp"
#include "wagcn/graph.hpp"
#include "wagcn/rng.hpp"
#include "wagcn/tape.hpp"
#include "wagcn/tensor.hpp"

namespace wagcn {

// Architecture description, shared across precisions.
//
// dims = [D', D^1, ..., D^L] with D^L = 1: an FC reduction D -> D' followed by
// L graph-convolution layers. The first L-1 layers use ReLU + dropout, the
// last a sigmoid score head. Residual projections sit beside every layer whose
// input and output widths differ (identity otherwise) and can be disabled.
struct ModelSpec {
    std::size_t input_dim = 2048;
    std::vector<std::size_t> dims = {512, 128, 32, 1};
    std::size_t embed_dim = 512; // DF, width of the adjacency embeddings
    GraphVariant variant = GraphVariant::DynA1;
    GraphMode mode = GraphMode::Global;
    bool residual = true;
    double dropout = 0.6;
    std::size_t train_t = 150; // training segment count; sizes ParaA's P

    std::size_t num_layers() const { return dims.size() - 1; }
    // temporal_only propagates through A^T alone, so A^F parameters are
    // neither allocated nor trained for that mode.
    bool uses_feature_graph() const { return mode != GraphMode::TemporalOnly; }
    bool uses_temporal_graph() const { return mode != GraphMode::FeatureOnly; }

    void validate() const {
        if (input_dim == 0) throw validation_error("model: input_dim must be >= 1");
        if (dims.size() < 2) throw validation_error("model: dims needs at least [D', 1]");
        for (std::size_t d : dims)
            if (d == 0) throw validation_error("model: every layer width must be >= 1");
        if (dims.back() != 1) throw validation_error("model: last layer width must be 1");
        if (embed_dim == 0) throw validation_error("model: embed_dim must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0)
            throw validation_error("model: dropout must be in [0, 1)");
        if (train_t == 0) throw validation_error("model: train_t must be >= 1");
    }
};

template <typename T>
struct ModelParams {
    ModelSpec spec;

    Tensor2<T> fc_w; // D x D'
    Tensor2<T> fc_b; // 1 x D'
    GraphParams<T> graph;

    struct Layer {
        Tensor2<T> w;              // D^{l-1} x D^l
        Tensor2<T> res_w, res_b;   // projection, empty when identity or residual off
        bool has_projection() const { return !res_w.empty(); }
    };
    std::vector<Layer> layers;

    // Stable enumeration of every trainable tensor; drives initialization
    // order, the optimizer, gradcheck and checkpoints.
    std::vector<std::pair<std::string, Tensor2<T>*>> named_tensors() {
        std::vector<std::pair<std::string, Tensor2<T>*>> out;
        out.emplace_back("fc.w", &fc_w);
        out.emplace_back("fc.b", &fc_b);
        if (spec.uses_feature_graph()) {
            switch (spec.variant) {
                case GraphVariant::DynA1:
                    out.emplace_back("graph.w1", &graph.w1);
                    out.emplace_back("graph.w2", &graph.w2);
                    break;
                case GraphVariant::DynA2: out.emplace_back("graph.w", &graph.w); break;
                case GraphVariant::ParaA: out.emplace_back("graph.p", &graph.p); break;
                default: break; // CsimA / JsimA carry no parameters
            }
        }
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string base = "gcn." + std::to_string(l);
            out.emplace_back(base + ".w", &layers[l].w);
            if (layers[l].has_projection()) {
                out.emplace_back(base + ".res.w", &layers[l].res_w);
                out.emplace_back(base + ".res.b", &layers[l].res_b);
            }
        }
        return out;
    }

    std::vector<std::pair<std::string, const Tensor2<T>*>> named_tensors() const {
        auto mut = const_cast<ModelParams*>(this)->named_tensors();
        std::vector<std::pair<std::string, const Tensor2<T>*>> out;
        out.reserve(mut.size());
        for (auto& [name, ptr] : mut) out.emplace_back(name, ptr);
        return out;
    }
};

namespace detail {
template <typename T>
Tensor2<T> uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in,
                        RandomStream& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    Tensor2<T> w(rows, cols);
    for (std::size_t i = 0; i < w.size(); ++i)
        w.at(i) = static_cast<T>(rng.uniform(-bound, bound));
    return w;
}
} // namespace detail

// Zero-filled parameters with the shapes the ModelSpec dictates; checkpoint
// loading fills them in.
template <typename T>
ModelParams<T> make_params_shell(const ModelSpec& spec) {
    spec.validate();
    ModelParams<T> p;
    p.spec = spec;
    const std::size_t d_red = spec.dims[0];
    p.fc_w = Tensor2<T>(spec.input_dim, d_red, T(0));
    p.fc_b = Tensor2<T>(1, d_red, T(0));
    if (spec.uses_feature_graph()) {
        switch (spec.variant) {
            case GraphVariant::DynA1:
                p.graph.w1 = Tensor2<T>(d_red, spec.embed_dim, T(0));
                p.graph.w2 = Tensor2<T>(d_red, spec.embed_dim, T(0));
                break;
            case GraphVariant::DynA2:
                p.graph.w = Tensor2<T>(d_red, spec.embed_dim, T(0));
                break;
            case GraphVariant::ParaA:
                p.graph.p = Tensor2<T>(spec.train_t, spec.train_t, T(0));
                break;
            default: break;
        }
    }
    p.layers.resize(spec.num_layers());
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t din = spec.dims[l];
        const std::size_t dout = spec.dims[l + 1];
        p.layers[l].w = Tensor2<T>(din, dout, T(0));
        if (spec.residual && din != dout) {
            p.layers[l].res_w = Tensor2<T>(din, dout, T(0));
            p.layers[l].res_b = Tensor2<T>(1, dout, T(0));
        }
    }
    return p;
}

// Weights uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)], biases zero, ParaA's P
// zero (uniform rows after softmax). Deterministic given the seed.
template <typename T>
ModelParams<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    ModelParams<T> p;
    p.spec = spec;
    RandomStream rng(derive_seed(seed, 0x1717));

    const std::size_t d_red = spec.dims[0];
    p.fc_w = detail::uniform_init<T>(spec.input_dim, d_red, spec.input_dim, rng);
    p.fc_b = Tensor2<T>(1, d_red, T(0));

    if (spec.uses_feature_graph()) {
        switch (spec.variant) {
            case GraphVariant::DynA1:
                p.graph.w1 = detail::uniform_init<T>(d_red, spec.embed_dim, d_red, rng);
                p.graph.w2 = detail::uniform_init<T>(d_red, spec.embed_dim, d_red, rng);
                break;
            case GraphVariant::DynA2:
                p.graph.w = detail::uniform_init<T>(d_red, spec.embed_dim, d_red, rng);
                break;
            case GraphVariant::ParaA:
                // zero P = uniform attention after the row softmax
                p.graph.p = Tensor2<T>(spec.train_t, spec.train_t, T(0));
                break;
            default: break;
        }
    }

    p.layers.resize(spec.num_layers());
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t din = spec.dims[l];
        const std::size_t dout = spec.dims[l + 1];
        p.layers[l].w = detail::uniform_init<T>(din, dout, din, rng);
        if (spec.residual && din != dout) {
            p.layers[l].res_w = detail::uniform_init<T>(din, dout, din, rng);
            p.layers[l].res_b = Tensor2<T>(1, dout, T(0));
        }
    }
    return p;
}

template <typename T>
struct ForwardOutput {
    Tape<T> tape;
    typename Tape<T>::Var scores; // T x 1, entries strictly in (0, 1)
    // Parameter leaves, aligned with ModelParams::named_tensors().
    std::vector<std::pair<std::string, typename Tape<T>::Var>> param_vars;
};

// One pass of Eq-style graph convolution over a single crop's features.
// Training mode records gradients and applies dropout from `rng`; inference
// mode is deterministic and grad-free.
template <typename T>
ForwardOutput<T> forward(ModelParams<T>& params, const Tensor2<T>& features, bool training,
                         RandomStream& rng) {
    const ModelSpec& spec = params.spec;
    if (features.cols() != spec.input_dim)
        throw validation_error("forward: features are " + features.shape_str() +
                               " but the model expects input_dim=" +
                               std::to_string(spec.input_dim));
    if (features.rows() == 0) throw validation_error("forward: need at least one segment");
    if (!features.all_finite()) throw validation_error("forward: features contain NaN/Inf");
    if (spec.mode == GraphMode::LateFusion)
        throw validation_error(
            "forward: late_fusion is trained as two branches; pick one graph per pass");

    ForwardOutput<T> out;
    Tape<T>& tape = out.tape;
    const bool needs_grad = training;

    auto reg = [&](const std::string& name, const Tensor2<T>& t) {
        auto v = tape.leaf(t, needs_grad);
        out.param_vars.emplace_back(name, v);
        return v;
    };

    auto fc_w = reg("fc.w", params.fc_w);
    auto fc_b = reg("fc.b", params.fc_b);
    GraphParamVars<T> gvars;
    if (spec.uses_feature_graph()) {
        switch (spec.variant) {
            case GraphVariant::DynA1:
                gvars.w1 = reg("graph.w1", params.graph.w1);
                gvars.w2 = reg("graph.w2", params.graph.w2);
                break;
            case GraphVariant::DynA2: gvars.w = reg("graph.w", params.graph.w); break;
            case GraphVariant::ParaA: gvars.p = reg("graph.p", params.graph.p); break;
            default: break;
        }
    }

    auto x = tape.constant(features);
    x = tape.relu(tape.add_rowvec(tape.matmul(x, fc_w), fc_b)); // X^0, T x D'

    typename Tape<T>::Var a_f, a_t;
    if (spec.uses_feature_graph()) a_f = build_feature_adjacency(tape, x, gvars, spec.variant);
    if (spec.uses_temporal_graph())
        a_t = tape.constant(build_temporal_adjacency<T>(features.rows()));
    auto a = combine(tape, a_f, a_t, spec.mode);

    const std::size_t num_layers = spec.num_layers();
    for (std::size_t l = 0; l < num_layers; ++l) {
        auto w = reg("gcn." + std::to_string(l) + ".w", params.layers[l].w);
        auto conv = tape.matmul(tape.matmul(a, x), w);

        typename Tape<T>::Var res;
        if (spec.residual) {
            if (params.layers[l].has_projection()) {
                auto rw = reg("gcn." + std::to_string(l) + ".res.w", params.layers[l].res_w);
                auto rb = reg("gcn." + std::to_string(l) + ".res.b", params.layers[l].res_b);
                res = tape.add_rowvec(tape.matmul(x, rw), rb);
            } else {
                res = x;
            }
        }

        if (l + 1 < num_layers) {
            auto act = tape.relu(conv);
            if (res.valid()) act = tape.add(act, res);
            x = tape.dropout(act, spec.dropout, training, rng);
        } else {
            // score head: residual joins before the sigmoid so scores stay in (0,1)
            auto pre = res.valid() ? tape.add(conv, res) : conv;
            x = tape.sigmoid(pre);
        }
    }
    out.scores = x;
    return out;
}

// Deterministic inference on one crop; returns segment scores as doubles.
template <typename T>
std::vector<double> forward_scores(ModelParams<T>& params, const Tensor2<T>& features) {
    RandomStream rng(0); // unused: dropout is inactive at inference
    auto fo = forward(params, features, /*training=*/false, rng);
    const Tensor2<T>& s = fo.tape.value(fo.scores);
    std::vector<double> scores(s.rows());
    for (std::size_t i = 0; i < s.rows(); ++i) scores[i] = static_cast<double>(s(i, 0));
    return scores;
}

// Nearest sampled position for every original segment; ties go to the earlier
// sample. Used to map fixed-length ParaA scores back onto full-length videos.
std::vector<std::size_t> nearest_sample_map(const std::vector<std::size_t>& sampled_indices,
                                            std::size_t t_full);

// Training-time uniform segment sampling lives in data.hpp; declared here for
// the ParaA inference path.
std::vector<std::size_t> uniform_sample_indices(std::size_t t_full, std::size_t t);

template <typename T>
Tensor2<T> select_rows(const Tensor2<T>& m, const std::vector<std::size_t>& rows) {
    Tensor2<T> out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < m.cols(); ++c) out(i, c) = m(rows[i], c);
    return out;
}

// Full-length inference over all crops of one video: every crop is scored
// independently and the per-segment scores are averaged. ParaA resamples each
// crop to the trained length and maps scores back by nearest sampled segment.
template <typename T>
std::vector<double> score_video(ModelParams<T>& params, const std::vector<Tensor2<T>>& crops) {
    if (crops.empty()) throw validation_error("score_video: need at least one crop");
    const std::size_t t_full = crops[0].rows();
    if (t_full == 0) throw validation_error("score_video: need at least one segment");
    for (const auto& c : crops)
        if (c.rows() != t_full || c.cols() != crops[0].cols())
            throw validation_error("score_video: crops disagree on shape, " + c.shape_str() +
                                   " vs " + crops[0].shape_str());

    std::vector<double> mean(t_full, 0.0);
    for (const auto& crop : crops) {
        std::vector<double> s;
        if (params.spec.variant == GraphVariant::ParaA && t_full != params.spec.train_t) {
            const auto idx = uniform_sample_indices(t_full, params.spec.train_t);
            const auto sampled = forward_scores(params, select_rows(crop, idx));
            const auto back = nearest_sample_map(idx, t_full);
            s.resize(t_full);
            for (std::size_t j = 0; j < t_full; ++j) s[j] = sampled[back[j]];
        } else {
            s = forward_scores(params, crop);
        }
        for (std::size_t j = 0; j < t_full; ++j) mean[j] += s[j];
    }
    const double inv = 1.0 / static_cast<double>(crops.size());
    for (double& v : mean) v *= inv;
    return mean;
}

} // namespace wagcn
