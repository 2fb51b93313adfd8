#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wagcn/errors.hpp"
#include "wagcn/tape.hpp"
#include "wagcn/tensor.hpp"

namespace wagcn {

// How the feature-similarity adjacency is constructed.
enum class GraphVariant { DynA1, DynA2, ParaA, CsimA, JsimA };

// Which graphs drive propagation. LateFusion trains a feature-only and a
// temporal-only branch separately and averages their scores, so it is handled
// by the trainer, not inside a single forward pass.
enum class GraphMode { Global, FeatureOnly, TemporalOnly, LateFusion };

std::string to_string(GraphVariant v);
std::string to_string(GraphMode m);
GraphVariant graph_variant_from_string(const std::string& s);
GraphMode graph_mode_from_string(const std::string& s);

inline bool variant_is_trainable(GraphVariant v) {
    return v == GraphVariant::DynA1 || v == GraphVariant::DynA2 || v == GraphVariant::ParaA;
}

// Trainable adjacency parameters. Only the tensors the selected variant needs
// are allocated; the rest stay empty.
template <typename T>
struct GraphParams {
    Tensor2<T> w1, w2; // DynA1 embeddings, D' x DF each
    Tensor2<T> w;      // DynA2 embedding, D' x DF
    Tensor2<T> p;      // ParaA free matrix, T x T
};

template <typename T>
struct GraphParamVars {
    typename Tape<T>::Var w1, w2, w, p;
};

// A^T_ij = exp(-|i - j|): symmetric, unit diagonal, decaying off the diagonal.
template <typename T>
Tensor2<T> build_temporal_adjacency(std::size_t t) {
    if (t == 0) throw validation_error("build_temporal_adjacency: T must be >= 1");
    Tensor2<T> a(t, t);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < t; ++j)
            a(i, j) = static_cast<T>(
                std::exp(-std::abs(static_cast<double>(i) - static_cast<double>(j))));
    return a;
}

// Cosine similarity of feature rows, clamped to [0, 1]. Zero-norm rows get 0
// off the diagonal and 1 on it.
template <typename T>
Tensor2<T> cosine_adjacency(const Tensor2<T>& x) {
    const std::size_t t = x.rows();
    std::vector<double> norms(t, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
        double s = 0.0;
        for (std::size_t d = 0; d < x.cols(); ++d) s += double(x(i, d)) * double(x(i, d));
        norms[i] = std::sqrt(s);
    }
    Tensor2<T> a(t, t);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
            if (i == j) {
                a(i, j) = T(1);
                continue;
            }
            if (norms[i] == 0.0 || norms[j] == 0.0) {
                a(i, j) = T(0);
                continue;
            }
            double dot = 0.0;
            for (std::size_t d = 0; d < x.cols(); ++d) dot += double(x(i, d)) * double(x(j, d));
            double c = dot / (norms[i] * norms[j]);
            if (c < 0.0) c = 0.0;
            if (c > 1.0) c = 1.0;
            a(i, j) = static_cast<T>(c);
        }
    }
    return a;
}

// Generalized (min/max) Jaccard similarity on ReLU-rectified feature rows.
// Pairs whose max-sum is zero get 0, except the diagonal which is 1.
template <typename T>
Tensor2<T> jaccard_adjacency(const Tensor2<T>& x) {
    const std::size_t t = x.rows();
    const std::size_t d = x.cols();
    std::vector<double> rect(t * d);
    for (std::size_t i = 0; i < t * d; ++i)
        rect[i] = std::max(0.0, static_cast<double>(x.at(i)));
    Tensor2<T> a(t, t);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double mins = 0.0, maxs = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double u = rect[i * d + c];
                const double v = rect[j * d + c];
                mins += std::min(u, v);
                maxs += std::max(u, v);
            }
            double val = maxs == 0.0 ? (i == j ? 1.0 : 0.0) : mins / maxs;
            a(i, j) = static_cast<T>(val);
            a(j, i) = static_cast<T>(val);
        }
    }
    return a;
}

// Feature-similarity adjacency on the tape. Trainable variants stay connected
// to their parameters; CsimA/JsimA are recomputed from the current features
// each forward pass but enter the tape as constants.
template <typename T>
typename Tape<T>::Var build_feature_adjacency(Tape<T>& tape, typename Tape<T>::Var x,
                                              const GraphParamVars<T>& params,
                                              GraphVariant variant) {
    switch (variant) {
        case GraphVariant::DynA1: {
            auto m1 = tape.relu(tape.matmul(x, params.w1));
            auto m2 = tape.relu(tape.matmul(x, params.w2));
            return tape.softmax_rows(tape.matmul(m1, tape.transpose(m2)));
        }
        case GraphVariant::DynA2: {
            auto u = tape.matmul(x, params.w);
            auto e = tape.matmul(u, tape.transpose(u));
            return tape.row_normalize(tape.mul(e, e));
        }
        case GraphVariant::ParaA: {
            const std::size_t t = tape.value(x).rows();
            if (tape.value(params.p).rows() != t)
                throw validation_error("para_a: P is " + tape.value(params.p).shape_str() +
                                       " but the video has " + std::to_string(t) + " segments");
            return tape.softmax_rows(params.p);
        }
        case GraphVariant::CsimA:
            return tape.constant(cosine_adjacency(tape.value(x)));
        case GraphVariant::JsimA:
            return tape.constant(jaccard_adjacency(tape.value(x)));
    }
    throw validation_error("build_feature_adjacency: unknown variant");
}

// Plain-tensor convenience (tests, tools): evaluates the adjacency value
// without keeping a tape alive.
template <typename T>
Tensor2<T> build_feature_adjacency(const Tensor2<T>& x, const GraphParams<T>& params,
                                   GraphVariant variant) {
    Tape<T> tape;
    GraphParamVars<T> vars;
    auto xv = tape.constant(x);
    if (variant == GraphVariant::DynA1) {
        vars.w1 = tape.constant(params.w1);
        vars.w2 = tape.constant(params.w2);
    } else if (variant == GraphVariant::DynA2) {
        vars.w = tape.constant(params.w);
    } else if (variant == GraphVariant::ParaA) {
        vars.p = tape.constant(params.p);
    }
    return tape.value(build_feature_adjacency(tape, xv, vars, variant));
}

// Tape-level combination used inside a forward pass. Single-graph modes only
// need their own matrix; the other handle may stay unset. LateFusion never
// reaches here (the trainer runs one branch per graph).
template <typename T>
typename Tape<T>::Var combine(Tape<T>& tape, typename Tape<T>::Var a_f,
                              typename Tape<T>::Var a_t, GraphMode mode) {
    switch (mode) {
        case GraphMode::Global:
            if (!tape.value(a_f).same_shape(tape.value(a_t)))
                throw validation_error("combine: size mismatch " + tape.value(a_f).shape_str() +
                                       " vs " + tape.value(a_t).shape_str());
            return tape.add(a_f, a_t);
        case GraphMode::FeatureOnly:
            if (!a_f.valid()) throw validation_error("combine: feature graph missing");
            return a_f;
        case GraphMode::TemporalOnly:
            if (!a_t.valid()) throw validation_error("combine: temporal graph missing");
            return a_t;
        case GraphMode::LateFusion:
            throw validation_error("combine: late_fusion is trained as two branches, not one pass");
    }
    throw validation_error("combine: unknown mode");
}

// Plain-tensor combination; late fusion returns both matrices.
template <typename T>
struct CombinedGraph {
    std::vector<Tensor2<T>> propagation; // one matrix, or two for late fusion
};

template <typename T>
CombinedGraph<T> combine(const Tensor2<T>& a_f, const Tensor2<T>& a_t, GraphMode mode) {
    if (!a_f.same_shape(a_t))
        throw validation_error("combine: size mismatch " + a_f.shape_str() + " vs " +
                               a_t.shape_str());
    CombinedGraph<T> out;
    switch (mode) {
        case GraphMode::Global: {
            Tensor2<T> s = a_f;
            for (std::size_t i = 0; i < s.size(); ++i) s.at(i) += a_t.at(i);
            out.propagation.push_back(std::move(s));
            break;
        }
        case GraphMode::FeatureOnly: out.propagation.push_back(a_f); break;
        case GraphMode::TemporalOnly: out.propagation.push_back(a_t); break;
        case GraphMode::LateFusion:
            out.propagation.push_back(a_f);
            out.propagation.push_back(a_t);
            break;
    }
    return out;
}

} // namespace wagcn
