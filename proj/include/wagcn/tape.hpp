#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "wagcn/errors.hpp"
#include "wagcn/rng.hpp"
#include "wagcn/tensor.hpp"

namespace wagcn {

// Reverse-mode differentiation over dense matrices. Exactly the primitives the
// network forward pass needs, nothing more: no broadcasting beyond the row
// vector case, no higher-order gradients.
//
// Nodes are appended in creation order; backward walks them in exact reverse
// order, which makes gradient accumulation deterministic.
template <typename T>
class Tape {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    // ---- leaves -----------------------------------------------------------

    Var leaf(Tensor2<T> value, bool requires_grad) {
        Node n;
        n.op = Op::Leaf;
        n.value = std::move(value);
        n.needs_grad = requires_grad;
        return push(std::move(n));
    }

    Var constant(Tensor2<T> value) { return leaf(std::move(value), false); }

    // ---- primitives -------------------------------------------------------

    Var matmul(Var a, Var b) {
        const Tensor2<T>& va = value(a);
        const Tensor2<T>& vb = value(b);
        if (va.cols() != vb.rows())
            throw validation_error("matmul: inner dimensions disagree, " + va.shape_str() +
                                   " vs " + vb.shape_str());
        Node n;
        n.op = Op::MatMul;
        n.inputs = {a.id, b.id};
        n.value = wagcn::matmul(va, vb);
        return push(std::move(n));
    }

    Var transpose(Var a) {
        Node n;
        n.op = Op::Transpose;
        n.inputs = {a.id};
        n.value = wagcn::transpose(value(a));
        return push(std::move(n));
    }

    Var add(Var a, Var b) {
        const Tensor2<T>& va = value(a);
        const Tensor2<T>& vb = value(b);
        if (!va.same_shape(vb))
            throw validation_error("add: shape mismatch " + va.shape_str() + " vs " +
                                   vb.shape_str());
        Node n;
        n.op = Op::Add;
        n.inputs = {a.id, b.id};
        n.value = va;
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value.at(i) += vb.at(i);
        return push(std::move(n));
    }

    // matrix + row vector, broadcast over rows (bias addition)
    Var add_rowvec(Var a, Var b) {
        const Tensor2<T>& va = value(a);
        const Tensor2<T>& vb = value(b);
        if (vb.rows() != 1 || vb.cols() != va.cols())
            throw validation_error("add_rowvec: expected 1x" + std::to_string(va.cols()) +
                                   " row vector, got " + vb.shape_str());
        Node n;
        n.op = Op::AddRowVec;
        n.inputs = {a.id, b.id};
        n.value = va;
        for (std::size_t r = 0; r < va.rows(); ++r)
            for (std::size_t c = 0; c < va.cols(); ++c) n.value(r, c) += vb(0, c);
        return push(std::move(n));
    }

    Var mul(Var a, Var b) {
        const Tensor2<T>& va = value(a);
        const Tensor2<T>& vb = value(b);
        if (!va.same_shape(vb))
            throw validation_error("mul: shape mismatch " + va.shape_str() + " vs " +
                                   vb.shape_str());
        Node n;
        n.op = Op::Mul;
        n.inputs = {a.id, b.id};
        n.value = va;
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value.at(i) *= vb.at(i);
        return push(std::move(n));
    }

    // y = alpha * x + beta, elementwise with scalar constants
    Var affine(Var a, T alpha, T beta) {
        Node n;
        n.op = Op::Affine;
        n.inputs = {a.id};
        n.alpha = alpha;
        n.value = value(a);
        for (std::size_t i = 0; i < n.value.size(); ++i)
            n.value.at(i) = alpha * n.value.at(i) + beta;
        return push(std::move(n));
    }

    Var relu(Var a) {
        Node n;
        n.op = Op::Relu;
        n.inputs = {a.id};
        n.value = value(a);
        for (std::size_t i = 0; i < n.value.size(); ++i)
            if (n.value.at(i) < T(0)) n.value.at(i) = T(0);
        return push(std::move(n));
    }

    Var sigmoid(Var a) {
        Node n;
        n.op = Op::Sigmoid;
        n.inputs = {a.id};
        n.value = value(a);
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            const T x = n.value.at(i);
            // split on sign to avoid exp overflow
            T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                            : std::exp(x) / (T(1) + std::exp(x));
            // keep the output strictly inside (0, 1): saturated inputs round
            // to the closed endpoints in floating point, which would make a
            // downstream log() blow up. The nudged value reproduces the
            // logit-space BCE gradient exactly at saturation.
            if (s >= T(1)) s = std::nextafter(T(1), T(0));
            if (s <= T(0)) s = std::nextafter(T(0), T(1));
            n.value.at(i) = s;
        }
        return push(std::move(n));
    }

    Var log(Var a) {
        Node n;
        n.op = Op::Log;
        n.inputs = {a.id};
        n.value = value(a);
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            if (!(n.value.at(i) > T(0)))
                throw numeric_error("log: non-positive input " +
                                    std::to_string(static_cast<double>(n.value.at(i))));
            n.value.at(i) = std::log(n.value.at(i));
        }
        return push(std::move(n));
    }

    // Row-wise softmax with per-row max subtraction.
    Var softmax_rows(Var a) {
        const Tensor2<T>& va = value(a);
        Node n;
        n.op = Op::SoftmaxRows;
        n.inputs = {a.id};
        n.value = Tensor2<T>(va.rows(), va.cols());
        for (std::size_t r = 0; r < va.rows(); ++r) {
            T mx = va(r, 0);
            for (std::size_t c = 1; c < va.cols(); ++c) mx = std::max(mx, va(r, c));
            T sum = T(0);
            for (std::size_t c = 0; c < va.cols(); ++c) {
                const T e = std::exp(va(r, c) - mx);
                n.value(r, c) = e;
                sum += e;
            }
            for (std::size_t c = 0; c < va.cols(); ++c) n.value(r, c) /= sum;
        }
        return push(std::move(n));
    }

    // L1 row normalization of a non-negative matrix. Rows that sum to zero
    // fall back to the uniform row 1/C and pass no gradient.
    Var row_normalize(Var a) {
        const Tensor2<T>& va = value(a);
        Node n;
        n.op = Op::RowNormalize;
        n.inputs = {a.id};
        n.value = Tensor2<T>(va.rows(), va.cols());
        n.aux = Tensor2<T>(va.rows(), 1);
        for (std::size_t r = 0; r < va.rows(); ++r) {
            T sum = T(0);
            for (std::size_t c = 0; c < va.cols(); ++c) sum += va(r, c);
            n.aux(r, 0) = sum;
            if (sum == T(0)) {
                const T u = T(1) / static_cast<T>(va.cols());
                for (std::size_t c = 0; c < va.cols(); ++c) n.value(r, c) = u;
            } else {
                for (std::size_t c = 0; c < va.cols(); ++c) n.value(r, c) = va(r, c) / sum;
            }
        }
        return push(std::move(n));
    }

    // Inverted dropout. Identity (the input var itself) when not training or
    // rate is zero, so those paths are bit-for-bit transparent.
    Var dropout(Var a, double rate, bool training, RandomStream& rng) {
        if (rate < 0.0 || rate >= 1.0)
            throw validation_error("dropout: rate must be in [0, 1), got " + std::to_string(rate));
        if (!training || rate == 0.0) return a;
        const Tensor2<T>& va = value(a);
        Node n;
        n.op = Op::Dropout;
        n.inputs = {a.id};
        n.value = va;
        n.aux = Tensor2<T>(va.rows(), va.cols());
        const T scale = static_cast<T>(1.0 / (1.0 - rate));
        for (std::size_t i = 0; i < n.value.size(); ++i) {
            const bool keep = rng.uniform01() >= rate;
            n.aux.at(i) = keep ? scale : T(0);
            n.value.at(i) *= n.aux.at(i);
        }
        return push(std::move(n));
    }

    // k largest entries of a column vector, descending, ties broken by lower
    // index. Gradient is routed only to the selected indices.
    Var topk(Var a, std::size_t k) {
        const Tensor2<T>& va = value(a);
        if (va.cols() != 1)
            throw validation_error("topk: expected a column vector, got " + va.shape_str());
        if (k < 1 || k > va.rows())
            throw validation_error("topk: k=" + std::to_string(k) + " out of range [1, " +
                                   std::to_string(va.rows()) + "]");
        Node n;
        n.op = Op::TopK;
        n.inputs = {a.id};
        n.idx = topk_indices(va.vec(), k);
        n.value = Tensor2<T>(k, 1);
        for (std::size_t i = 0; i < k; ++i) n.value(i, 0) = va(n.idx[i], 0);
        return push(std::move(n));
    }

    Var sum(Var a) {
        const Tensor2<T>& va = value(a);
        Node n;
        n.op = Op::Sum;
        n.inputs = {a.id};
        n.value = Tensor2<T>(1, 1);
        T s = T(0);
        for (std::size_t i = 0; i < va.size(); ++i) s += va.at(i);
        n.value(0, 0) = s;
        return push(std::move(n));
    }

    // ---- access ------------------------------------------------------------

    const Tensor2<T>& value(Var v) const { return node(v).value; }

    // Indices chosen by a topk node, in selection (descending value) order.
    const std::vector<std::size_t>& topk_selection(Var v) const {
        const Node& n = node(v);
        if (n.op != Op::TopK)
            throw validation_error("topk_selection: node is not a topk result");
        return n.idx;
    }

    bool has_grad(Var v) const { return node(v).needs_grad && !node(v).grad.empty(); }

    const Tensor2<T>& grad(Var v) const {
        const Node& n = node(v);
        if (!n.needs_grad)
            throw validation_error("grad: node does not require gradients");
        if (n.grad.empty())
            throw validation_error("grad: backward has not been run");
        return n.grad;
    }

    std::size_t num_nodes() const { return nodes_.size(); }

    // ---- backward ----------------------------------------------------------

    // Reverse accumulation from a scalar node; `seed` is dL_total/dL for this
    // tape (1/batch for mean-reduced batches).
    void backward(Var loss, T seed = T(1)) {
        const Node& ln = node(loss);
        if (ln.value.rows() != 1 || ln.value.cols() != 1)
            throw validation_error("backward: loss must be a 1x1 scalar, got " +
                                   ln.value.shape_str());
        for (Node& n : nodes_)
            if (n.needs_grad) n.grad = Tensor2<T>(n.value.rows(), n.value.cols(), T(0));
        if (!node(loss).needs_grad)
            return; // loss independent of every parameter
        node(loss).grad(0, 0) = seed;

        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.needs_grad || n.op == Op::Leaf || n.grad.empty()) continue;
            propagate(n);
        }
    }

    // Fault injection knob for gradcheck self-tests: scales the sigmoid
    // backward rule. 1 means correct behaviour.
    T sigmoid_backward_scale = T(1);

    // Stable top-k index selection (descending, ties -> lower index first).
    static std::vector<std::size_t> topk_indices(const std::vector<T>& v, std::size_t k) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
        order.resize(k);
        return order;
    }

private:
    enum class Op {
        Leaf,
        MatMul,
        Transpose,
        Add,
        AddRowVec,
        Mul,
        Affine,
        Relu,
        Sigmoid,
        Log,
        SoftmaxRows,
        RowNormalize,
        Dropout,
        TopK,
        Sum,
    };

    struct Node {
        Op op = Op::Leaf;
        std::vector<int> inputs;
        Tensor2<T> value;
        Tensor2<T> grad;
        Tensor2<T> aux;               // dropout mask / row sums
        std::vector<std::size_t> idx; // topk selection
        T alpha = T(1);               // affine scale
        bool needs_grad = false;
    };

    Var push(Node n) {
        if (n.op != Op::Leaf) {
            for (int in : n.inputs)
                if (nodes_[static_cast<std::size_t>(in)].needs_grad) n.needs_grad = true;
        }
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Node& node(Var v) {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw validation_error("tape: invalid node handle");
        return nodes_[static_cast<std::size_t>(v.id)];
    }
    const Node& node(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw validation_error("tape: invalid node handle");
        return nodes_[static_cast<std::size_t>(v.id)];
    }

    Tensor2<T>* grad_of(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.needs_grad ? &n.grad : nullptr;
    }

    void propagate(Node& n) {
        const Tensor2<T>& g = n.grad;
        switch (n.op) {
            case Op::MatMul: {
                const Node& a = nodes_[static_cast<std::size_t>(n.inputs[0])];
                const Node& b = nodes_[static_cast<std::size_t>(n.inputs[1])];
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    gemm_acc(*ga, false, true, T(1), g, b.value); // dA += G * B^T
                if (Tensor2<T>* gb = grad_of(n.inputs[1]))
                    gemm_acc(*gb, true, false, T(1), a.value, g); // dB += A^T * G
                break;
            }
            case Op::Transpose: {
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t r = 0; r < g.rows(); ++r)
                        for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(c, r) += g(r, c);
                break;
            }
            case Op::Add: {
                for (int in : n.inputs)
                    if (Tensor2<T>* gi = grad_of(in))
                        for (std::size_t i = 0; i < g.size(); ++i) gi->at(i) += g.at(i);
                break;
            }
            case Op::AddRowVec: {
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < g.size(); ++i) ga->at(i) += g.at(i);
                if (Tensor2<T>* gb = grad_of(n.inputs[1]))
                    for (std::size_t r = 0; r < g.rows(); ++r)
                        for (std::size_t c = 0; c < g.cols(); ++c) (*gb)(0, c) += g(r, c);
                break;
            }
            case Op::Mul: {
                const Tensor2<T>& va = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const Tensor2<T>& vb = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < g.size(); ++i) ga->at(i) += g.at(i) * vb.at(i);
                if (Tensor2<T>* gb = grad_of(n.inputs[1]))
                    for (std::size_t i = 0; i < g.size(); ++i) gb->at(i) += g.at(i) * va.at(i);
                break;
            }
            case Op::Affine: {
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < g.size(); ++i) ga->at(i) += n.alpha * g.at(i);
                break;
            }
            case Op::Relu: {
                // subgradient 0 at exactly 0
                const Tensor2<T>& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < g.size(); ++i)
                        if (x.at(i) > T(0)) ga->at(i) += g.at(i);
                break;
            }
            case Op::Sigmoid: {
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        const T s = n.value.at(i);
                        ga->at(i) += sigmoid_backward_scale * g.at(i) * s * (T(1) - s);
                    }
                break;
            }
            case Op::Log: {
                const Tensor2<T>& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < g.size(); ++i) ga->at(i) += g.at(i) / x.at(i);
                break;
            }
            case Op::SoftmaxRows: {
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                        T dot = T(0);
                        for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * n.value(r, c);
                        for (std::size_t c = 0; c < g.cols(); ++c)
                            (*ga)(r, c) += n.value(r, c) * (g(r, c) - dot);
                    }
                break;
            }
            case Op::RowNormalize: {
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                        const T s = n.aux(r, 0);
                        if (s == T(0)) continue; // uniform fallback row: constant
                        T dot = T(0);
                        for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * n.value(r, c);
                        for (std::size_t c = 0; c < g.cols(); ++c)
                            (*ga)(r, c) += (g(r, c) - dot) / s;
                    }
                break;
            }
            case Op::Dropout: {
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < g.size(); ++i) ga->at(i) += g.at(i) * n.aux.at(i);
                break;
            }
            case Op::TopK: {
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < n.idx.size(); ++i)
                        (*ga)(n.idx[i], 0) += g(i, 0);
                break;
            }
            case Op::Sum: {
                if (Tensor2<T>* ga = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < ga->size(); ++i) ga->at(i) += g(0, 0);
                break;
            }
            case Op::Leaf:
                break;
        }
    }

    std::vector<Node> nodes_;
};

// Non-tape top-k selection: k largest values in descending order plus their
// indices, ties broken by lower index.
template <typename T>
std::pair<std::vector<T>, std::vector<std::size_t>> topk_select(const std::vector<T>& v,
                                                                std::size_t k) {
    if (k < 1 || k > v.size())
        throw validation_error("topk_select: k=" + std::to_string(k) + " out of range [1, " +
                               std::to_string(v.size()) + "]");
    auto idx = Tape<T>::topk_indices(v, k);
    std::vector<T> vals(k);
    for (std::size_t i = 0; i < k; ++i) vals[i] = v[idx[i]];
    return {std::move(vals), std::move(idx)};
}

} // namespace wagcn
