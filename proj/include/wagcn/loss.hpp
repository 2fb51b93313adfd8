#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wagcn/errors.hpp"
#include "wagcn/tape.hpp"

namespace wagcn {

// k = floor(T/8) + 1: how many top segment scores enter the video-level loss.
inline std::size_t compute_k(std::size_t t) {
    if (t == 0) throw validation_error("compute_k: need at least one segment");
    return t / 8 + 1;
}

// k-max BCE against the video label: mean BCE over the k largest scores.
//   label 1:  -1/k * sum log(s_i)        over the selected set
//   label 0:  -1/k * sum log(1 - s_i)
// Scores must lie strictly in (0, 1); the sigmoid head guarantees that.
template <typename T>
typename Tape<T>::Var kmax_bce(Tape<T>& tape, typename Tape<T>::Var scores, int label) {
    const Tensor2<T>& s = tape.value(scores);
    if (s.cols() != 1)
        throw validation_error("kmax_bce: scores must be a column vector, got " + s.shape_str());
    if (label != 0 && label != 1)
        throw validation_error("kmax_bce: label must be 0 or 1, got " + std::to_string(label));
    for (std::size_t i = 0; i < s.rows(); ++i) {
        const double v = static_cast<double>(s(i, 0));
        if (!(v > 0.0 && v < 1.0))
            throw validation_error("kmax_bce: score " + std::to_string(v) + " at segment " +
                                   std::to_string(i) + " is outside (0, 1)");
    }

    const std::size_t k = compute_k(s.rows());
    auto sel = tape.topk(scores, k); // k x 1, the k largest scores
    typename Tape<T>::Var logs;
    if (label == 1) {
        logs = tape.log(sel);
    } else {
        // log(1 - s) via affine: 1 - s then log
        logs = tape.log(tape.affine(sel, T(-1), T(1)));
    }
    const T scale = T(-1) / static_cast<T>(k);
    return tape.affine(tape.sum(logs), scale, T(0)); // 1 x 1 scalar
}

} // namespace wagcn
