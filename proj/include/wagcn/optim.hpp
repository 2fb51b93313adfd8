#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "wagcn/errors.hpp"
#include "wagcn/tensor.hpp"

namespace wagcn {

// Adam with coupled L2 weight decay: g <- grad + wd * param, then the usual
// first/second-moment update with bias correction. State is per-parameter and
// keyed by registration order, so the caller must pass gradients in the same
// order every step.
template <typename T>
class Adam {
public:
    struct Config {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    Adam() = default;
    explicit Adam(Config cfg) : cfg_(cfg) {
        if (!(cfg_.lr >= 0.0)) throw validation_error("adam: lr must be >= 0");
        if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0))
            throw validation_error("adam: beta1 must be in [0, 1)");
        if (!(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0))
            throw validation_error("adam: beta2 must be in [0, 1)");
        if (!(cfg_.eps > 0.0)) throw validation_error("adam: eps must be > 0");
        if (!(cfg_.weight_decay >= 0.0)) throw validation_error("adam: weight_decay must be >= 0");
    }

    const Config& config() const { return cfg_; }
    std::size_t step_count() const { return t_; }

    // One update over the full parameter list. `params[i]` and `grads[i]`
    // must refer to the same tensor shape; `names[i]` is used in diagnostics.
    void step(const std::vector<std::string>& names, const std::vector<Tensor2<T>*>& params,
              const std::vector<const Tensor2<T>*>& grads) {
        if (params.size() != grads.size() || params.size() != names.size())
            throw validation_error("adam: parameter/gradient list size mismatch");
        if (m_.empty()) {
            m_.reserve(params.size());
            v_.reserve(params.size());
            for (const auto* p : params) {
                m_.emplace_back(p->rows(), p->cols(), T(0));
                v_.emplace_back(p->rows(), p->cols(), T(0));
            }
        } else if (m_.size() != params.size()) {
            throw validation_error("adam: parameter count changed between steps");
        }

        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor2<T>& p = *params[i];
            const Tensor2<T>& g = *grads[i];
            if (!p.same_shape(g))
                throw validation_error("adam: gradient shape " + g.shape_str() +
                                       " does not match parameter " + names[i] + " " +
                                       p.shape_str());
            if (!g.all_finite())
                throw numeric_error("adam: non-finite gradient for parameter " + names[i]);
            if (!m_[i].same_shape(p))
                throw validation_error("adam: state shape drifted for parameter " + names[i]);

            for (std::size_t j = 0; j < p.size(); ++j) {
                const double gj = static_cast<double>(g.at(j)) +
                                  cfg_.weight_decay * static_cast<double>(p.at(j));
                const double mj = cfg_.beta1 * static_cast<double>(m_[i].at(j)) +
                                  (1.0 - cfg_.beta1) * gj;
                const double vj = cfg_.beta2 * static_cast<double>(v_[i].at(j)) +
                                  (1.0 - cfg_.beta2) * gj * gj;
                m_[i].at(j) = static_cast<T>(mj);
                v_[i].at(j) = static_cast<T>(vj);
                const double mhat = mj / bc1;
                const double vhat = vj / bc2;
                p.at(j) = static_cast<T>(static_cast<double>(p.at(j)) -
                                         cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

private:
    Config cfg_;
    std::size_t t_ = 0;
    std::vector<Tensor2<T>> m_, v_;
};

} // namespace wagcn
