#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lsa/tensor.hpp"

namespace lsa {

// Adaptive-moment gradient descent. One instance owns the moment state for a
// fixed list of parameter tensors; call step() with gradients in the same
// order every iteration.
class Adam {
  public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
        if (state_.empty()) {
            state_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                state_[i].m = Tensor(params[i]->shape, 0.0);
                state_[i].v = Tensor(params[i]->shape, 0.0);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            const Tensor& g = *grads[i];
            Tensor& m = state_[i].m;
            Tensor& v = state_[i].v;
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double gj = g.size() ? g[j] : 0.0;
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

  private:
    struct State {
        Tensor m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    std::vector<State> state_;
    std::size_t t_ = 0;
};

}  // namespace lsa
