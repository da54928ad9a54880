// Adam with decoupled L2 weight decay.
#pragma once

#include "catekit/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace catekit {

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    std::size_t step = 0;
    std::vector<Tensor> m;  // first moments, one per parameter
    std::vector<Tensor> v;  // second moments

    static AdamState init(const std::vector<Tensor*>& params, double learning_rate,
                          double weight_decay = 0.0) {
        AdamState s;
        s.learning_rate = learning_rate;
        s.weight_decay = weight_decay;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const Tensor* p : params) {
            s.m.emplace_back(p->shape());
            s.v.emplace_back(p->shape());
        }
        return s;
    }
};

// Bias-corrected Adam update; weight decay is applied directly to the
// parameters (decoupled), not folded into the gradient.
inline void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                      AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (!p.same_shape(g)) {
            throw std::invalid_argument("adam_step: gradient shape mismatch at parameter " +
                                        std::to_string(k));
        }
        if (!g.all_finite()) {
            throw std::runtime_error("training diverged: non-finite gradient at parameter " +
                                     std::to_string(k));
        }
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
            if (state.weight_decay != 0.0) {
                p[i] -= state.learning_rate * state.weight_decay * p[i];
            }
        }
    }
}

}  // namespace catekit
