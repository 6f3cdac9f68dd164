#include "mge/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace mge {

double OptimizerState::lr_at(int64_t s) const {
    if (total_steps <= 0) return lr_final;
    if (s >= total_steps) return lr_final;  // past the horizon: clamp
    double phase = static_cast<double>(s) / static_cast<double>(total_steps);
    return lr_final + 0.5 * (lr_base - lr_final) * (1.0 + std::cos(M_PI * phase));
}

void adamw_step(std::vector<Parameter>& params, OptimizerState& state) {
    if (state.m.empty()) {
        for (auto& p : params) {
            state.m.push_back(Tensor::zeros(p.value.shape(), p.value.dtype()));
            state.v.push_back(Tensor::zeros(p.value.shape(), p.value.dtype()));
        }
    }
    if (state.m.size() != params.size()) throw std::logic_error("adamw_step: state/parameter count mismatch");
    double lr = state.lr_at(state.step);
    state.step += 1;
    double t = static_cast<double>(state.step);
    double bc1 = 1.0 - std::pow(state.beta1, t);
    double bc2 = 1.0 - std::pow(state.beta2, t);
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& w = params[pi].value;
        Tensor& g = params[pi].grad();
        Tensor& m = state.m[pi];
        Tensor& v = state.v[pi];
        if (m.shape() != w.shape()) throw std::logic_error("adamw_step: moment shape mismatch for " + params[pi].name);
        for (int64_t i = 0; i < w.numel(); ++i) {
            double gi = g.at(i);
            double mi = state.beta1 * m.at(i) + (1.0 - state.beta1) * gi;
            double vi = state.beta2 * v.at(i) + (1.0 - state.beta2) * gi * gi;
            m.set(i, mi);
            v.set(i, vi);
            double mhat = mi / bc1;
            double vhat = vi / bc2;
            double x = w.at(i);
            x -= lr * state.weight_decay * x;  // decoupled decay
            x -= lr * mhat / (std::sqrt(vhat) + state.eps);
            w.set(i, x);
        }
    }
}

}  // namespace mge
