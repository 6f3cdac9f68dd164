#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mge/ops.hpp"
#include "mge/tape.hpp"
#include "mge/tensor.hpp"

namespace mge::test {

inline Tensor random_tensor(std::vector<int64_t> shape, std::mt19937_64& gen, DType dt = DType::f64, double lo = -1.0,
                            double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor t(std::move(shape), dt);
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, d(gen));
    return t;
}

/// Central finite differences of `f` (scalar in each input entry) against the
/// analytic gradient recorded by one backward pass. Returns the max relative
/// error over all checked entries.
inline double fd_check(std::vector<Tensor*> inputs, const std::function<Tensor()>& forward, double h = 1e-6,
                       int max_entries_per_input = -1) {
    // analytic pass
    double max_rel = 0.0;
    std::vector<Tensor> grads;
    {
        Tape tape;
        for (Tensor* in : inputs) tape.track(*in, /*leaf=*/true);
        Tensor loss = forward();
        tape.backward(loss);
        for (Tensor* in : inputs) grads.push_back(in->grad().clone());
        for (Tensor* in : inputs) in->grad().fill(0.0);
    }
    for (size_t ii = 0; ii < inputs.size(); ++ii) {
        Tensor& x = *inputs[ii];
        int64_t n = x.numel();
        int64_t step = 1;
        if (max_entries_per_input > 0 && n > max_entries_per_input) step = n / max_entries_per_input;
        for (int64_t i = 0; i < n; i += step) {
            double orig = x.at(i);
            double hh = h * std::max(1.0, std::abs(orig));
            x.set(i, orig + hh);
            double lp = forward().at(0);
            x.set(i, orig - hh);
            double lm = forward().at(0);
            x.set(i, orig);
            double fd = (lp - lm) / (2.0 * hh);
            double an = grads[ii].at(i);
            double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            double rel = std::abs(fd - an) / denom;
            if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) rel = 0.0;
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

}  // namespace mge::test
