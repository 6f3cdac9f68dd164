#pragma once

#include <vector>

#include "mge/tape.hpp"

namespace mge {

/// AdamW with decoupled weight decay and a cosine learning-rate schedule
/// from `lr_base` down to `lr_final` over `total_steps`.
struct OptimizerState {
    double lr_base = 1e-3;
    double lr_final = 1e-5;
    int64_t total_steps = 1000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;

    int64_t step = 0;
    std::vector<Tensor> m;  // first moments, one per parameter
    std::vector<Tensor> v;  // second moments

    double lr_at(int64_t s) const;
};

/// One AdamW step over `params` using their accumulated grads.
/// Grads are left untouched; the caller zeroes them.
void adamw_step(std::vector<Parameter>& params, OptimizerState& state);

}  // namespace mge
