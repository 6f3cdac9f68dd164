#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "mge/tape.hpp"
#include "mge/tensor.hpp"

namespace mge {

/// Deterministic 64-bit generator; every random draw in the engine goes
/// through one of these, seeded from the config.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}
    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(gen_);
    }
    int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
        std::uniform_int_distribution<int64_t> d(lo, hi);
        return d(gen_);
    }
    std::mt19937_64& raw() { return gen_; }

  private:
    std::mt19937_64 gen_;
};

/// Uniform in +-sqrt(1/fan_in). Weight initialization is not given by any
/// reference; this choice is seeded and recorded in the model summary.
Tensor uniform_fanin_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng, DType dtype);

/// Register weight+bias for a linear layer under `<path>.weight` / `<path>.bias`.
void add_linear(ParamStore& ps, const std::string& path, int64_t in, int64_t out, Rng& rng, DType dtype);
/// Register weight+bias for a conv layer, OIHW weight layout.
void add_conv(ParamStore& ps, const std::string& path, int64_t cout, int64_t cin, int64_t kh, int64_t kw, Rng& rng,
              DType dtype);

}  // namespace mge
