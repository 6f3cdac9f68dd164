#include "mge/init.hpp"

#include <cmath>

namespace mge {

Tensor uniform_fanin_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng, DType dtype) {
    double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    Tensor t(std::move(shape), dtype);
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-bound, bound));
    return t;
}

void add_linear(ParamStore& ps, const std::string& path, int64_t in, int64_t out, Rng& rng, DType dtype) {
    ps.add(path + ".weight", uniform_fanin_init({in, out}, in, rng, dtype));
    ps.add(path + ".bias", uniform_fanin_init({out}, in, rng, dtype));
}

void add_conv(ParamStore& ps, const std::string& path, int64_t cout, int64_t cin, int64_t kh, int64_t kw, Rng& rng,
              DType dtype) {
    int64_t fan_in = cin * kh * kw;
    ps.add(path + ".weight", uniform_fanin_init({cout, cin, kh, kw}, fan_in, rng, dtype));
    ps.add(path + ".bias", uniform_fanin_init({cout}, fan_in, rng, dtype));
}

}  // namespace mge
