#include "mge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mge::ops {

bool is_tracked(const Tensor& t) {
    Tape* tp = Tape::active();
    return tp && t.node && t.node->tape_id == tp->id();
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    if (a.dtype() != b.dtype())
        throw std::invalid_argument(std::string(op) + ": dtype mismatch");
}

// Grad of `out` if any downstream produced one; empty vector means zero.
bool out_grad(Tensor& out) { return out.has_grad(); }

}  // namespace

// --------------------------------------------------------------------------
// elementwise

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd dfdx) {
    Tensor y(x.shape(), x.dtype());
    for (int64_t i = 0; i < x.numel(); ++i) y.set(i, fwd(x.at(i)));
    if (is_tracked(x)) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, yout = y;
        tp->record([xin, yout, dfdx]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gx = xin.grad();
            Tensor& gy = yout.grad();
            for (int64_t i = 0; i < xin.numel(); ++i) gx.set(i, gx.at(i) + dfdx(xin.at(i)) * gy.at(i));
        });
    }
    return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor y(a.shape(), a.dtype());
    for (int64_t i = 0; i < a.numel(); ++i) y.set(i, a.at(i) + b.at(i));
    bool ta = is_tracked(a), tb = is_tracked(b);
    if (ta || tb) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor ain = a, bin = b, yout = y;
        tp->record([ain, bin, yout, ta, tb]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gy = yout.grad();
            if (ta) {
                Tensor& ga = ain.grad();
                for (int64_t i = 0; i < gy.numel(); ++i) ga.set(i, ga.at(i) + gy.at(i));
            }
            if (tb) {
                Tensor& gb = bin.grad();
                for (int64_t i = 0; i < gy.numel(); ++i) gb.set(i, gb.at(i) + gy.at(i));
            }
        });
    }
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor y(a.shape(), a.dtype());
    for (int64_t i = 0; i < a.numel(); ++i) y.set(i, a.at(i) - b.at(i));
    bool ta = is_tracked(a), tb = is_tracked(b);
    if (ta || tb) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor ain = a, bin = b, yout = y;
        tp->record([ain, bin, yout, ta, tb]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gy = yout.grad();
            if (ta) {
                Tensor& ga = ain.grad();
                for (int64_t i = 0; i < gy.numel(); ++i) ga.set(i, ga.at(i) + gy.at(i));
            }
            if (tb) {
                Tensor& gb = bin.grad();
                for (int64_t i = 0; i < gy.numel(); ++i) gb.set(i, gb.at(i) - gy.at(i));
            }
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor y(a.shape(), a.dtype());
    for (int64_t i = 0; i < a.numel(); ++i) y.set(i, a.at(i) * b.at(i));
    bool ta = is_tracked(a), tb = is_tracked(b);
    if (ta || tb) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor ain = a, bin = b, yout = y;
        tp->record([ain, bin, yout, ta, tb]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gy = yout.grad();
            if (ta) {
                Tensor& ga = ain.grad();
                for (int64_t i = 0; i < gy.numel(); ++i) ga.set(i, ga.at(i) + bin.at(i) * gy.at(i));
            }
            if (tb) {
                Tensor& gb = bin.grad();
                for (int64_t i = 0; i < gy.numel(); ++i) gb.set(i, gb.at(i) + ain.at(i) * gy.at(i));
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& a, double s) {
    return unary_op(a, [s](double v) { return s * v; }, [s](double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(a, [s](double v) { return v + s; }, [](double) { return 1.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) throw std::invalid_argument("leaky_relu: slope must be in (0,1)");
    return unary_op(x, [slope](double v) { return v >= 0.0 ? v : slope * v; },
                    [slope](double v) { return v >= 0.0 ? 1.0 : slope; });
}

Tensor tanh(const Tensor& x) {
    return unary_op(x, [](double v) { return std::tanh(v); },
                    [](double v) {
                        double t = std::tanh(v);
                        return 1.0 - t * t;
                    });
}

Tensor exp(const Tensor& x) {
    return unary_op(x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Tensor abs(const Tensor& x) {
    return unary_op(x, [](double v) { return std::abs(v); },
                    [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// --------------------------------------------------------------------------
// reductions

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) s += x.at(i);
    Tensor y = Tensor::from_values({1}, {s}, x.dtype());
    if (is_tracked(x)) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, yout = y;
        tp->record([xin, yout]() mutable {
            if (!out_grad(yout)) return;
            double g = yout.grad().at(0);
            Tensor& gx = xin.grad();
            for (int64_t i = 0; i < xin.numel(); ++i) gx.set(i, gx.at(i) + g);
        });
    }
    return y;
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Tensor max_over_groups(const Tensor& x, int64_t groups, int64_t group_size, int64_t cols) {
    if (groups * group_size * cols != x.numel())
        throw std::invalid_argument("max_over_groups: factorization does not match element count");
    Tensor y({groups, cols}, x.dtype());
    std::vector<int64_t> argmax(static_cast<size_t>(groups * cols));
    for (int64_t g = 0; g < groups; ++g) {
        for (int64_t c = 0; c < cols; ++c) {
            double best = x.at((g * group_size) * cols + c);
            int64_t best_k = 0;
            for (int64_t k = 1; k < group_size; ++k) {
                double v = x.at((g * group_size + k) * cols + c);
                if (v > best) {
                    best = v;
                    best_k = k;
                }
            }
            y.set(g * cols + c, best);
            argmax[static_cast<size_t>(g * cols + c)] = best_k;
        }
    }
    if (is_tracked(x)) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, yout = y;
        tp->record([xin, yout, argmax, groups, group_size, cols]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gx = xin.grad();
            Tensor& gy = yout.grad();
            for (int64_t g = 0; g < groups; ++g)
                for (int64_t c = 0; c < cols; ++c) {
                    int64_t k = argmax[static_cast<size_t>(g * cols + c)];
                    int64_t src = (g * group_size + k) * cols + c;
                    gx.set(src, gx.at(src) + gy.at(g * cols + c));
                }
        });
    }
    return y;
}

// --------------------------------------------------------------------------
// linear algebra

namespace {

template <typename T>
void matmul_kernel(const T* a, const T* b, T* c, int64_t M, int64_t K, int64_t N, bool bt) {
    for (int64_t i = 0; i < M; ++i)
        for (int64_t j = 0; j < N; ++j) {
            T s = 0;
            if (bt)
                for (int64_t k = 0; k < K; ++k) s += a[i * K + k] * b[j * K + k];
            else
                for (int64_t k = 0; k < K; ++k) s += a[i * K + k] * b[k * N + j];
            c[i * N + j] = s;
        }
}

Tensor matmul_impl(const Tensor& a, const Tensor& b, bool bt) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: expects rank-2 operands, got " + a.shape_str() + " and " + b.shape_str());
    if (a.dtype() != b.dtype()) throw std::invalid_argument("matmul: dtype mismatch");
    int64_t M = a.extent(0), K = a.extent(1);
    int64_t K2 = bt ? b.extent(1) : b.extent(0);
    int64_t N = bt ? b.extent(0) : b.extent(1);
    if (K != K2)
        throw std::invalid_argument("matmul: inner extents disagree: " + a.shape_str() + " vs " + b.shape_str());
    Tensor c({M, N}, a.dtype());
    if (a.dtype() == DType::f32)
        matmul_kernel<float>(a.data<float>(), b.data<float>(), c.data<float>(), M, K, N, bt);
    else
        matmul_kernel<double>(a.data<double>(), b.data<double>(), c.data<double>(), M, K, N, bt);
    return c;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor c = matmul_impl(a, b, false);
    bool ta = is_tracked(a), tb = is_tracked(b);
    if (ta || tb) {
        Tape* tp = Tape::active();
        tp->track(c);
        Tensor ain = a, bin = b, cout = c;
        tp->record([ain, bin, cout, ta, tb]() mutable {
            if (!out_grad(cout)) return;
            Tensor& gc = cout.grad();
            int64_t M = ain.extent(0), K = ain.extent(1), N = bin.extent(1);
            if (ta) {
                Tensor& ga = ain.grad();
                for (int64_t i = 0; i < M; ++i)
                    for (int64_t k = 0; k < K; ++k) {
                        double s = 0;
                        for (int64_t j = 0; j < N; ++j) s += gc.at(i * N + j) * bin.at(k * N + j);
                        ga.set(i * K + k, ga.at(i * K + k) + s);
                    }
            }
            if (tb) {
                Tensor& gb = bin.grad();
                for (int64_t k = 0; k < K; ++k)
                    for (int64_t j = 0; j < N; ++j) {
                        double s = 0;
                        for (int64_t i = 0; i < M; ++i) s += ain.at(i * K + k) * gc.at(i * N + j);
                        gb.set(k * N + j, gb.at(k * N + j) + s);
                    }
            }
        });
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    Tensor c = matmul_impl(a, b, true);
    bool ta = is_tracked(a), tb = is_tracked(b);
    if (ta || tb) {
        Tape* tp = Tape::active();
        tp->track(c);
        Tensor ain = a, bin = b, cout = c;
        tp->record([ain, bin, cout, ta, tb]() mutable {
            if (!out_grad(cout)) return;
            Tensor& gc = cout.grad();
            int64_t N = ain.extent(0), C = ain.extent(1), M = bin.extent(0);
            if (ta) {
                Tensor& ga = ain.grad();
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t k = 0; k < C; ++k) {
                        double s = 0;
                        for (int64_t j = 0; j < M; ++j) s += gc.at(i * M + j) * bin.at(j * C + k);
                        ga.set(i * C + k, ga.at(i * C + k) + s);
                    }
            }
            if (tb) {
                Tensor& gb = bin.grad();
                for (int64_t j = 0; j < M; ++j)
                    for (int64_t k = 0; k < C; ++k) {
                        double s = 0;
                        for (int64_t i = 0; i < N; ++i) s += ain.at(i * C + k) * gc.at(i * M + j);
                        gb.set(j * C + k, gb.at(j * C + k) + s);
                    }
            }
        });
    }
    return c;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1) throw std::invalid_argument("linear: bad operand ranks");
    if (x.extent(1) != w.extent(0) || w.extent(1) != b.extent(0))
        throw std::invalid_argument("linear: shape mismatch " + x.shape_str() + ", " + w.shape_str() + ", " +
                                    b.shape_str());
    Tensor y = matmul_impl(x, w, false);
    int64_t N = y.extent(0), C = y.extent(1);
    for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < C; ++j) y.set(i * C + j, y.at(i * C + j) + b.at(j));
    bool tx = is_tracked(x), tw = is_tracked(w), tb = is_tracked(b);
    if (tx || tw || tb) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, win = w, bin = b, yout = y;
        tp->record([xin, win, bin, yout, tx, tw, tb]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gy = yout.grad();
            int64_t N = xin.extent(0), K = xin.extent(1), C = win.extent(1);
            if (tx) {
                Tensor& gx = xin.grad();
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t k = 0; k < K; ++k) {
                        double s = 0;
                        for (int64_t j = 0; j < C; ++j) s += gy.at(i * C + j) * win.at(k * C + j);
                        gx.set(i * K + k, gx.at(i * K + k) + s);
                    }
            }
            if (tw) {
                Tensor& gw = win.grad();
                for (int64_t k = 0; k < K; ++k)
                    for (int64_t j = 0; j < C; ++j) {
                        double s = 0;
                        for (int64_t i = 0; i < N; ++i) s += xin.at(i * K + k) * gy.at(i * C + j);
                        gw.set(k * C + j, gw.at(k * C + j) + s);
                    }
            }
            if (tb) {
                Tensor& gb = bin.grad();
                for (int64_t j = 0; j < C; ++j) {
                    double s = 0;
                    for (int64_t i = 0; i < N; ++i) s += gy.at(i * C + j);
                    gb.set(j, gb.at(j) + s);
                }
            }
        });
    }
    return y;
}

// --------------------------------------------------------------------------
// convolution (cross-correlation, zero padding)

namespace {

template <typename T>
void conv2d_fwd(const T* x, const T* w, const T* bias, T* y, int64_t B, int64_t Cin, int64_t H, int64_t W,
                int64_t Cout, int64_t kh, int64_t kw, int stride, int pad, int64_t Ho, int64_t Wo) {
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t oy = 0; oy < Ho; ++oy)
                for (int64_t ox = 0; ox < Wo; ++ox) {
                    T s = bias ? bias[co] : T(0);
                    for (int64_t ci = 0; ci < Cin; ++ci)
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            int64_t iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                int64_t ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= W) continue;
                                s += x[((b * Cin + ci) * H + iy) * W + ix] * w[((co * Cin + ci) * kh + ky) * kw + kx];
                            }
                        }
                    y[((b * Cout + co) * Ho + oy) * Wo + ox] = s;
                }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
    if (x.rank() != 4 || w.rank() != 4) throw std::invalid_argument("conv2d: expects BCHW input and OIHW weight");
    int64_t B = x.extent(0), Cin = x.extent(1), H = x.extent(2), W = x.extent(3);
    int64_t Cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
    if (w.extent(1) != Cin)
        throw std::invalid_argument("conv2d: channel mismatch " + x.shape_str() + " vs " + w.shape_str());
    if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel extents must be odd");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (kh > H + 2 * padding || kw > W + 2 * padding)
        throw std::invalid_argument("conv2d: kernel " + w.shape_str() + " larger than padded input " + x.shape_str());
    if (bias.rank() != 1 || bias.extent(0) != Cout) throw std::invalid_argument("conv2d: bad bias shape");
    int64_t Ho = (H + 2 * padding - kh) / stride + 1;
    int64_t Wo = (W + 2 * padding - kw) / stride + 1;
    Tensor y({B, Cout, Ho, Wo}, x.dtype());
    if (x.dtype() == DType::f32)
        conv2d_fwd<float>(x.data<float>(), w.data<float>(), bias.data<float>(), y.data<float>(), B, Cin, H, W, Cout,
                          kh, kw, stride, padding, Ho, Wo);
    else
        conv2d_fwd<double>(x.data<double>(), w.data<double>(), bias.data<double>(), y.data<double>(), B, Cin, H, W,
                           Cout, kh, kw, stride, padding, Ho, Wo);
    bool tx = is_tracked(x), tw = is_tracked(w), tb = is_tracked(bias);
    if (tx || tw || tb) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, win = w, bin = bias, yout = y;
        int pad = padding;
        tp->record([xin, win, bin, yout, tx, tw, tb, stride, pad]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gy = yout.grad();
            int64_t B = xin.extent(0), Cin = xin.extent(1), H = xin.extent(2), W = xin.extent(3);
            int64_t Cout = win.extent(0), kh = win.extent(2), kw = win.extent(3);
            int64_t Ho = yout.extent(2), Wo = yout.extent(3);
            Tensor* gx = tx ? &xin.grad() : nullptr;
            Tensor* gw = tw ? &win.grad() : nullptr;
            Tensor* gb = tb ? &bin.grad() : nullptr;
            for (int64_t b = 0; b < B; ++b)
                for (int64_t co = 0; co < Cout; ++co)
                    for (int64_t oy = 0; oy < Ho; ++oy)
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            double g = gy.at(((b * Cout + co) * Ho + oy) * Wo + ox);
                            if (g == 0.0) continue;
                            if (gb) gb->set(co, gb->at(co) + g);
                            for (int64_t ci = 0; ci < Cin; ++ci)
                                for (int64_t ky = 0; ky < kh; ++ky) {
                                    int64_t iy = oy * stride - pad + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    for (int64_t kx = 0; kx < kw; ++kx) {
                                        int64_t ix = ox * stride - pad + kx;
                                        if (ix < 0 || ix >= W) continue;
                                        int64_t xi = ((b * Cin + ci) * H + iy) * W + ix;
                                        int64_t wi = ((co * Cin + ci) * kh + ky) * kw + kx;
                                        if (gx) gx->set(xi, gx->at(xi) + g * win.at(wi));
                                        if (gw) gw->set(wi, gw->at(wi) + g * xin.at(xi));
                                    }
                                }
                        }
        });
    }
    return y;
}

// --------------------------------------------------------------------------
// layout

Tensor reshape(const Tensor& x, std::vector<int64_t> shape) {
    Tensor y = x.clone().reshaped(std::move(shape));
    if (is_tracked(x)) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, yout = y;
        tp->record([xin, yout]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gx = xin.grad();
            Tensor& gy = yout.grad();
            for (int64_t i = 0; i < gx.numel(); ++i) gx.set(i, gx.at(i) + gy.at(i));
        });
    }
    return y;
}

namespace {

// flat index mapping for a permutation of axes
std::vector<int64_t> permuted_shape(const std::vector<int64_t>& shape, const std::vector<int>& axes) {
    std::vector<int64_t> out(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) out[i] = shape[static_cast<size_t>(axes[i])];
    return out;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
    if (axes.size() != x.rank()) throw std::invalid_argument("permute: axes rank mismatch");
    std::vector<int> sorted(axes);
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); ++i)
        if (sorted[i] != static_cast<int>(i)) throw std::invalid_argument("permute: not a permutation");
    size_t r = x.rank();
    std::vector<int64_t> in_stride(r, 1), out_shape = permuted_shape(x.shape(), axes);
    for (size_t i = r - 1; i > 0; --i) in_stride[i - 1] = in_stride[i] * x.shape()[i];
    Tensor y(out_shape, x.dtype());
    std::vector<int64_t> idx(r, 0);
    for (int64_t o = 0; o < y.numel(); ++o) {
        int64_t rem = o, src = 0;
        for (size_t d = 0; d < r; ++d) {
            int64_t extent = out_shape[d];
            int64_t stride_rest = 1;
            for (size_t e = d + 1; e < r; ++e) stride_rest *= out_shape[e];
            int64_t coord = (rem / stride_rest) % extent;
            rem -= coord * stride_rest;
            src += coord * in_stride[static_cast<size_t>(axes[d])];
        }
        y.set(o, x.at(src));
    }
    if (is_tracked(x)) {
        Tape* tp = Tape::active();
        tp->track(y);
        std::vector<int> inv(axes.size());
        for (size_t i = 0; i < axes.size(); ++i) inv[static_cast<size_t>(axes[i])] = static_cast<int>(i);
        Tensor xin = x, yout = y;
        std::vector<int> fwd_axes = axes;
        tp->record([xin, yout, fwd_axes]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gx = xin.grad();
            Tensor& gy = yout.grad();
            size_t r = xin.rank();
            std::vector<int64_t> in_stride(r, 1);
            const auto& xs = xin.shape();
            for (size_t i = r - 1; i > 0; --i) in_stride[i - 1] = in_stride[i] * xs[i];
            const auto& os = yout.shape();
            for (int64_t o = 0; o < gy.numel(); ++o) {
                int64_t rem = o, src = 0;
                for (size_t d = 0; d < r; ++d) {
                    int64_t stride_rest = 1;
                    for (size_t e = d + 1; e < r; ++e) stride_rest *= os[e];
                    int64_t coord = (rem / stride_rest) % os[d];
                    rem -= coord * stride_rest;
                    src += coord * in_stride[static_cast<size_t>(fwd_axes[d])];
                }
                gx.set(src, gx.at(src) + gy.at(o));
            }
        });
    }
    return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
    int64_t N = parts[0].extent(0), C = 0;
    DType dt = parts[0].dtype();
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.extent(0) != N || p.dtype() != dt)
            throw std::invalid_argument("concat_cols: incompatible part " + p.shape_str());
        C += p.extent(1);
    }
    Tensor y({N, C}, dt);
    int64_t off = 0;
    for (const auto& p : parts) {
        int64_t pc = p.extent(1);
        for (int64_t i = 0; i < N; ++i)
            for (int64_t j = 0; j < pc; ++j) y.set(i * C + off + j, p.at(i * pc + j));
        off += pc;
    }
    bool any = false;
    for (const auto& p : parts) any = any || is_tracked(p);
    if (any) {
        Tape* tp = Tape::active();
        tp->track(y);
        std::vector<Tensor> ins = parts;
        std::vector<char> flags;
        for (const auto& p : parts) flags.push_back(is_tracked(p) ? 1 : 0);
        Tensor yout = y;
        tp->record([ins, flags, yout, N, C]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gy = yout.grad();
            int64_t off = 0;
            for (size_t pi = 0; pi < ins.size(); ++pi) {
                Tensor& p = ins[pi];
                int64_t pc = p.extent(1);
                if (flags[pi]) {
                    Tensor& gp = p.grad();
                    for (int64_t i = 0; i < N; ++i)
                        for (int64_t j = 0; j < pc; ++j) gp.set(i * pc + j, gp.at(i * pc + j) + gy.at(i * C + off + j));
                }
                off += pc;
            }
        });
    }
    return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
    int64_t C = parts[0].extent(1), N = 0;
    DType dt = parts[0].dtype();
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.extent(1) != C || p.dtype() != dt)
            throw std::invalid_argument("concat_rows: incompatible part " + p.shape_str());
        N += p.extent(0);
    }
    Tensor y({N, C}, dt);
    int64_t off = 0;
    for (const auto& p : parts) {
        for (int64_t i = 0; i < p.numel(); ++i) y.set(off + i, p.at(i));
        off += p.numel();
    }
    bool any = false;
    for (const auto& p : parts) any = any || is_tracked(p);
    if (any) {
        Tape* tp = Tape::active();
        tp->track(y);
        std::vector<Tensor> ins = parts;
        std::vector<char> flags;
        for (const auto& p : parts) flags.push_back(is_tracked(p) ? 1 : 0);
        Tensor yout = y;
        tp->record([ins, flags, yout]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gy = yout.grad();
            int64_t off = 0;
            for (size_t pi = 0; pi < ins.size(); ++pi) {
                Tensor& p = ins[pi];
                if (flags[pi]) {
                    Tensor& gp = p.grad();
                    for (int64_t i = 0; i < p.numel(); ++i) gp.set(i, gp.at(i) + gy.at(off + i));
                }
                off += p.numel();
            }
        });
    }
    return y;
}

Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1) {
    if (x.rank() != 2) throw std::invalid_argument("slice_cols: expects rank-2");
    int64_t N = x.extent(0), C = x.extent(1);
    if (c0 < 0 || c1 > C || c0 >= c1) throw std::invalid_argument("slice_cols: bad column range");
    Tensor y({N, c1 - c0}, x.dtype());
    for (int64_t i = 0; i < N; ++i)
        for (int64_t j = c0; j < c1; ++j) y.set(i * (c1 - c0) + (j - c0), x.at(i * C + j));
    if (is_tracked(x)) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, yout = y;
        tp->record([xin, yout, c0, c1]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gx = xin.grad();
            Tensor& gy = yout.grad();
            int64_t N = xin.extent(0), C = xin.extent(1), w = c1 - c0;
            for (int64_t i = 0; i < N; ++i)
                for (int64_t j = 0; j < w; ++j)
                    gx.set(i * C + c0 + j, gx.at(i * C + c0 + j) + gy.at(i * w + j));
        });
    }
    return y;
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx) {
    if (x.rank() != 2) throw std::invalid_argument("gather_rows: expects rank-2");
    int64_t N = x.extent(0), C = x.extent(1);
    for (int64_t i : idx)
        if (i < 0 || i >= N) throw std::out_of_range("gather_rows: index " + std::to_string(i) + " out of range");
    Tensor y({static_cast<int64_t>(idx.size()), C}, x.dtype());
    for (size_t r = 0; r < idx.size(); ++r)
        for (int64_t j = 0; j < C; ++j) y.set(static_cast<int64_t>(r) * C + j, x.at(idx[r] * C + j));
    if (is_tracked(x)) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, yout = y;
        std::vector<int64_t> ix = idx;
        tp->record([xin, yout, ix]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gx = xin.grad();
            Tensor& gy = yout.grad();
            int64_t C = xin.extent(1);
            for (size_t r = 0; r < ix.size(); ++r)
                for (int64_t j = 0; j < C; ++j) {
                    int64_t t = ix[r] * C + j;
                    gx.set(t, gx.at(t) + gy.at(static_cast<int64_t>(r) * C + j));
                }
        });
    }
    return y;
}

namespace {

Tensor shuffle_impl(const Tensor& x, int r, bool unshuffle) {
    if (x.rank() != 4) throw std::invalid_argument("pixel shuffle: expects BCHW");
    if (r < 1) throw std::invalid_argument("pixel shuffle: r must be >= 1");
    int64_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
    std::vector<int64_t> oshape;
    if (unshuffle) {
        if (H % r != 0 || W % r != 0)
            throw std::invalid_argument("pixel_unshuffle: r=" + std::to_string(r) + " does not divide " + x.shape_str());
        oshape = {B, C * r * r, H / r, W / r};
    } else {
        if (C % (static_cast<int64_t>(r) * r) != 0)
            throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2 in " + x.shape_str());
        oshape = {B, C / (r * r), H * r, W * r};
    }
    Tensor y(oshape, x.dtype());
    int64_t Cb = unshuffle ? C : C / (r * r);  // base channel count at the large-spatial side
    int64_t Hb = unshuffle ? H / r : H;        // small spatial extents
    int64_t Wb = unshuffle ? W / r : W;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < Cb; ++c)
            for (int64_t h = 0; h < Hb; ++h)
                for (int64_t w = 0; w < Wb; ++w)
                    for (int64_t dy = 0; dy < r; ++dy)
                        for (int64_t dx = 0; dx < r; ++dx) {
                            int64_t big = ((b * Cb + c) * (Hb * r) + h * r + dy) * (Wb * r) + w * r + dx;
                            int64_t packed = ((b * Cb * r * r + c * r * r + dy * r + dx) * Hb + h) * Wb + w;
                            if (unshuffle)
                                y.set(packed, x.at(big));
                            else
                                y.set(big, x.at(packed));
                        }
    return y;
}

}  // namespace

Tensor pixel_unshuffle(const Tensor& x, int r) {
    Tensor y = shuffle_impl(x, r, true);
    if (is_tracked(x)) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, yout = y;
        tp->record([xin, yout, r]() mutable {
            if (!out_grad(yout)) return;
            Tensor gys = shuffle_impl(yout.grad(), r, false);  // inverse permutation
            Tensor& gx = xin.grad();
            for (int64_t i = 0; i < gx.numel(); ++i) gx.set(i, gx.at(i) + gys.at(i));
        });
    }
    return y;
}

Tensor pixel_shuffle(const Tensor& x, int r) {
    Tensor y = shuffle_impl(x, r, false);
    if (is_tracked(x)) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, yout = y;
        tp->record([xin, yout, r]() mutable {
            if (!out_grad(yout)) return;
            Tensor gys = shuffle_impl(yout.grad(), r, true);
            Tensor& gx = xin.grad();
            for (int64_t i = 0; i < gx.numel(); ++i) gx.set(i, gx.at(i) + gys.at(i));
        });
    }
    return y;
}

// --------------------------------------------------------------------------
// similarity / selection

Tensor row_normalize(const Tensor& x, double eps) {
    if (x.rank() != 2) throw std::invalid_argument("row_normalize: expects rank-2");
    int64_t N = x.extent(0), C = x.extent(1);
    Tensor y(x.shape(), x.dtype());
    std::vector<double> norms(static_cast<size_t>(N));
    for (int64_t i = 0; i < N; ++i) {
        double s = 0;
        for (int64_t j = 0; j < C; ++j) s += x.at(i * C + j) * x.at(i * C + j);
        double n = std::max(std::sqrt(s), eps);
        norms[static_cast<size_t>(i)] = n;
        for (int64_t j = 0; j < C; ++j) y.set(i * C + j, x.at(i * C + j) / n);
    }
    if (is_tracked(x)) {
        Tape* tp = Tape::active();
        tp->track(y);
        Tensor xin = x, yout = y;
        tp->record([xin, yout, norms, eps]() mutable {
            if (!out_grad(yout)) return;
            Tensor& gx = xin.grad();
            Tensor& gy = yout.grad();
            int64_t N = xin.extent(0), C = xin.extent(1);
            for (int64_t i = 0; i < N; ++i) {
                double n = norms[static_cast<size_t>(i)];
                double raw = 0;
                for (int64_t j = 0; j < C; ++j) raw += xin.at(i * C + j) * xin.at(i * C + j);
                bool clamped = std::sqrt(raw) < eps;
                double dot = 0;
                for (int64_t j = 0; j < C; ++j) dot += gy.at(i * C + j) * xin.at(i * C + j);
                for (int64_t j = 0; j < C; ++j) {
                    double g = gy.at(i * C + j) / n;
                    if (!clamped) g -= xin.at(i * C + j) * dot / (n * n * n);
                    gx.set(i * C + j, gx.at(i * C + j) + g);
                }
            }
        });
    }
    return y;
}

Tensor cosine_similarity_rows(const Tensor& a, const Tensor& b, double eps) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1))
        throw std::invalid_argument("cosine_similarity_rows: incompatible shapes " + a.shape_str() + " vs " +
                                    b.shape_str());
    return matmul_nt(row_normalize(a, eps), row_normalize(b, eps));
}

std::vector<std::pair<int64_t, double>> topk_desc(const std::vector<double>& scores, int64_t k) {
    if (k < 1 || k > static_cast<int64_t>(scores.size()))
        throw std::invalid_argument("topk_desc: k=" + std::to_string(k) + " out of range for " +
                                    std::to_string(scores.size()) + " scores");
    std::vector<int64_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return a < b;
    });
    std::vector<std::pair<int64_t, double>> out;
    out.reserve(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) out.emplace_back(idx[static_cast<size_t>(i)], scores[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
    return out;
}

}  // namespace mge::ops
