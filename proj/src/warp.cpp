#include "mge/warp.hpp"

#include <cmath>
#include <stdexcept>

namespace mge {

void add_upsampler_params(ParamStore& ps, int stages, int64_t c_node, int64_t c_sr, Rng& rng, DType dtype) {
    add_conv(ps, "sr.proj", c_sr, c_node, 1, 1, rng, dtype);
    for (int s = 1; s <= stages; ++s) {
        std::string p = "sr.stage" + std::to_string(s);
        add_conv(ps, p + ".conv1", 4 * c_sr, c_sr, 3, 3, rng, dtype);
        add_conv(ps, p + ".conv2", 4 * c_sr, 4 * c_sr, 3, 3, rng, dtype);
    }
}

Tensor upsample_motion(const Tensor& fused, const GraphDims& dims, int stages, int64_t c_sr, ParamStore& ps,
                       double slope) {
    int64_t c_node = fused.extent(1);
    if (fused.extent(0) != dims.num_nodes())
        throw std::invalid_argument("upsample_motion: fused rows " + fused.shape_str() + " do not match " +
                                    std::to_string(dims.num_nodes()) + " nodes");
    Tensor x = ops::permute(ops::reshape(fused, {dims.T, dims.Hs, dims.Ws, c_node}), {0, 3, 1, 2});
    x = ops::conv2d(x, ps.get("sr.proj.weight").value, ps.get("sr.proj.bias").value, 1, 0);
    for (int s = 1; s <= stages; ++s) {
        std::string p = "sr.stage" + std::to_string(s);
        Tensor h = ops::conv2d(x, ps.get(p + ".conv1.weight").value, ps.get(p + ".conv1.bias").value, 1, 1);
        h = ops::leaky_relu(h, slope);
        Tensor h2 = ops::conv2d(h, ps.get(p + ".conv2.weight").value, ps.get(p + ".conv2.bias").value, 1, 1);
        x = ops::pixel_shuffle(ops::add(h, h2), 2);
    }
    int64_t H = dims.Hs << stages, W = dims.Ws << stages;
    return ops::reshape(ops::permute(x, {0, 2, 3, 1}), {dims.T * H * W, c_sr});
}

void add_decoder_params(ParamStore& ps, int64_t c_sr, int64_t k, Rng& rng, DType dtype) {
    add_linear(ps, "decoder.out", c_sr, 3 * k, rng, dtype);
}

Tensor decode_motion(const Tensor& pixel_feat, int64_t k, double max_disp, ParamStore& ps) {
    Tensor raw = ops::linear(pixel_feat, ps.get("decoder.out.weight").value, ps.get("decoder.out.bias").value);
    std::vector<Tensor> parts;
    parts.reserve(static_cast<size_t>(2 * k));
    for (int64_t j = 0; j < k; ++j) {
        Tensor delta = ops::scale(ops::tanh(ops::slice_cols(raw, 3 * j, 3 * j + 2)), max_disp);
        parts.push_back(delta);
        parts.push_back(ops::slice_cols(raw, 3 * j + 2, 3 * j + 3));
    }
    Tensor out = ops::concat_cols(parts);
    for (int64_t i = 0; i < out.numel(); ++i)
        if (!std::isfinite(out.at(i))) throw std::runtime_error("decode_motion: non-finite dynamic vector");
    return out;
}

namespace {

struct SplatAccumulator {
    std::vector<double> color;   // H*W*3
    std::vector<double> weight;  // H*W
};

void splat_accumulate(const Tensor& frames, const Tensor& field, int64_t k, double gamma, SplatAccumulator& acc) {
    int64_t T = frames.extent(0), H = frames.extent(1), W = frames.extent(2);
    acc.color.assign(static_cast<size_t>(H * W * 3), 0.0);
    acc.weight.assign(static_cast<size_t>(H * W), 0.0);
    for (int64_t t = 0; t < T; ++t) {
        double recency = std::pow(gamma, static_cast<double>(T - 1 - t));
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                for (int64_t j = 0; j < k; ++j) {
                    int64_t base = (((t * H + y) * W + x) * k + j) * 3;
                    double tx = static_cast<double>(x) + field.at(base + 0);
                    double ty = static_cast<double>(y) + field.at(base + 1);
                    if (tx < 0.0 || tx >= static_cast<double>(W) || ty < 0.0 || ty >= static_cast<double>(H))
                        continue;  // projected out of view: dropped entirely
                    double u = std::exp(field.at(base + 2)) * recency;
                    int64_t x0 = static_cast<int64_t>(std::floor(tx)), y0 = static_cast<int64_t>(std::floor(ty));
                    double fx = tx - static_cast<double>(x0), fy = ty - static_cast<double>(y0);
                    const double cw[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
                    const int64_t cx[4] = {x0, x0 + 1, x0, x0 + 1};
                    const int64_t cy[4] = {y0, y0, y0 + 1, y0 + 1};
                    for (int c4 = 0; c4 < 4; ++c4) {
                        if (cx[c4] < 0 || cx[c4] >= W || cy[c4] < 0 || cy[c4] >= H) continue;
                        size_t pix = static_cast<size_t>(cy[c4] * W + cx[c4]);
                        acc.weight[pix] += u * cw[c4];
                        for (int64_t c = 0; c < 3; ++c)
                            acc.color[pix * 3 + static_cast<size_t>(c)] +=
                                u * cw[c4] * frames.at(((t * H + y) * W + x) * 3 + c);
                    }
                }
    }
}

void check_finite_field(const Tensor& field) {
    for (int64_t i = 0; i < field.numel(); ++i)
        if (!std::isfinite(field.at(i))) throw std::invalid_argument("forward_warp: NaN/Inf in dynamic vectors");
}

}  // namespace

Tensor forward_warp(const Tensor& frames, const Tensor& field, int64_t k, const WarpConfig& cfg) {
    if (frames.rank() != 4 || frames.extent(3) != 3)
        throw std::invalid_argument("forward_warp: frames must be [T x H x W x 3], got " + frames.shape_str());
    int64_t T = frames.extent(0), H = frames.extent(1), W = frames.extent(2);
    if (field.numel() != T * H * W * k * 3)
        throw std::invalid_argument("forward_warp: field size does not match frames and k");
    check_finite_field(field);

    SplatAccumulator acc;
    splat_accumulate(frames, field, k, cfg.gamma, acc);

    Tensor out({H, W, 3}, frames.dtype());
    for (int64_t p = 0; p < H * W; ++p) {
        if (acc.weight[static_cast<size_t>(p)] > cfg.eps) {
            for (int64_t c = 0; c < 3; ++c)
                out.set(p * 3 + c, acc.color[static_cast<size_t>(p * 3 + c)] / acc.weight[static_cast<size_t>(p)]);
        } else {
            for (int64_t c = 0; c < 3; ++c) out.set(p * 3 + c, frames.at(((T - 1) * H * W + p) * 3 + c));
        }
    }

    bool tf = ops::is_tracked(frames), tp = ops::is_tracked(field);
    if (tf || tp) {
        Tape* tape = Tape::active();
        tape->track(out);
        Tensor fin = frames, pin = field, oout = out;
        double gamma = cfg.gamma, eps = cfg.eps;
        auto acc_copy = acc;
        tape->record([fin, pin, oout, tf, tp, gamma, eps, k, acc_copy]() mutable {
            if (!oout.has_grad()) return;
            Tensor& go = oout.grad();
            int64_t T = fin.extent(0), H = fin.extent(1), W = fin.extent(2);
            const auto& acc = acc_copy;
            // per-output-pixel gradients w.r.t. the two accumulators
            std::vector<double> g_color(static_cast<size_t>(H * W * 3), 0.0);
            std::vector<double> g_weight(static_cast<size_t>(H * W), 0.0);
            Tensor* gf = tf ? &fin.grad() : nullptr;
            Tensor* gp = tp ? &pin.grad() : nullptr;
            for (int64_t p = 0; p < H * W; ++p) {
                double wsum = acc.weight[static_cast<size_t>(p)];
                if (wsum > eps) {
                    for (int64_t c = 0; c < 3; ++c) {
                        double g = go.at(p * 3 + c);
                        g_color[static_cast<size_t>(p * 3 + c)] = g / wsum;
                        g_weight[static_cast<size_t>(p)] -=
                            g * acc.color[static_cast<size_t>(p * 3 + c)] / (wsum * wsum);
                    }
                } else if (gf) {
                    // fallback copies the last observed frame's pixel
                    int64_t src = ((T - 1) * H * W + p) * 3;
                    for (int64_t c = 0; c < 3; ++c) gf->set(src + c, gf->at(src + c) + go.at(p * 3 + c));
                }
            }
            for (int64_t t = 0; t < T; ++t) {
                double recency = std::pow(gamma, static_cast<double>(T - 1 - t));
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t x = 0; x < W; ++x)
                        for (int64_t j = 0; j < k; ++j) {
                            int64_t base = (((t * H + y) * W + x) * k + j) * 3;
                            double tx = static_cast<double>(x) + pin.at(base + 0);
                            double ty = static_cast<double>(y) + pin.at(base + 1);
                            if (tx < 0.0 || tx >= static_cast<double>(W) || ty < 0.0 || ty >= static_cast<double>(H))
                                continue;
                            double u = std::exp(pin.at(base + 2)) * recency;
                            int64_t x0 = static_cast<int64_t>(std::floor(tx)), y0 = static_cast<int64_t>(std::floor(ty));
                            double fx = tx - static_cast<double>(x0), fy = ty - static_cast<double>(y0);
                            const double cw[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
                            const double dcw_dx[4] = {-(1 - fy), (1 - fy), -fy, fy};
                            const double dcw_dy[4] = {-(1 - fx), -fx, (1 - fx), fx};
                            const int64_t cxs[4] = {x0, x0 + 1, x0, x0 + 1};
                            const int64_t cys[4] = {y0, y0, y0 + 1, y0 + 1};
                            double du = 0, dtx = 0, dty = 0;
                            for (int c4 = 0; c4 < 4; ++c4) {
                                if (cxs[c4] < 0 || cxs[c4] >= W || cys[c4] < 0 || cys[c4] >= H) continue;
                                size_t pix = static_cast<size_t>(cys[c4] * W + cxs[c4]);
                                double gsum = g_weight[pix];
                                for (int64_t c = 0; c < 3; ++c) {
                                    double color = fin.at(((t * H + y) * W + x) * 3 + c);
                                    gsum += g_color[pix * 3 + static_cast<size_t>(c)] * color;
                                    if (gf) {
                                        int64_t fi = ((t * H + y) * W + x) * 3 + c;
                                        gf->set(fi, gf->at(fi) + u * cw[c4] * g_color[pix * 3 + static_cast<size_t>(c)]);
                                    }
                                }
                                du += cw[c4] * gsum;
                                dtx += u * dcw_dx[c4] * gsum;
                                dty += u * dcw_dy[c4] * gsum;
                            }
                            if (gp) {
                                gp->set(base + 0, gp->at(base + 0) + dtx);
                                gp->set(base + 1, gp->at(base + 1) + dty);
                                gp->set(base + 2, gp->at(base + 2) + u * du);
                            }
                        }
            }
        });
    }
    return out;
}

Tensor splat_weight_sum(const Tensor& frames, const Tensor& field, int64_t k, const WarpConfig& cfg) {
    int64_t H = frames.extent(1), W = frames.extent(2);
    SplatAccumulator acc;
    splat_accumulate(frames, field, k, cfg.gamma, acc);
    Tensor w({H, W}, DType::f64);
    for (int64_t i = 0; i < H * W; ++i) w.set(i, acc.weight[static_cast<size_t>(i)]);
    return w;
}

}  // namespace mge
