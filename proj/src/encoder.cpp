#include "mge/encoder.hpp"

#include <stdexcept>
#include <string>

namespace mge {

namespace {

std::string stage_path(int m) { return "encoder.stage" + std::to_string(m); }

}  // namespace

void add_encoder_params(ParamStore& ps, const EncoderConfig& cfg, Rng& rng, DType dtype) {
    int64_t C = cfg.base_channels;
    for (int m = 1; m <= cfg.stages; ++m) {
        int64_t cin = (m == 1) ? 3 : C;
        add_conv(ps, stage_path(m) + ".conv1", C, cin, 3, 3, rng, dtype);
        add_conv(ps, stage_path(m) + ".conv2", C, C, 3, 3, rng, dtype);
        // post-unshuffle projection back to view_channels
        int64_t factor = int64_t(1) << (cfg.stages - m);
        add_conv(ps, "encoder.proj" + std::to_string(m), cfg.view_channels, C * factor * factor, 1, 1, rng, dtype);
    }
}

std::vector<Tensor> encode_frame(const Tensor& frame, const EncoderConfig& cfg, ParamStore& ps) {
    if (frame.rank() != 3 || frame.extent(2) != 3)
        throw std::invalid_argument("encode_frame: expected [H x W x 3], got " + frame.shape_str());
    int64_t H = frame.extent(0), W = frame.extent(1);
    int64_t div = int64_t(1) << cfg.stages;
    if (H % div != 0 || W % div != 0)
        throw std::invalid_argument("encode_frame: 2^" + std::to_string(cfg.stages) + " must divide " +
                                    frame.shape_str());
    Tensor x = ops::reshape(ops::permute(frame, {2, 0, 1}), {1, 3, H, W});
    std::vector<Tensor> stages;
    for (int m = 1; m <= cfg.stages; ++m) {
        const std::string p = stage_path(m);
        x = ops::conv2d(x, ps.get(p + ".conv1.weight").value, ps.get(p + ".conv1.bias").value, 2, 1);
        x = ops::leaky_relu(x, cfg.slope);
        x = ops::conv2d(x, ps.get(p + ".conv2.weight").value, ps.get(p + ".conv2.bias").value, 1, 1);
        x = ops::leaky_relu(x, cfg.slope);
        stages.push_back(x);
    }
    return stages;
}

MultiScaleFeatures align_views(const std::vector<std::vector<Tensor>>& per_frame_stages, const EncoderConfig& cfg,
                               ParamStore& ps) {
    if (per_frame_stages.empty()) throw std::invalid_argument("align_views: no frames");
    int64_t T = static_cast<int64_t>(per_frame_stages.size());
    const Tensor& smallest = per_frame_stages[0].back();
    int64_t Hs = smallest.extent(2), Ws = smallest.extent(3);
    MultiScaleFeatures out;
    out.T = T;
    out.Hs = Hs;
    out.Ws = Ws;
    for (int m = 1; m <= cfg.stages; ++m) {
        int factor = 1 << (cfg.stages - m);
        const Tensor& pw = ps.get("encoder.proj" + std::to_string(m) + ".weight").value;
        const Tensor& pb = ps.get("encoder.proj" + std::to_string(m) + ".bias").value;
        std::vector<Tensor> frame_rows;
        for (int64_t t = 0; t < T; ++t) {
            Tensor s = per_frame_stages[static_cast<size_t>(t)][static_cast<size_t>(m - 1)];
            Tensor packed = factor == 1 ? s : ops::pixel_unshuffle(s, factor);
            Tensor proj = ops::conv2d(packed, pw, pb, 1, 0);  // [1, Cv, Hs, Ws]
            // node-major rows: (y, x) ordering with channels last
            Tensor rows = ops::reshape(ops::permute(ops::reshape(proj, {cfg.view_channels, Hs, Ws}), {1, 2, 0}),
                                       {Hs * Ws, cfg.view_channels});
            frame_rows.push_back(rows);
        }
        out.views.push_back(ops::concat_rows(frame_rows));
    }
    return out;
}

MultiScaleFeatures encode_clip(const std::vector<Tensor>& frames, const EncoderConfig& cfg, ParamStore& ps) {
    std::vector<std::vector<Tensor>> per_frame;
    per_frame.reserve(frames.size());
    for (const Tensor& f : frames) per_frame.push_back(encode_frame(f, cfg, ps));
    return align_views(per_frame, cfg, ps);
}

}  // namespace mge
