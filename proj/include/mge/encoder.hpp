#pragma once

#include <vector>

#include "mge/init.hpp"
#include "mge/ops.hpp"

namespace mge {

struct EncoderConfig {
    int stages = 4;          // M; also the number of graph views
    int64_t base_channels = 16;  // C_img
    int64_t view_channels = 16;  // per-view channels after the 1x1 projection
    double slope = 0.2;
};

/// The M per-view patch feature maps after alignment to the smallest
/// resolution. Each view is a node-major [(T*Hs*Ws) x C] matrix whose row
/// order matches NodeId (t, y, x).
struct MultiScaleFeatures {
    int64_t T = 0, Hs = 0, Ws = 0;
    std::vector<Tensor> views;  // M entries
};

/// Register encoder parameters: M stages of (conv3x3 s2, conv3x3 s1) plus a
/// 1x1 projection per view back to view_channels.
void add_encoder_params(ParamStore& ps, const EncoderConfig& cfg, Rng& rng, DType dtype);

/// One frame [H x W x 3] -> M stage outputs, stage m at [1, C_img, H/2^m, W/2^m].
std::vector<Tensor> encode_frame(const Tensor& frame, const EncoderConfig& cfg, ParamStore& ps);

/// Pixel-unshuffle every stage to Hs x Ws, project to view_channels and stack
/// frames into node-major view matrices.
MultiScaleFeatures align_views(const std::vector<std::vector<Tensor>>& per_frame_stages, const EncoderConfig& cfg,
                               ParamStore& ps);

/// encode_frame + align_views over a clip of T frames, each [H x W x 3].
MultiScaleFeatures encode_clip(const std::vector<Tensor>& frames, const EncoderConfig& cfg, ParamStore& ps);

}  // namespace mge
