#pragma once

#include <string>

#include "mge/graph.hpp"
#include "mge/init.hpp"

namespace mge {

struct WarpConfig {
    double eps = 1e-6;    // minimum accumulated weight before falling back
    double gamma = 0.5;   // frame-recency multiplier gamma^(T-1-t)
};

/// Register the motion upsampler: 1x1 projection to c_sr, then `stages`
/// blocks of conv3x3 (c_sr -> 4*c_sr) -> leaky_relu -> conv3x3 residual ->
/// pixel_shuffle(2).
void add_upsampler_params(ParamStore& ps, int stages, int64_t c_node, int64_t c_sr, Rng& rng, DType dtype);

/// Theta_SR: fused node features [T*Hs*Ws x c_node] -> pixel features
/// [T*H*W x c_sr] with H = Hs*2^stages, W = Ws*2^stages. Frames are
/// processed independently with shared parameters.
Tensor upsample_motion(const Tensor& fused, const GraphDims& dims, int stages, int64_t c_sr, ParamStore& ps,
                       double slope);

/// Register the motion decoder: a single 1x1 conv to 3k channels.
void add_decoder_params(ParamStore& ps, int64_t c_sr, int64_t k, Rng& rng, DType dtype);

/// Omega_dec: pixel features [N x c_sr] -> dynamic vectors [N x 3k] packed as
/// (dx, dy, w)*k. Displacements pass through tanh * max_disp; w stays a raw
/// logit (splatting exponentiates it).
Tensor decode_motion(const Tensor& pixel_feat, int64_t k, double max_disp, ParamStore& ps);

/// Multi-flow forward warping with bilinear splatting and phi_norm
/// normalization. frames: [T x H x W x 3], field: [T x H x W x k x 3]
/// (or any layout reshapeable to it). Returns the predicted frame [H x W x 3].
/// Vectors whose target lands outside [0,W) x [0,H) contribute zero; pixels
/// whose accumulated weight stays <= eps fall back to the last observed frame.
Tensor forward_warp(const Tensor& frames, const Tensor& field, int64_t k, const WarpConfig& cfg);

/// Accumulated splat weights [H x W] for the same inputs; diagnostic only,
/// not differentiable.
Tensor splat_weight_sum(const Tensor& frames, const Tensor& field, int64_t k, const WarpConfig& cfg);

}  // namespace mge
