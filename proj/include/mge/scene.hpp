#pragma once

#include <string>
#include <vector>

#include "mge/tensor.hpp"

namespace mge {

/// Axis-aligned rigid sprite moving at a constant velocity (px/frame,
/// integer or half-integer). Later sprites draw over earlier ones.
struct Sprite {
    double x = 0, y = 0;      // top-left at t=0
    double w = 1, h = 1;
    double r = 1, g = 1, b = 1;
    double vx = 0, vy = 0;
};

struct SyntheticScene {
    int64_t width = 16, height = 16;
    int64_t frames = 4;
    double bg[3] = {0, 0, 0};
    std::vector<Sprite> sprites;
};

/// Parse the line-oriented `key = value` scene spec ('#' comments, repeated
/// `sprite = x y w h r g b vx vy` lines).
SyntheticScene parse_scene_spec(const std::string& text);

/// Render frame t as [H x W x 3] with values in [0,1].
Tensor render_frame(const SyntheticScene& scene, int64_t t);

/// All frames stacked [frames x H x W x 3].
Tensor render_clip(const SyntheticScene& scene);

/// Analytic per-pixel displacement from frame t to t+1: [H x W x 2] of
/// (dx, dy). A pixel moves with the topmost sprite covering it at time t;
/// background pixels are static.
Tensor displacement_field(const SyntheticScene& scene, int64_t t);

/// Validates sprite positions at t=0 lie inside the canvas.
void validate_scene(const SyntheticScene& scene);

}  // namespace mge
