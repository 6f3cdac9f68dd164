#include "mge/scene.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mge {

SyntheticScene parse_scene_spec(const std::string& text) {
    SyntheticScene scene;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw std::invalid_argument("scene spec line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            auto e = s.find_last_not_of(" \t\r");
            s.erase(e == std::string::npos ? 0 : e + 1);
        };
        trim(key);
        trim(val);
        std::istringstream vs(val);
        if (key == "width")
            vs >> scene.width;
        else if (key == "height")
            vs >> scene.height;
        else if (key == "frames")
            vs >> scene.frames;
        else if (key == "background")
            vs >> scene.bg[0] >> scene.bg[1] >> scene.bg[2];
        else if (key == "sprite") {
            Sprite s;
            vs >> s.x >> s.y >> s.w >> s.h >> s.r >> s.g >> s.b >> s.vx >> s.vy;
            if (vs.fail())
                throw std::invalid_argument("scene spec line " + std::to_string(lineno) +
                                            ": sprite needs x y w h r g b vx vy");
            scene.sprites.push_back(s);
        } else {
            throw std::invalid_argument("scene spec line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        if (vs.fail()) throw std::invalid_argument("scene spec line " + std::to_string(lineno) + ": bad value");
    }
    validate_scene(scene);
    return scene;
}

void validate_scene(const SyntheticScene& scene) {
    if (scene.width < 1 || scene.height < 1 || scene.frames < 1)
        throw std::invalid_argument("scene: canvas and frame count must be positive");
    for (const auto& s : scene.sprites) {
        if (s.x < 0 || s.y < 0 || s.x + s.w > static_cast<double>(scene.width) ||
            s.y + s.h > static_cast<double>(scene.height))
            throw std::invalid_argument("scene: sprite outside canvas at t=0");
        double iv;
        if (std::modf(s.vx * 2, &iv) != 0.0 || std::modf(s.vy * 2, &iv) != 0.0)
            throw std::invalid_argument("scene: sprite velocities must be integer or half-integer px/frame");
    }
}

namespace {

bool sprite_covers(const Sprite& s, int64_t t, int64_t px, int64_t py) {
    double x0 = s.x + s.vx * static_cast<double>(t), y0 = s.y + s.vy * static_cast<double>(t);
    double cx = static_cast<double>(px) + 0.5, cy = static_cast<double>(py) + 0.5;
    return cx >= x0 && cx < x0 + s.w && cy >= y0 && cy < y0 + s.h;
}

}  // namespace

Tensor render_frame(const SyntheticScene& scene, int64_t t) {
    Tensor frame({scene.height, scene.width, 3}, DType::f64);
    for (int64_t y = 0; y < scene.height; ++y)
        for (int64_t x = 0; x < scene.width; ++x) {
            double rgb[3] = {scene.bg[0], scene.bg[1], scene.bg[2]};
            for (const auto& s : scene.sprites)  // listed order is z-order, later wins
                if (sprite_covers(s, t, x, y)) {
                    rgb[0] = s.r;
                    rgb[1] = s.g;
                    rgb[2] = s.b;
                }
            for (int64_t c = 0; c < 3; ++c) frame.set((y * scene.width + x) * 3 + c, rgb[c]);
        }
    return frame;
}

Tensor render_clip(const SyntheticScene& scene) {
    Tensor clip({scene.frames, scene.height, scene.width, 3}, DType::f64);
    for (int64_t t = 0; t < scene.frames; ++t) {
        Tensor f = render_frame(scene, t);
        for (int64_t i = 0; i < f.numel(); ++i) clip.set(t * f.numel() + i, f.at(i));
    }
    return clip;
}

Tensor displacement_field(const SyntheticScene& scene, int64_t t) {
    Tensor d({scene.height, scene.width, 2}, DType::f64);
    for (int64_t y = 0; y < scene.height; ++y)
        for (int64_t x = 0; x < scene.width; ++x) {
            double dx = 0, dy = 0;
            for (const auto& s : scene.sprites)
                if (sprite_covers(s, t, x, y)) {
                    dx = s.vx;
                    dy = s.vy;
                }
            d.set((y * scene.width + x) * 2 + 0, dx);
            d.set((y * scene.width + x) * 2 + 1, dy);
        }
    return d;
}

}  // namespace mge
