#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "mge/warp.hpp"

using namespace mge;
using mge::test::fd_check;
using mge::test::random_tensor;

namespace {

// Independent scalar splatting reference: accumulate every (frame, pixel,
// vector) contribution, then normalize with last-frame fallback.
struct RefSplat {
    std::vector<double> color, weight, out;
};

RefSplat ref_warp(const Tensor& frames, const Tensor& field, int64_t k, const WarpConfig& cfg) {
    int64_t T = frames.extent(0), H = frames.extent(1), W = frames.extent(2);
    RefSplat r;
    r.color.assign(static_cast<size_t>(H * W * 3), 0.0);
    r.weight.assign(static_cast<size_t>(H * W), 0.0);
    for (int64_t t = 0; t < T; ++t)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                for (int64_t j = 0; j < k; ++j) {
                    int64_t base = (((t * H + y) * W + x) * k + j) * 3;
                    double tx = x + field.at(base), ty = y + field.at(base + 1);
                    if (tx < 0 || tx >= W || ty < 0 || ty >= H) continue;
                    double u = std::exp(field.at(base + 2)) * std::pow(cfg.gamma, double(T - 1 - t));
                    int64_t x0 = (int64_t)std::floor(tx), y0 = (int64_t)std::floor(ty);
                    for (int c4 = 0; c4 < 4; ++c4) {
                        int64_t px = x0 + (c4 & 1), py = y0 + (c4 >> 1);
                        if (px < 0 || px >= W || py < 0 || py >= H) continue;
                        double cw = (c4 & 1 ? tx - x0 : 1 - (tx - x0)) * (c4 >> 1 ? ty - y0 : 1 - (ty - y0));
                        r.weight[size_t(py * W + px)] += u * cw;
                        for (int64_t c = 0; c < 3; ++c)
                            r.color[size_t((py * W + px) * 3 + c)] += u * cw * frames.at(((t * H + y) * W + x) * 3 + c);
                    }
                }
    r.out.assign(static_cast<size_t>(H * W * 3), 0.0);
    for (int64_t p = 0; p < H * W; ++p)
        for (int64_t c = 0; c < 3; ++c)
            r.out[size_t(p * 3 + c)] = r.weight[size_t(p)] > cfg.eps
                                           ? r.color[size_t(p * 3 + c)] / r.weight[size_t(p)]
                                           : frames.at(((T - 1) * H * W + p) * 3 + c);
    return r;
}

Tensor make_field(int64_t T, int64_t H, int64_t W, int64_t k, double v = 0.0) {
    return Tensor::full({T * H * W, 3 * k}, v, DType::f64);
}

}  // namespace

TEST_CASE("identity warp reproduces the last frame") {
    std::mt19937_64 gen(0);
    int64_t T = 3, H = 5, W = 4;
    Tensor one = random_tensor({H, W, 3}, gen, DType::f64, 0.0, 1.0);
    Tensor frames({T, H, W, 3}, DType::f64);
    for (int64_t t = 0; t < T; ++t)
        for (int64_t i = 0; i < H * W * 3; ++i) frames.set(t * H * W * 3 + i, one.at(i));
    Tensor field = make_field(T, H, W, 2);
    WarpConfig cfg;
    Tensor out = forward_warp(frames, field, 2, cfg);
    REQUIRE(out.extent(0) == H);
    REQUIRE(out.extent(1) == W);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(std::abs(out.at(i) - one.at(i)) < 1e-6);
}

TEST_CASE("unit translation moves a single pixel one step right") {
    int64_t T = 1, H = 4, W = 4;
    Tensor frames({T, H, W, 3}, DType::f64);
    frames.set(((1 * W) + 1) * 3 + 0, 0.8);  // red pixel at (y=1, x=1)
    Tensor field = make_field(T, H, W, 1);
    for (int64_t p = 0; p < H * W; ++p) field.set(p * 3 + 0, 1.0);  // dx = +1 everywhere
    WarpConfig cfg;
    Tensor out = forward_warp(frames, field, 1, cfg);
    CHECK(out.at(((1 * W) + 2) * 3 + 0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(out.at(((1 * W) + 2) * 3 + 1) == 0.0);
    // every in-view target pixel gets weight, so no fallback: pixel (1,1) now black
    CHECK(out.at(((1 * W) + 1) * 3 + 0) == 0.0);
}

TEST_CASE("two vectors on one target blend by softmax of their logits") {
    int64_t T = 1, H = 3, W = 3;
    Tensor frames({T, H, W, 3}, DType::f64);
    double c1 = 0.9, c2 = 0.3, w1 = 0.4, w2 = -1.1;
    frames.set(0 * 3 + 0, c1);            // pixel (0,0)
    frames.set(1 * 3 + 0, c2);            // pixel (0,1)
    Tensor field = make_field(T, H, W, 1);
    // both land exactly on (0,2); push all other pixels out of view
    for (int64_t p = 0; p < H * W; ++p) field.set(p * 3 + 0, -100.0);
    field.set(0 * 3 + 0, 2.0);
    field.set(0 * 3 + 2, w1);
    field.set(1 * 3 + 0, 1.0);
    field.set(1 * 3 + 2, w2);
    WarpConfig cfg;
    Tensor out = forward_warp(frames, field, 1, cfg);
    double want = (std::exp(w1) * c1 + std::exp(w2) * c2) / (std::exp(w1) + std::exp(w2));
    CHECK(out.at(2 * 3 + 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("random fields match the brute-force splat oracle") {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> dd(-2.5, 2.5), dw(-1.0, 1.0), dc(0.0, 1.0);
    WarpConfig cfg;
    for (int trial = 0; trial < 10; ++trial) {
        int64_t T = 2, H = 5, W = 6, k = 2;
        Tensor frames({T, H, W, 3}, DType::f64);
        for (int64_t i = 0; i < frames.numel(); ++i) frames.set(i, dc(gen));
        Tensor field({T * H * W, 3 * k}, DType::f64);
        for (int64_t p = 0; p < T * H * W; ++p)
            for (int64_t j = 0; j < k; ++j) {
                field.set(p * 3 * k + j * 3 + 0, dd(gen));
                field.set(p * 3 * k + j * 3 + 1, dd(gen));
                field.set(p * 3 * k + j * 3 + 2, dw(gen));
            }
        Tensor out = forward_warp(frames, field, k, cfg);
        RefSplat ref = ref_warp(frames, field, k, cfg);
        for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == doctest::Approx(ref.out[size_t(i)]).epsilon(1e-9));

        // convexity: non-fallback outputs lie within the global color range
        Tensor wsum = splat_weight_sum(frames, field, k, cfg);
        for (int64_t p = 0; p < H * W; ++p)
            if (wsum.at(p) > cfg.eps)
                for (int64_t c = 0; c < 3; ++c) {
                    CHECK(out.at(p * 3 + c) >= -1e-9);
                    CHECK(out.at(p * 3 + c) <= 1.0 + 1e-9);
                }
    }
}

TEST_CASE("normalized splat weights sum to one wherever weight exceeds eps") {
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> dd(-3.0, 3.0), dw(-1.5, 1.5);
    int64_t T = 2, H = 6, W = 6, k = 3;
    Tensor frames = random_tensor({T, H, W, 3}, gen, DType::f64, 0.0, 1.0);
    Tensor field({T * H * W, 3 * k}, DType::f64);
    for (int64_t i = 0; i < field.numel(); ++i) field.set(i, (i % 3 == 2) ? dw(gen) : dd(gen));
    WarpConfig cfg;
    RefSplat ref = ref_warp(frames, field, k, cfg);
    Tensor wsum = splat_weight_sum(frames, field, k, cfg);
    int64_t covered = 0;
    for (int64_t p = 0; p < H * W; ++p) {
        CHECK(wsum.at(p) == doctest::Approx(ref.weight[size_t(p)]).epsilon(1e-9));
        if (wsum.at(p) > cfg.eps) {
            // sum of effective (normalized) weights = weight_acc / weight_acc
            CHECK(std::abs(ref.weight[size_t(p)] / wsum.at(p) - 1.0) < 1e-6);
            ++covered;
        }
    }
    CHECK(covered > 0);
}

TEST_CASE("out-of-view vectors contribute exactly zero") {
    int64_t T = 1, H = 4, W = 4, k = 1;
    std::mt19937_64 gen(3);
    Tensor frames = random_tensor({T, H, W, 3}, gen, DType::f64, 0.0, 1.0);
    Tensor inside = make_field(T, H, W, k);
    Tensor mixed = inside.clone();
    mixed.set(0 * 3 + 0, -7.0);   // pixel (0,0) leaves through the left edge
    mixed.set(5 * 3 + 1, 100.0);  // pixel (1,1) leaves through the bottom
    WarpConfig cfg;
    Tensor ws_inside = splat_weight_sum(frames, inside, k, cfg);
    Tensor ws_mixed = splat_weight_sum(frames, mixed, k, cfg);
    for (int64_t p = 0; p < H * W; ++p) {
        double expect = ws_inside.at(p);
        if (p == 0 || p == 5) expect -= 1.0;  // exp(0) * gamma^0 * full corner weight
        CHECK(ws_mixed.at(p) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("warp gradients match finite differences at sub-pixel targets") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> frac(0.25, 0.75), dw(-0.8, 0.8), dc(0.1, 0.9);
    std::uniform_int_distribution<int> whole(-1, 1);
    int64_t T = 2, H = 4, W = 4, k = 1;
    Tensor frames({T, H, W, 3}, DType::f64), field({T * H * W, 3 * k}, DType::f64);
    for (int64_t i = 0; i < frames.numel(); ++i) frames.set(i, dc(gen));
    // keep sub-pixel fractions away from 0/1 so no corner-index or in-view
    // boundary is crossed inside the finite-difference stencil
    for (int64_t i = 0; i < field.numel(); ++i)
        field.set(i, (i % 3 == 2) ? dw(gen) : static_cast<double>(whole(gen)) + frac(gen));
    WarpConfig cfg;
    Tensor target = random_tensor({H, W, 3}, gen, DType::f64, 0.0, 1.0);
    double rel = fd_check({&frames, &field}, [&] {
        Tensor out = forward_warp(frames, field, k, cfg);
        Tensor diff = ops::sub(out, target);
        return ops::mean_all(ops::mul(diff, diff));
    }, /*h=*/1e-5);
    CHECK(rel < 1e-6);
}

TEST_CASE("forward_warp rejects non-finite fields") {
    int64_t T = 1, H = 2, W = 2;
    Tensor frames({T, H, W, 3}, DType::f64);
    Tensor field = make_field(T, H, W, 1);
    field.set(0, std::nan(""));
    WarpConfig cfg;
    CHECK_THROWS_AS(forward_warp(frames, field, 1, cfg), std::invalid_argument);
}

TEST_CASE("decode_motion bounds and zero map") {
    int64_t c_sr = 5, k = 2, n = 24;
    ParamStore ps;
    Rng rng(5);
    add_decoder_params(ps, c_sr, k, rng, DType::f64);
    std::mt19937_64 gen(6);
    Tensor feat = random_tensor({n, c_sr}, gen, DType::f64, -10.0, 10.0);

    SUBCASE("tanh bound on displacements") {
        Tensor out = decode_motion(feat, k, 64.0, ps);
        REQUIRE(out.extent(0) == n);
        REQUIRE(out.extent(1) == 3 * k);
        for (int64_t p = 0; p < n; ++p)
            for (int64_t j = 0; j < k; ++j) {
                CHECK(std::abs(out.at(p * 3 * k + j * 3 + 0)) <= 64.0);
                CHECK(std::abs(out.at(p * 3 * k + j * 3 + 1)) <= 64.0);
            }
    }
    SUBCASE("zero parameters give zero vectors and uniform logits") {
        for (auto& p : ps.all()) p.value.fill(0.0);
        Tensor out = decode_motion(feat, k, 64.0, ps);
        for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 0.0);
    }
}

TEST_CASE("upsample_motion extents and per-frame independence") {
    GraphDims dims{2, 3, 4};
    int stages = 2;
    int64_t c_node = 3;
    ParamStore ps;
    Rng rng(7);
    add_upsampler_params(ps, stages, c_node, c_node, rng, DType::f64);
    std::mt19937_64 gen(8);
    Tensor fused = random_tensor({dims.num_nodes(), c_node}, gen);
    Tensor out = upsample_motion(fused, dims, stages, c_node, ps, 0.2);
    CHECK(out.extent(0) == 2 * 12 * 16);
    CHECK(out.extent(1) == c_node);

    // perturb only frame 1 -> frame 0 rows unchanged
    Tensor fused2 = fused.clone();
    for (int64_t i = 12; i < 24; ++i)
        for (int64_t c = 0; c < c_node; ++c) fused2.set(i * c_node + c, fused2.at(i * c_node + c) + 0.5);
    Tensor out2 = upsample_motion(fused2, dims, stages, c_node, ps, 0.2);
    int64_t frame_rows = 12 * 16;
    bool frame1_changed = false;
    for (int64_t i = 0; i < frame_rows; ++i)
        for (int64_t c = 0; c < c_node; ++c) CHECK(out.at(i * c_node + c) == out2.at(i * c_node + c));
    for (int64_t i = frame_rows; i < 2 * frame_rows && !frame1_changed; ++i)
        for (int64_t c = 0; c < c_node; ++c)
            if (out.at(i * c_node + c) != out2.at(i * c_node + c)) frame1_changed = true;
    CHECK(frame1_changed);
}

TEST_CASE("full-scale upsampler shape: 4x32x32 nodes to 4x512x512 pixels") {
    GraphDims dims{4, 32, 32};
    int64_t c = 2;
    ParamStore ps;
    Rng rng(9);
    add_upsampler_params(ps, 4, c, c, rng, DType::f64);
    std::mt19937_64 gen(10);
    Tensor fused = random_tensor({dims.num_nodes(), c}, gen);
    Tensor out = upsample_motion(fused, dims, 4, c, ps, 0.2);
    CHECK(out.extent(0) == 4 * 512 * 512);
    CHECK(out.extent(1) == c);
}
