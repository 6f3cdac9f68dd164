#include <cstdio>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "mge/ops.hpp"
#include "mge/tensor.hpp"

using namespace mge;
using namespace mge::test;

TEST_CASE("tensor basics and invariants") {
    Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6}, DType::f64);
    CHECK(t.numel() == 6);
    CHECK(t.at(1 * 3 + 2) == 6);  // row-major
    CHECK_THROWS_AS(Tensor({2, 0}, DType::f64), std::invalid_argument);
    CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
    Tensor f = t.astype(DType::f32);
    CHECK(f.dtype() == DType::f32);
    CHECK(f.at(5) == doctest::Approx(6.0));
}

TEST_CASE("mgt round trip") {
    std::mt19937_64 gen(7);
    for (DType dt : {DType::f32, DType::f64}) {
        Tensor t = random_tensor({3, 4, 5}, gen, dt);
        std::string path = std::string("/tmp/mge_test_roundtrip_") + dtype_name(dt) + ".mgt";
        save_mgt(t, path);
        Tensor u = load_mgt(path);
        CHECK(u.dtype() == t.dtype());
        CHECK(u.shape() == t.shape());
        for (int64_t i = 0; i < t.numel(); ++i) CHECK(u.at(i) == t.at(i));
        std::remove(path.c_str());
    }
}

TEST_CASE("matmul identity and hand cases") {
    Tensor id = Tensor::from_values({2, 2}, {1, 0, 0, 1}, DType::f64);
    Tensor b = Tensor::from_values({2, 2}, {5, 6, 7, 8}, DType::f64);
    Tensor c = ops::matmul(id, b);
    for (int64_t i = 0; i < 4; ++i) CHECK(c.at(i) == b.at(i));

    Tensor a = Tensor::from_values({1, 2}, {1, 2}, DType::f64);
    Tensor v = Tensor::from_values({2, 1}, {3, 4}, DType::f64);
    CHECK(ops::matmul(a, v).at(0) == 11);

    CHECK_THROWS_AS(ops::matmul(a, b.reshaped({4, 1})), std::invalid_argument);
}

TEST_CASE("matmul against triple-loop oracle") {
    std::mt19937_64 gen(11);
    Tensor a = random_tensor({4, 5}, gen), b = random_tensor({5, 3}, gen);
    Tensor c = ops::matmul(a, b);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 3; ++j) {
            double s = 0;
            for (int64_t k = 0; k < 5; ++k) s += a.at(i * 5 + k) * b.at(k * 3 + j);
            CHECK(c.at(i * 3 + j) == s);  // exact for f64: same summation order
        }
}

TEST_CASE("conv2d identity kernel") {
    std::mt19937_64 gen(3);
    Tensor x = random_tensor({1, 1, 3, 3}, gen);
    Tensor w = Tensor::from_values({1, 1, 1, 1}, {1}, DType::f64);
    Tensor b = Tensor::zeros({1}, DType::f64);
    Tensor y = ops::conv2d(x, w, b, 1, 0);
    for (int64_t i = 0; i < 9; ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("conv2d all-ones tap count") {
    Tensor x = Tensor::full({1, 1, 4, 4}, 1.0, DType::f64);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0, DType::f64);
    Tensor b = Tensor::zeros({1}, DType::f64);
    Tensor y = ops::conv2d(x, w, b, 1, 1);
    CHECK(y.at(0) == 4);          // corner
    CHECK(y.at(1) == 6);          // edge
    CHECK(y.at(1 * 4 + 1) == 9);  // interior
}

namespace {
// independent 6-loop convolution oracle
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    int64_t B = x.extent(0), Ci = x.extent(1), H = x.extent(2), W = x.extent(3);
    int64_t Co = w.extent(0), kh = w.extent(2), kw = w.extent(3);
    int64_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
    Tensor y({B, Co, Ho, Wo}, x.dtype());
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t oy = 0; oy < Ho; ++oy)
                for (int64_t ox = 0; ox < Wo; ++ox) {
                    double s = bias.at(co);
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                int64_t iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                s += x.at(((b * Ci + ci) * H + iy) * W + ix) * w.at(((co * Ci + ci) * kh + ky) * kw + kx);
                            }
                    y.set(((b * Co + co) * Ho + oy) * Wo + ox, s);
                }
    return y;
}
}  // namespace

TEST_CASE("conv2d against naive oracle") {
    std::mt19937_64 gen(21);
    for (int stride : {1, 2}) {
        for (int pad : {0, 1}) {
            Tensor x = random_tensor({2, 3, 6, 7}, gen);
            Tensor w = random_tensor({4, 3, 3, 3}, gen);
            Tensor b = random_tensor({4}, gen);
            Tensor got = ops::conv2d(x, w, b, stride, pad);
            Tensor want = conv_oracle(x, w, b, stride, pad);
            REQUIRE(got.shape() == want.shape());
            for (int64_t i = 0; i < got.numel(); ++i) CHECK(got.at(i) == doctest::Approx(want.at(i)).epsilon(1e-12));
        }
    }
    Tensor x = random_tensor({1, 1, 2, 2}, gen);
    Tensor w = random_tensor({1, 1, 5, 5}, gen);
    CHECK_THROWS_AS(ops::conv2d(x, w, Tensor::zeros({1}, DType::f64), 1, 0), std::invalid_argument);
}

TEST_CASE("leaky_relu definition") {
    Tensor x = Tensor::from_values({3}, {-1, 0, 2}, DType::f64);
    Tensor y = ops::leaky_relu(x, 0.2);
    CHECK(y.at(0) == doctest::Approx(-0.2));
    CHECK(y.at(1) == 0);
    CHECK(y.at(2) == 2);
    std::mt19937_64 gen(4);
    Tensor p = random_tensor({10}, gen, DType::f64, 0.0, 5.0);
    Tensor yp = ops::leaky_relu(p, 0.2);
    for (int64_t i = 0; i < 10; ++i) CHECK(yp.at(i) == p.at(i));
}

TEST_CASE("pixel unshuffle/shuffle") {
    std::mt19937_64 gen(9);
    SUBCASE("r=1 identity") {
        Tensor x = random_tensor({1, 2, 3, 3}, gen);
        Tensor y = ops::pixel_unshuffle(x, 1);
        for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));
    }
    SUBCASE("documented channel order for 2x2") {
        Tensor x = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4}, DType::f64);
        Tensor y = ops::pixel_unshuffle(x, 2);
        CHECK(y.shape() == std::vector<int64_t>{1, 4, 1, 1});
        CHECK(y.at(0) == 1);
        CHECK(y.at(1) == 2);
        CHECK(y.at(2) == 3);
        CHECK(y.at(3) == 4);
    }
    SUBCASE("round trip is bit exact") {
        for (int r : {1, 2, 4}) {
            Tensor x = random_tensor({2, 3, 8, 8}, gen, DType::f32);
            Tensor back = ops::pixel_shuffle(ops::pixel_unshuffle(x, r), r);
            for (int64_t i = 0; i < x.numel(); ++i) CHECK(back.data<float>()[i] == x.data<float>()[i]);
        }
    }
    SUBCASE("non-divisible extents rejected") {
        Tensor x = random_tensor({1, 1, 3, 3}, gen);
        CHECK_THROWS_AS(ops::pixel_unshuffle(x, 2), std::invalid_argument);
    }
}

TEST_CASE("cosine similarity rows") {
    std::mt19937_64 gen(5);
    SUBCASE("self similarity and orthogonality") {
        Tensor a = Tensor::from_values({2, 2}, {1, 0, 0, 2}, DType::f64);
        Tensor s = ops::cosine_similarity_rows(a, a);
        CHECK(s.at(0) == doctest::Approx(1.0));
        CHECK(s.at(3) == doctest::Approx(1.0));
        CHECK(s.at(1) == doctest::Approx(0.0));
    }
    SUBCASE("random vs per-pair scalar oracle") {
        Tensor a = random_tensor({3, 4}, gen), b = random_tensor({5, 4}, gen);
        Tensor s = ops::cosine_similarity_rows(a, b);
        for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 5; ++j) {
                double dot = 0, na = 0, nb = 0;
                for (int64_t c = 0; c < 4; ++c) {
                    dot += a.at(i * 4 + c) * b.at(j * 4 + c);
                    na += a.at(i * 4 + c) * a.at(i * 4 + c);
                    nb += b.at(j * 4 + c) * b.at(j * 4 + c);
                }
                double want = dot / (std::max(std::sqrt(na), 1e-8) * std::max(std::sqrt(nb), 1e-8));
                CHECK(s.at(i * 5 + j) == doctest::Approx(want).epsilon(1e-12));
                CHECK(std::abs(s.at(i * 5 + j)) <= 1.0 + 1e-6);
            }
    }
    SUBCASE("zero rows guarded by eps") {
        Tensor a = Tensor::zeros({1, 3}, DType::f64);
        Tensor s = ops::cosine_similarity_rows(a, a);
        CHECK(s.at(0) == 0.0);
    }
}

TEST_CASE("topk_desc") {
    SUBCASE("hand ordering") {
        auto r = ops::topk_desc({0.1, 0.9, 0.5}, 2);
        CHECK(r[0].first == 1);
        CHECK(r[0].second == doctest::Approx(0.9));
        CHECK(r[1].first == 2);
    }
    SUBCASE("tie break by ascending index") {
        auto r = ops::topk_desc({1.0, 1.0, 1.0}, 3);
        CHECK(r[0].first == 0);
        CHECK(r[1].first == 1);
        CHECK(r[2].first == 2);
    }
    SUBCASE("random vs full-sort oracle") {
        std::mt19937_64 gen(13);
        std::uniform_real_distribution<double> d(-1, 1);
        std::vector<double> scores(64);
        for (auto& s : scores) s = d(gen);
        auto r = ops::topk_desc(scores, 8);
        std::vector<int64_t> idx(64);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
            return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
        });
        for (int64_t i = 0; i < 8; ++i) CHECK(r[i].first == idx[i]);
    }
    SUBCASE("k out of range") { CHECK_THROWS_AS(ops::topk_desc({1.0}, 2), std::invalid_argument); }
}
