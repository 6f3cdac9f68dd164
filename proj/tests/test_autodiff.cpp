#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "mge/ops.hpp"
#include "mge/tape.hpp"

using namespace mge;
using namespace mge::test;

TEST_CASE("backward on simple graphs") {
    SUBCASE("loss = sum(p) gives all-ones grad") {
        Tensor p = Tensor::from_values({3}, {1, 2, 3}, DType::f64);
        Tape tape;
        tape.track(p, true);
        Tensor loss = ops::sum_all(p);
        tape.backward(loss);
        for (int64_t i = 0; i < 3; ++i) CHECK(p.grad().at(i) == 1.0);
    }
    SUBCASE("loss = sum(p*p) quadratic") {
        Tensor p = Tensor::from_values({2}, {1, -2}, DType::f64);
        Tape tape;
        tape.track(p, true);
        Tensor loss = ops::sum_all(ops::mul(p, p));
        tape.backward(loss);
        CHECK(p.grad().at(0) == doctest::Approx(2.0));
        CHECK(p.grad().at(1) == doctest::Approx(-4.0));
    }
    SUBCASE("backward off tape is a state error") {
        Tensor p = Tensor::from_values({1}, {1}, DType::f64);
        Tape tape;
        CHECK_THROWS_AS(tape.backward(p), std::logic_error);
    }
    SUBCASE("grad accumulates across shared use") {
        Tensor p = Tensor::from_values({1}, {3}, DType::f64);
        Tape tape;
        tape.track(p, true);
        Tensor loss = ops::sum_all(ops::add(p, p));
        tape.backward(loss);
        CHECK(p.grad().at(0) == 2.0);
    }
}

TEST_CASE("leaky_relu gradient at negative input equals slope") {
    Tensor x = Tensor::from_values({1}, {-3}, DType::f64);
    double rel = fd_check({&x}, [&] { return ops::sum_all(ops::leaky_relu(x, 0.2)); });
    CHECK(rel < 1e-6);
    Tape tape;
    tape.track(x, true);
    Tensor loss = ops::sum_all(ops::leaky_relu(x, 0.2));
    tape.backward(loss);
    CHECK(x.grad().at(0) == doctest::Approx(0.2));
}

TEST_CASE("finite differences for every primitive, f64") {
    std::mt19937_64 gen(42);
    SUBCASE("matmul") {
        Tensor a = random_tensor({3, 4}, gen), b = random_tensor({4, 2}, gen), m = random_tensor({3, 2}, gen);
        double rel = fd_check({&a, &b}, [&] { return ops::sum_all(ops::mul(ops::matmul(a, b), m)); });
        CHECK(rel < 1e-6);
    }
    SUBCASE("matmul_nt") {
        Tensor a = random_tensor({3, 4}, gen), b = random_tensor({5, 4}, gen), m = random_tensor({3, 5}, gen);
        double rel = fd_check({&a, &b}, [&] { return ops::sum_all(ops::mul(ops::matmul_nt(a, b), m)); });
        CHECK(rel < 1e-6);
    }
    SUBCASE("linear") {
        Tensor x = random_tensor({3, 4}, gen), w = random_tensor({4, 2}, gen), b = random_tensor({2}, gen);
        Tensor m = random_tensor({3, 2}, gen);
        double rel = fd_check({&x, &w, &b}, [&] { return ops::sum_all(ops::mul(ops::linear(x, w, b), m)); });
        CHECK(rel < 1e-6);
    }
    SUBCASE("conv2d") {
        Tensor x = random_tensor({1, 2, 5, 5}, gen), w = random_tensor({3, 2, 3, 3}, gen), b = random_tensor({3}, gen);
        Tensor m = random_tensor({1, 3, 3, 3}, gen);
        double rel = fd_check({&x, &w, &b}, [&] { return ops::sum_all(ops::mul(ops::conv2d(x, w, b, 2, 1), m)); });
        CHECK(rel < 1e-6);
    }
    SUBCASE("elementwise chain") {
        Tensor x = random_tensor({7}, gen);
        double rel = fd_check({&x}, [&] {
            return ops::mean_all(ops::mul(ops::tanh(x), ops::exp(ops::scale(x, 0.5))));
        });
        CHECK(rel < 1e-6);
    }
    SUBCASE("abs away from kink") {
        Tensor x = Tensor::from_values({2}, {0.7, -1.3}, DType::f64);
        double rel = fd_check({&x}, [&] { return ops::sum_all(ops::abs(x)); });
        CHECK(rel < 1e-6);
    }
    SUBCASE("max_over_groups with distinct entries") {
        Tensor x = random_tensor({12}, gen);
        Tensor m = random_tensor({6}, gen);
        double rel = fd_check({&x}, [&] {
            return ops::sum_all(ops::mul(ops::reshape(ops::max_over_groups(x, 3, 2, 2), {6}), m));
        });
        CHECK(rel < 1e-6);
    }
    SUBCASE("pixel shuffle pair") {
        Tensor x = random_tensor({1, 4, 2, 2}, gen);
        Tensor m = random_tensor({1, 4, 2, 2}, gen);
        double rel = fd_check({&x}, [&] {
            return ops::sum_all(ops::mul(ops::pixel_unshuffle(ops::pixel_shuffle(x, 2), 2), m));
        });
        CHECK(rel < 1e-6);
    }
    SUBCASE("row_normalize and cosine similarity") {
        Tensor a = random_tensor({3, 4}, gen), b = random_tensor({2, 4}, gen);
        Tensor m = random_tensor({3, 2}, gen);
        double rel = fd_check({&a, &b}, [&] {
            return ops::sum_all(ops::mul(ops::cosine_similarity_rows(a, b), m));
        });
        CHECK(rel < 1e-6);
    }
    SUBCASE("layout ops") {
        Tensor a = random_tensor({3, 4}, gen), b = random_tensor({2, 4}, gen);
        Tensor m = random_tensor({5, 2}, gen);
        double rel = fd_check({&a, &b}, [&] {
            Tensor cat = ops::concat_rows({a, b});
            Tensor sl = ops::slice_cols(cat, 1, 3);
            Tensor g = ops::gather_rows(sl, {0, 2, 4, 4, 1});
            return ops::sum_all(ops::mul(g, m));
        });
        CHECK(rel < 1e-6);
    }
    SUBCASE("permute") {
        Tensor x = random_tensor({2, 3, 4}, gen);
        Tensor m = random_tensor({4, 2, 3}, gen);
        double rel = fd_check({&x}, [&] {
            return ops::sum_all(ops::mul(ops::permute(x, {2, 0, 1}), ops::reshape(m, {4, 2, 3})));
        });
        CHECK(rel < 1e-6);
    }
}

TEST_CASE("f32 gradients stay within 1e-3 of the f64 finite-difference reference") {
    // Central differences evaluated in f32 arithmetic are dominated by rounding,
    // so the reference derivative is taken from the f64 twin of the same function.
    std::mt19937_64 gen(77);
    Tensor x32 = random_tensor({2, 2, 4, 4}, gen, DType::f32);
    Tensor w32 = random_tensor({2, 2, 3, 3}, gen, DType::f32);
    Tensor b32 = random_tensor({2}, gen, DType::f32);
    Tensor m32 = random_tensor({2, 2, 4, 4}, gen, DType::f32);
    auto f32_loss = [&] { return ops::sum_all(ops::mul(ops::leaky_relu(ops::conv2d(x32, w32, b32, 1, 1), 0.2), m32)); };
    std::vector<Tensor> g32;
    {
        Tape tape;
        for (Tensor* t : {&x32, &w32, &b32}) tape.track(*t, true);
        Tensor loss = f32_loss();
        tape.backward(loss);
        for (Tensor* t : {&x32, &w32, &b32}) g32.push_back(t->grad().clone());
    }
    Tensor x = x32.astype(DType::f64), w = w32.astype(DType::f64), b = b32.astype(DType::f64);
    Tensor m = m32.astype(DType::f64);
    auto f64_loss = [&] { return ops::sum_all(ops::mul(ops::leaky_relu(ops::conv2d(x, w, b, 1, 1), 0.2), m)); };
    std::vector<Tensor*> ins = {&x, &w, &b};
    for (size_t ti = 0; ti < ins.size(); ++ti) {
        Tensor& t = *ins[ti];
        for (int64_t i = 0; i < t.numel(); ++i) {
            double orig = t.at(i);
            double h = 1e-6 * std::max(1.0, std::abs(orig));
            t.set(i, orig + h);
            double lp = f64_loss().at(0);
            t.set(i, orig - h);
            double lm = f64_loss().at(0);
            t.set(i, orig);
            double fd = (lp - lm) / (2 * h);
            double an = g32[ti].at(i);
            double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
            CHECK(rel < 1e-3);
        }
    }
}

TEST_CASE("permute matches manual transpose") {
    Tensor x = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6}, DType::f64);
    Tensor y = ops::permute(x, {1, 0});
    CHECK(y.shape() == std::vector<int64_t>{3, 2});
    CHECK(y.at(0) == 1);
    CHECK(y.at(1) == 4);
    CHECK(y.at(2 * 2 + 1) == 6);
}
