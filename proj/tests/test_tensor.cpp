#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "mdcgan/gradcheck.hpp"
#include "mdcgan/ops.hpp"
#include "support.hpp"

using namespace mdcgan;
using test::random_tensor;

TEST_SUITE("tensor") {

TEST_CASE("shape and value invariants") {
    TensorF t(Shape{2, 3}, 1.5f);
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.dim(1) == 3);
    CHECK_FALSE(t.requires_grad());
    CHECK_THROWS_AS(TensorF(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
    CHECK(TensorF::scalar(4.0f).item() == 4.0f);
    CHECK_THROWS(t.item());
}

TEST_CASE("elementwise arithmetic") {
    TensorD a(Shape{2}, {1, 2}), b(Shape{2}, {3, 4});
    CHECK(test::values(a + b) == std::vector<double>{4, 6});
    CHECK(test::values(a - a) == std::vector<double>{0, 0});
    CHECK(test::values(a * b) == std::vector<double>{3, 8});
    CHECK(test::values(-a) == std::vector<double>{-1, -2});
    CHECK(test::values(scale(a, 2.5)) == std::vector<double>{2.5, 5});
    CHECK(test::values(a * TensorD::scalar(3)) == std::vector<double>{3, 6});
}

TEST_CASE("shape mismatch reports both shapes") {
    TensorD a(Shape{2, 3}), b(Shape{3, 2});
    try {
        (void)add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
        CHECK(msg.find("[3, 2]") != std::string::npos);
    }
}

TEST_CASE("backward basics") {
    auto x = random_tensor<double>({5}, 1).set_requires_grad();
    sum(x).backward();
    for (double g : x.grad()) CHECK(g == 1.0);

    x.zero_grad();
    scale(sum(x * x), 0.5).backward();
    for (std::size_t i = 0; i < 5; ++i) CHECK(x.grad()[i] == doctest::Approx(x.data()[i]).epsilon(1e-15));

    // accumulates across calls until zero_grad
    sum(x).backward();
    for (std::size_t i = 0; i < 5; ++i) CHECK(x.grad()[i] == doctest::Approx(x.data()[i] + 1).epsilon(1e-15));

    CHECK_THROWS(x.backward());  // not a scalar
    TensorD c = TensorD::scalar(2);
    CHECK_THROWS(c.backward());  // no graph
}

TEST_CASE("gradients accumulate additively across uses in one graph") {
    auto x = random_tensor<double>({3}, 2).set_requires_grad();
    sum(x + x + x).backward();
    for (double g : x.grad()) CHECK(g == doctest::Approx(3.0));
}

TEST_CASE("linear matches a naive triple loop") {
    auto x = random_tensor<double>({3, 4}, 3);
    auto w = random_tensor<double>({5, 4}, 4);
    auto b = random_tensor<double>({5}, 5);
    const auto y = linear(x, w, b);
    REQUIRE(y.shape() == Shape{3, 5});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t o = 0; o < 5; ++o) {
            double s = b.data()[o];
            for (std::size_t k = 0; k < 4; ++k) s += x.data()[i * 4 + k] * w.data()[o * 4 + k];
            CHECK(y.data()[i * 5 + o] == doctest::Approx(s).epsilon(1e-13));
        }
}

TEST_CASE("linear identity weight") {
    auto x = random_tensor<double>({2, 3}, 6);
    TensorD w(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), b(Shape{3}, 0.0);
    CHECK(test::values(linear(x, w, b)) == test::values(x));
    CHECK_THROWS_AS(linear(x, TensorD(Shape{3, 4}), b), ShapeError);
}

TEST_CASE("conv2d matches a direct cross-correlation") {
    const ConvGeometry g{2, 1};
    auto x = random_tensor<double>({2, 3, 7, 6}, 7);
    auto k = random_tensor<double>({4, 3, 3, 3}, 8);
    auto b = random_tensor<double>({4}, 9);
    const auto y = conv2d(x, k, b, g);
    const auto ref = test::naive_conv2d(x, k, b, g);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
}

TEST_CASE("conv2d geometry from the discriminator") {
    TensorF x(Shape{1, 3, 256, 256});
    CHECK(conv2d_extent(256, 3, {2, 1}) == 128);
    CHECK(conv2d_extent(4, 4, {1, 0}) == 1);
    CHECK(conv2d_extent(2, 5, {1, 0}) == 0);
    CHECK_THROWS_AS(conv2d(TensorF(Shape{1, 1, 2, 2}), TensorF(Shape{1, 1, 5, 5}), TensorF(), {1, 0}), ShapeError);
    TensorF k(Shape{1, 256, 4, 4}), b(Shape{1});
    CHECK(conv2d(TensorF(Shape{2, 256, 4, 4}), k, b, {1, 0}).shape() == Shape{2, 1, 1, 1});
}

TEST_CASE("conv2d with a delta kernel crops the centre") {
    TensorD x(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    TensorD k(Shape{1, 1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
    const auto y = conv2d(x, k, TensorD(Shape{1}, 0.0), {1, 0});
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.data()[0] == 5);
}

TEST_CASE("conv_transpose2d equals the input gradient of conv2d") {
    // conv2d k=4 s=2 p=1 maps [1,2,4,4] -> [1,3,2,2]
    const ConvGeometry g{2, 1};
    auto kernel = random_tensor<double>({3, 2, 4, 4}, 10);  // conv2d layout [out=3, in=2]
    auto upstream = random_tensor<double>({1, 3, 2, 2}, 11);
    auto x = TensorD(Shape{1, 2, 4, 4}, 0.0).set_requires_grad();
    // d/dx <conv2d(x), upstream> is conv2d's adjoint applied to upstream
    sum(conv2d(x, kernel, TensorD(), g) * upstream).backward();
    // the same kernel read as [in=3, out=2] for the transpose
    const auto y = conv_transpose2d(upstream, kernel, TensorD(), g);
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(x.grad()[i]).epsilon(1e-12));
}

TEST_CASE("conv_transpose2d geometry from the generator") {
    CHECK(conv_transpose2d_extent(4, 4, {2, 1}) == 8);
    CHECK(conv_transpose2d_extent(128, 4, {2, 1}) == 256);
    CHECK(conv_transpose2d_extent(1, 1, {1, 1}) == 0);
    CHECK_THROWS_AS(conv_transpose2d(TensorF(Shape{1, 1, 1, 1}), TensorF(Shape{1, 1, 1, 1}), TensorF(), {1, 1}),
                    ShapeError);
}

TEST_CASE("reshape round trip and validation") {
    auto x = random_tensor<double>({8, 16}, 12);
    const auto y = reshape(x, Shape{8, 1, 4, 4});
    CHECK(y.shape() == Shape{8, 1, 4, 4});
    CHECK(test::values(reshape(y, Shape{8, 16})) == test::values(x));
    CHECK_THROWS_AS(reshape(x, Shape{8, 15}), ShapeError);
}

TEST_CASE("concat and slice") {
    TensorD a(Shape{1, 2}, {1, 2}), b(Shape{2, 2}, {3, 4, 5, 6});
    const auto c = concat(a, b);
    CHECK(c.shape() == Shape{3, 2});
    CHECK(test::values(slice(c, 1, 3)) == test::values(b));
}

TEST_CASE("finite difference checker on trivial functions") {
    auto x = random_tensor<double>({6}, 13);
    const double e = finite_diff_check<double>([](const TensorD& v) { return sum(v * v); }, x, 1e-6);
    CHECK(e < 1e-8);
    const double t = finite_diff_check<double>(
        [](const TensorD& v) { return sum(tanh(tanh(scale(v, 2.0)) * v)); }, x, 1e-6);
    CHECK(t <= 1e-4);
}

TEST_CASE("mul gradient equals the other factor") {
    auto a = random_tensor<double>({4}, 14).set_requires_grad();
    auto b = random_tensor<double>({4}, 15);
    sum(a * b).backward();
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.grad()[i] == b.data()[i]);
    const double e = finite_diff_check<double>([&](const TensorD& v) { return sum(v * b); }, a, 1e-6);
    CHECK(e <= 1e-8);
}

TEST_CASE("bce and bce_with_logits agree") {
    const std::vector<double> labels{1, 0, 1, 0};
    TensorD logits(Shape{4}, {-2.0, -0.3, 0.7, 3.0});
    const double a = bce_with_logits<double>(logits, labels).item();
    const double b = bce<double>(sigmoid(logits), labels).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-14));
    TensorD half(Shape{1}, {0.5});
    CHECK(std::abs(bce<double>(half, std::vector<double>{1}).item() - std::log(2.0)) < 1e-12);
}

}  // TEST_SUITE
