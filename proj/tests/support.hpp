#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mdcgan/gradcheck.hpp"
#include "mdcgan/model.hpp"
#include "mdcgan/ops.hpp"
#include "mdcgan/random.hpp"

namespace test {

using namespace mdcgan;

/// Entries Uniform(lo, hi) from a fixed seed.
template <class T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    Rng rng(seed);
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <class T>
std::vector<T> values(const Tensor<T>& t) {
    return {t.data().begin(), t.data().end()};
}

/// Direct seven-loop cross-correlation, no im2col.
template <class T>
Tensor<T> naive_conv2d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b, ConvGeometry g) {
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t co = k.dim(0), kk = k.dim(2);
    const std::size_t oh = (h + 2 * g.padding - kk) / g.stride + 1, ow = (w + 2 * g.padding - kk) / g.stride + 1;
    Tensor<T> y(Shape{n, co, oh, ow});
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = b.defined() ? b.data()[o] : 0.0;
                    for (std::size_t c = 0; c < ci; ++c)
                        for (std::size_t ky = 0; ky < kk; ++ky)
                            for (std::size_t kx = 0; kx < kk; ++kx) {
                                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                                static_cast<std::ptrdiff_t>(g.padding);
                                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                                static_cast<std::ptrdiff_t>(g.padding);
                                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                                    ix >= static_cast<std::ptrdiff_t>(w))
                                    continue;
                                acc += x.data()[((s * ci + c) * h + static_cast<std::size_t>(iy)) * w +
                                                static_cast<std::size_t>(ix)] *
                                       k.data()[((o * ci + c) * kk + ky) * kk + kx];
                            }
                    y.data()[((s * co + o) * oh + oy) * ow + ox] = static_cast<T>(acc);
                }
    return y;
}

/// One differentiable operation wrapped as a scalar loss over its inputs.
template <class T>
struct OpCase {
    std::string name;
    std::function<Tensor<T>()> loss;
    std::vector<Tensor<T>> inputs;
};

template <class T>
Tensor<T> leaf(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    auto t = random_tensor<T>(std::move(shape), seed, lo, hi);
    t.set_requires_grad(true);
    return t;
}

/// Weighted sum with fixed random weights so every output coordinate
/// carries a distinct, non-trivial upstream gradient.
template <class T>
Tensor<T> probe(const Tensor<T>& y, std::uint64_t seed) {
    return sum(mul(y, random_tensor<T>(y.shape(), seed)));
}

/// Every differentiable operation of the engine, on small inputs.
template <class T>
std::vector<OpCase<T>> op_cases() {
    std::vector<OpCase<T>> cases;
    auto add_case = [&](std::string name, std::vector<Tensor<T>> in, std::function<Tensor<T>()> fn) {
        cases.push_back({std::move(name), std::move(fn), std::move(in)});
    };
    {
        auto a = leaf<T>({3, 4}, 1), b = leaf<T>({3, 4}, 2);
        add_case("add", {a, b}, [=] { return probe(add(a, b), 100); });
        add_case("sub", {a, b}, [=] { return probe(sub(a, b), 101); });
        add_case("mul", {a, b}, [=] { return probe(mul(a, b), 102); });
        add_case("neg", {a}, [=] { return probe(neg(a), 103); });
        add_case("scale", {a}, [=] { return probe(scale(a, T(1.7)), 104); });
        auto s = leaf<T>({}, 3);
        add_case("mul_scalar", {a, s}, [=] { return probe(mul(a, s), 105); });
        add_case("sum", {a}, [=] { return mul(sum(a), sum(a)); });
        add_case("mean", {a}, [=] { return mul(mean(a), sum(b)); });
    }
    {
        auto x = leaf<T>({3, 5}, 4), w = leaf<T>({2, 5}, 5), b = leaf<T>({2}, 6);
        add_case("linear", {x, w, b}, [=] { return probe(linear(x, w, b), 106); });
    }
    {
        auto x = leaf<T>({2, 2, 5, 5}, 7), k = leaf<T>({3, 2, 3, 3}, 8), b = leaf<T>({3}, 9);
        add_case("conv2d", {x, k, b}, [=] { return probe(conv2d(x, k, b, {2, 1}), 107); });
        auto k4 = leaf<T>({1, 2, 5, 5}, 10), b1 = leaf<T>({1}, 11);
        add_case("conv2d_reduce", {x, k4, b1}, [=] { return probe(conv2d(x, k4, b1, {1, 0}), 108); });
    }
    {
        auto x = leaf<T>({2, 3, 3, 3}, 12), k = leaf<T>({3, 2, 4, 4}, 13), b = leaf<T>({2}, 14);
        add_case("conv_transpose2d", {x, k, b}, [=] { return probe(conv_transpose2d(x, k, b, {2, 1}), 109); });
    }
    {
        auto x = leaf<T>({2, 12}, 15);
        add_case("reshape", {x}, [=] { return probe(reshape(x, Shape{2, 3, 2, 2}), 110); });
    }
    {
        auto x = leaf<T>({4, 3, 3, 3}, 16, -2.0, 2.0), g = leaf<T>({3}, 17, 0.5, 1.5), b = leaf<T>({3}, 18);
        auto buffers = std::make_shared<BatchNormBuffers<T>>(
            BatchNormBuffers<T>{Tensor<T>(Shape{3}, T(0)), Tensor<T>(Shape{3}, T(1))});
        add_case("batch_norm2d_train", {x, g, b}, [=] {
            return probe(batch_norm2d(x, g, b, *buffers, BatchNormOptions{true, 0.1, 1e-5}), 111);
        });
        auto eval_buffers = std::make_shared<BatchNormBuffers<T>>(BatchNormBuffers<T>{
            random_tensor<T>(Shape{3}, 19), random_tensor<T>(Shape{3}, 20, 0.5, 2.0)});
        add_case("batch_norm2d_eval", {x, g, b}, [=] {
            return probe(batch_norm2d(x, g, b, *eval_buffers, BatchNormOptions{false, 0.1, 1e-5}), 112);
        });
    }
    {
        auto x = leaf<T>({4, 3, 2, 2}, 21);
        add_case("dropout2d_train", {x}, [=] {
            Rng rng(42);  // same mask on every evaluation
            return probe(dropout2d(x, 0.3, true, rng), 113);
        });
        add_case("dropout2d_eval", {x}, [=] {
            Rng rng(42);
            return probe(dropout2d(x, 0.3, false, rng), 114);
        });
    }
    {
        // keep inputs away from the ReLU kink so a finite step never crosses it
        auto x = random_tensor<T>({3, 4}, 22);
        for (auto& v : x.data()) v = v < 0 ? v - T(0.1) : v + T(0.1);
        x.set_requires_grad(true);
        add_case("relu", {x}, [=] { return probe(relu(x), 115); });
        add_case("leaky_relu", {x}, [=] { return probe(leaky_relu(x, T(0.2)), 116); });
        add_case("tanh", {x}, [=] { return probe(tanh(x), 117); });
        add_case("sigmoid", {x}, [=] { return probe(sigmoid(x), 118); });
    }
    {
        auto a = leaf<T>({2, 3}, 23), b = leaf<T>({3, 3}, 24);
        add_case("concat", {a, b}, [=] { return probe(concat(a, b), 119); });
        add_case("slice", {b}, [=] { return probe(slice(b, 1, 3), 120); });
    }
    {
        auto p = leaf<T>({6}, 25, 0.1, 0.9);
        auto z = leaf<T>({6}, 26, -3.0, 3.0);
        const std::vector<T> labels{1, 0, 1, 1, 0, 0};
        add_case("bce", {p}, [=] { return bce<T>(p, labels); });
        add_case("bce_with_logits", {z}, [=] { return bce_with_logits<T>(z, labels); });
    }
    return cases;
}

/// Copies every parameter and buffer value across precisions.
template <class To, class From>
void copy_model(const Model<From>& from, Model<To>& to) {
    auto copy = [](const auto& src, const auto& dst) {
        for (std::size_t i = 0; i < src.size(); ++i) {
            auto d = dst[i].second;
            const auto s = src[i].second.data();
            std::transform(s.begin(), s.end(), d.data().begin(), [](From v) { return static_cast<To>(v); });
        }
    };
    copy(from.named_parameters(), to.named_parameters());
    copy(from.named_buffers(), to.named_buffers());
}

/// A scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("mdcgan-" + tag + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace test
