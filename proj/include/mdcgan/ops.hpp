#pragma once

// Differentiable operations over Tensor<T>. All are instantiated for
// float (training) and double (gradient checking) and run the same code.

#include <cstddef>
#include <span>

#include "mdcgan/random.hpp"
#include "mdcgan/tensor.hpp"

namespace mdcgan {

// Elementwise. `b` must match `a` exactly or be a rank-0 scalar tensor.
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> neg(const Tensor<T>& a);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);

template <class T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

// Reductions to a rank-0 tensor.
template <class T> Tensor<T> sum(const Tensor<T>& a);
template <class T> Tensor<T> mean(const Tensor<T>& a);

/// y = x Wᵀ + b with x [batch, in], W [out, in], b [out] (bias may be undefined).
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

struct ConvGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Cross-correlation. x [b, c_in, h, w], kernel [c_out, c_in, k, k], bias [c_out].
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, ConvGeometry geometry);

/// Adjoint of conv2d. x [b, c_in, h, w], kernel [c_in, c_out, k, k], bias [c_out].
/// Output extent is (h - 1) * stride - 2 * padding + k.
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                           ConvGeometry geometry);

std::size_t conv2d_extent(std::size_t input, std::size_t kernel, ConvGeometry geometry);
std::size_t conv_transpose2d_extent(std::size_t input, std::size_t kernel, ConvGeometry geometry);

template <class T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);

/// Running statistics owned by a batch-norm layer; updated in place in
/// training mode only.
template <class T>
struct BatchNormBuffers {
    Tensor<T> running_mean;
    Tensor<T> running_var;
};

struct BatchNormOptions {
    bool training = true;
    double momentum = 0.1;
    double epsilon = 1e-5;
};

template <class T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormBuffers<T>& buffers, BatchNormOptions options);

/// Zeroes whole (sample, channel) planes with probability p and scales the
/// survivors by 1/(1-p). Identity when not training or p == 0.
template <class T>
Tensor<T> dropout2d(const Tensor<T>& x, double p, bool training, Rng& rng);

template <class T> Tensor<T> relu(const Tensor<T>& x);
template <class T> Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope);
template <class T> Tensor<T> tanh(const Tensor<T>& x);
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);

/// Concatenate along axis 0.
template <class T> Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b);
/// Rows [begin, end) along axis 0.
template <class T> Tensor<T> slice(const Tensor<T>& x, std::size_t begin, std::size_t end);

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy over probabilities, clamped to [eps, 1-eps].
template <class T>
Tensor<T> bce(const Tensor<T>& probabilities, std::span<const T> labels, double clamp = kProbabilityClamp);

/// Same value as bce(sigmoid(logits)) but evaluated in the softplus form.
/// Logits are clamped to ±log((1-eps)/eps), matching the probability clamp.
template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> labels, double clamp = kProbabilityClamp);

}  // namespace mdcgan
