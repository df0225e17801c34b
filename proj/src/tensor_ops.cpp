#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "mdcgan/ops.hpp"

namespace mdcgan {

namespace {

template <class T>
using MatrixR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapR = Eigen::Map<MatrixR<T>>;
template <class T>
using ConstMapR = Eigen::Map<const MatrixR<T>>;

template <class T>
using Impl = detail::TensorImpl<T>;
template <class T>
using ImplPtr = std::shared_ptr<Impl<T>>;

template <class T>
bool needs_grad(const Tensor<T>& t) {
    return t.defined() && t.requires_grad();
}

/// Wraps freshly computed values and, when any input tracks gradients,
/// attaches a node. `inputs` may contain undefined tensors (optional bias).
template <class T, class Backward>
Tensor<T> make_result(Shape shape, std::vector<T> data, OpKind kind, std::initializer_list<Tensor<T>> inputs,
                      Backward&& backward) {
    Tensor<T> out(std::move(shape), std::move(data));
    if (!GradMode::enabled()) return out;
    bool any = false;
    for (const auto& input : inputs) any = any || needs_grad(input);
    if (!any) return out;
    auto node = std::make_shared<detail::Node<T>>();
    node->kind = kind;
    for (const auto& input : inputs) {
        if (input.defined()) node->inputs.push_back(input.impl());
    }
    node->backward = std::forward<Backward>(backward);
    out.impl()->requires_grad = true;
    out.impl()->node = std::move(node);
    return out;
}

/// Gradient sink for an input, or nullptr if it does not track gradients.
template <class T>
T* grad_sink(const ImplPtr<T>& impl) {
    return impl && impl->requires_grad ? impl->grad_buffer().data() : nullptr;
}

void require(bool condition, const std::string& message) {
    if (!condition) throw ShapeError(message);
}

bool is_scalar(const Shape& shape) { return numel(shape) == 1 && shape.empty(); }

enum class Binary { add, sub, mul };

template <class T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Binary op, OpKind kind, const char* name) {
    const bool broadcast = is_scalar(b.shape()) && !is_scalar(a.shape());
    require(broadcast || a.shape() == b.shape(),
            std::string(name) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    const auto av = a.data();
    const auto bv = b.data();
    const std::size_t n = av.size();
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T rhs = broadcast ? bv[0] : bv[i];
        switch (op) {
            case Binary::add: out[i] = av[i] + rhs; break;
            case Binary::sub: out[i] = av[i] - rhs; break;
            case Binary::mul: out[i] = av[i] * rhs; break;
        }
    }
    auto ai = a.impl();
    auto bi = b.impl();
    return make_result<T>(a.shape(), std::move(out), kind, {a, b}, [ai, bi, op, broadcast](std::span<const T> g) {
        const std::size_t n = g.size();
        if (T* ga = grad_sink(ai)) {
            for (std::size_t i = 0; i < n; ++i) {
                ga[i] += op == Binary::mul ? g[i] * (broadcast ? bi->data[0] : bi->data[i]) : g[i];
            }
        }
        if (T* gb = grad_sink(bi)) {
            for (std::size_t i = 0; i < n; ++i) {
                T contribution = g[i];
                if (op == Binary::sub) contribution = -contribution;
                if (op == Binary::mul) contribution *= ai->data[i];
                gb[broadcast ? 0 : i] += contribution;
            }
        }
    });
}

template <class T>
Tensor<T> unary(const Tensor<T>& x, OpKind kind, std::vector<T> out, std::vector<T> local_derivative) {
    auto xi = x.impl();
    return make_result<T>(x.shape(), std::move(out), kind, {x},
                          [xi, d = std::move(local_derivative)](std::span<const T> g) {
                              T* gx = grad_sink(xi);
                              for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * d[i];
                          });
}

// im2col over a whole batch. Input is [batch, channels, height, width];
// columns are [channels * k * k, batch * out_h * out_w].
template <class T>
void im2col(const T* input, std::size_t batch, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kernel, ConvGeometry g, std::size_t out_h, std::size_t out_w, T* cols) {
    const std::size_t plane = out_h * out_w;
    const std::size_t row_stride = batch * plane;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t ki = 0; ki < kernel; ++ki) {
            for (std::size_t kj = 0; kj < kernel; ++kj) {
                T* row = cols + ((c * kernel + ki) * kernel + kj) * row_stride;
                for (std::size_t b = 0; b < batch; ++b) {
                    const T* src = input + (b * channels + c) * height * width;
                    T* dst = row + b * plane;
                    for (std::size_t oh = 0; oh < out_h; ++oh) {
                        const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
                        T* dst_row = dst + oh * out_w;
                        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) {
                            std::fill(dst_row, dst_row + out_w, T(0));
                            continue;
                        }
                        const T* src_row = src + static_cast<std::size_t>(ih) * width;
                        for (std::size_t ow = 0; ow < out_w; ++ow) {
                            const auto iw =
                                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.padding);
                            dst_row[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width)) ? T(0) : src_row[iw];
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds columns back into an image batch.
template <class T>
void col2im(const T* cols, std::size_t batch, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kernel, ConvGeometry g, std::size_t out_h, std::size_t out_w, T* image) {
    const std::size_t plane = out_h * out_w;
    const std::size_t row_stride = batch * plane;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t ki = 0; ki < kernel; ++ki) {
            for (std::size_t kj = 0; kj < kernel; ++kj) {
                const T* row = cols + ((c * kernel + ki) * kernel + kj) * row_stride;
                for (std::size_t b = 0; b < batch; ++b) {
                    T* dst = image + (b * channels + c) * height * width;
                    const T* src = row + b * plane;
                    for (std::size_t oh = 0; oh < out_h; ++oh) {
                        const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
                        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) continue;
                        T* dst_row = dst + static_cast<std::size_t>(ih) * width;
                        const T* src_row = src + oh * out_w;
                        for (std::size_t ow = 0; ow < out_w; ++ow) {
                            const auto iw =
                                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.padding);
                            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(width)) dst_row[iw] += src_row[ow];
                        }
                    }
                }
            }
        }
    }
}

// [batch, channels, plane] <-> [channels, batch * plane]
template <class T>
void batch_major_to_channel_major(const T* src, std::size_t batch, std::size_t channels, std::size_t plane, T* dst) {
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
            std::copy_n(src + (b * channels + c) * plane, plane, dst + (c * batch + b) * plane);
}

template <class T>
void channel_major_to_batch_major(const T* src, std::size_t batch, std::size_t channels, std::size_t plane, T* dst) {
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t b = 0; b < batch; ++b)
            std::copy_n(src + (c * batch + b) * plane, plane, dst + (b * channels + c) * plane);
}

template <class T>
void check_bias(const Tensor<T>& bias, std::size_t channels, const char* name) {
    if (!bias.defined()) return;
    require(bias.shape() == Shape{channels},
            std::string(name) + ": bias shape " + to_string(bias.shape()) + " does not match " +
                std::to_string(channels) + " output channels");
}

}  // namespace

std::size_t conv2d_extent(std::size_t input, std::size_t kernel, ConvGeometry g) {
    const auto padded = static_cast<std::ptrdiff_t>(input + 2 * g.padding) - static_cast<std::ptrdiff_t>(kernel);
    if (g.stride == 0 || padded < 0) return 0;
    return static_cast<std::size_t>(padded) / g.stride + 1;
}

std::size_t conv_transpose2d_extent(std::size_t input, std::size_t kernel, ConvGeometry g) {
    if (input == 0) return 0;
    const auto extent = static_cast<std::ptrdiff_t>((input - 1) * g.stride + kernel) -
                        static_cast<std::ptrdiff_t>(2 * g.padding);
    return extent < 1 ? 0 : static_cast<std::size_t>(extent);
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, Binary::add, OpKind::add, "add");
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, Binary::sub, OpKind::sub, "sub");
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, Binary::mul, OpKind::mul, "mul");
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = -v;
    return unary(a, OpKind::neg, std::move(out), std::vector<T>(a.numel(), T(-1)));
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= factor;
    auto ai = a.impl();
    return make_result<T>(a.shape(), std::move(out), OpKind::scale, {a}, [ai, factor](std::span<const T> g) {
        T* ga = grad_sink(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
    T total = T(0);
    for (T v : a.data()) total += v;
    auto ai = a.impl();
    return make_result<T>(Shape{}, {total}, OpKind::sum, {a}, [ai](std::span<const T> g) {
        T* ga = grad_sink(ai);
        for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g[0];
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
    require(a.numel() > 0, "mean: empty tensor");
    T total = T(0);
    for (T v : a.data()) total += v;
    const T inv = T(1) / static_cast<T>(a.numel());
    auto ai = a.impl();
    return make_result<T>(Shape{}, {total * inv}, OpKind::mean, {a}, [ai, inv](std::span<const T> g) {
        T* ga = grad_sink(ai);
        for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g[0] * inv;
    });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require(x.rank() == 2 && weight.rank() == 2,
            "linear: expected x [batch, in] and weight [out, in], got " + to_string(x.shape()) + " and " +
                to_string(weight.shape()));
    const std::size_t batch = x.dim(0), in = x.dim(1), out_features = weight.dim(0);
    require(weight.dim(1) == in, "linear: inner dimensions disagree, x " + to_string(x.shape()) + " vs weight " +
                                     to_string(weight.shape()));
    check_bias(bias, out_features, "linear");

    std::vector<T> out(batch * out_features);
    MapR<T> y(out.data(), batch, out_features);
    ConstMapR<T> xm(x.data().data(), batch, in);
    ConstMapR<T> wm(weight.data().data(), out_features, in);
    y.noalias() = xm * wm.transpose();
    if (bias.defined()) {
        const auto bv = bias.data();
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < out_features; ++c) out[r * out_features + c] += bv[c];
    }

    auto xi = x.impl();
    auto wi = weight.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    return make_result<T>(Shape{batch, out_features}, std::move(out), OpKind::linear, {x, weight, bias},
                          [xi, wi, bi, batch, in, out_features](std::span<const T> g) {
                              ConstMapR<T> gm(g.data(), batch, out_features);
                              if (T* gx = grad_sink(xi)) {
                                  MapR<T>(gx, batch, in).noalias() +=
                                      gm * ConstMapR<T>(wi->data.data(), out_features, in);
                              }
                              if (T* gw = grad_sink(wi)) {
                                  MapR<T>(gw, out_features, in).noalias() +=
                                      gm.transpose() * ConstMapR<T>(xi->data.data(), batch, in);
                              }
                              if (T* gb = grad_sink(bi)) {
                                  for (std::size_t r = 0; r < batch; ++r)
                                      for (std::size_t c = 0; c < out_features; ++c) gb[c] += g[r * out_features + c];
                              }
                          });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, ConvGeometry geometry) {
    require(x.rank() == 4 && kernel.rank() == 4,
            "conv2d: expected x [b, c, h, w] and kernel [c_out, c_in, k, k], got " + to_string(x.shape()) + " and " +
                to_string(kernel.shape()));
    const std::size_t batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t c_out = kernel.dim(0), k = kernel.dim(2);
    require(kernel.dim(1) == c_in && kernel.dim(3) == k,
            "conv2d: kernel " + to_string(kernel.shape()) + " incompatible with input " + to_string(x.shape()));
    require(geometry.stride >= 1, "conv2d: stride must be positive");
    check_bias(bias, c_out, "conv2d");
    const std::size_t oh = conv2d_extent(h, k, geometry), ow = conv2d_extent(w, k, geometry);
    require(oh >= 1 && ow >= 1, "conv2d: output extent < 1 for input " + to_string(x.shape()) + ", kernel " +
                                    std::to_string(k) + ", stride " + std::to_string(geometry.stride) +
                                    ", padding " + std::to_string(geometry.padding));

    const std::size_t patch = c_in * k * k;
    const std::size_t columns = batch * oh * ow;
    std::vector<T> cols(patch * columns);
    im2col(x.data().data(), batch, c_in, h, w, k, geometry, oh, ow, cols.data());

    std::vector<T> out_cm(c_out * columns);
    MapR<T>(out_cm.data(), c_out, columns).noalias() =
        ConstMapR<T>(kernel.data().data(), c_out, patch) * ConstMapR<T>(cols.data(), patch, columns);
    if (bias.defined()) {
        const auto bv = bias.data();
        for (std::size_t c = 0; c < c_out; ++c)
            for (std::size_t j = 0; j < columns; ++j) out_cm[c * columns + j] += bv[c];
    }
    std::vector<T> out(out_cm.size());
    channel_major_to_batch_major(out_cm.data(), batch, c_out, oh * ow, out.data());

    auto xi = x.impl();
    auto ki = kernel.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    if (!GradMode::enabled() || !(needs_grad(x) || needs_grad(kernel) || needs_grad(bias))) {
        return Tensor<T>(Shape{batch, c_out, oh, ow}, std::move(out));
    }
    return make_result<T>(
        Shape{batch, c_out, oh, ow}, std::move(out), OpKind::conv2d, {x, kernel, bias},
        [xi, ki, bi, cols = std::move(cols), geometry, batch, c_in, h, w, c_out, k, oh, ow](std::span<const T> g) {
            const std::size_t patch = c_in * k * k;
            const std::size_t columns = batch * oh * ow;
            std::vector<T> g_cm(g.size());
            batch_major_to_channel_major(g.data(), batch, c_out, oh * ow, g_cm.data());
            ConstMapR<T> gm(g_cm.data(), c_out, columns);
            if (T* gk = grad_sink(ki)) {
                MapR<T>(gk, c_out, patch).noalias() += gm * ConstMapR<T>(cols.data(), patch, columns).transpose();
            }
            if (T* gb = grad_sink(bi)) {
                for (std::size_t c = 0; c < c_out; ++c)
                    for (std::size_t j = 0; j < columns; ++j) gb[c] += g_cm[c * columns + j];
            }
            if (T* gx = grad_sink(xi)) {
                std::vector<T> dcols(patch * columns);
                MapR<T>(dcols.data(), patch, columns).noalias() =
                    ConstMapR<T>(ki->data.data(), c_out, patch).transpose() * gm;
                col2im(dcols.data(), batch, c_in, h, w, k, geometry, oh, ow, gx);
            }
        });
}

template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                           ConvGeometry geometry) {
    require(x.rank() == 4 && kernel.rank() == 4,
            "conv_transpose2d: expected x [b, c, h, w] and kernel [c_in, c_out, k, k], got " + to_string(x.shape()) +
                " and " + to_string(kernel.shape()));
    const std::size_t batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t c_out = kernel.dim(1), k = kernel.dim(2);
    require(kernel.dim(0) == c_in && kernel.dim(3) == k, "conv_transpose2d: kernel " + to_string(kernel.shape()) +
                                                             " incompatible with input " + to_string(x.shape()));
    require(geometry.stride >= 1, "conv_transpose2d: stride must be positive");
    check_bias(bias, c_out, "conv_transpose2d");
    const std::size_t oh = conv_transpose2d_extent(h, k, geometry), ow = conv_transpose2d_extent(w, k, geometry);
    require(oh >= 1 && ow >= 1, "conv_transpose2d: invalid geometry for input " + to_string(x.shape()) +
                                    ", kernel " + std::to_string(k) + ", stride " + std::to_string(geometry.stride) +
                                    ", padding " + std::to_string(geometry.padding));
    // The output must map back onto exactly h x w under the forward conv.
    require(conv2d_extent(oh, k, geometry) == h && conv2d_extent(ow, k, geometry) == w,
            "conv_transpose2d: geometry is not invertible for input " + to_string(x.shape()));

    const std::size_t patch = c_out * k * k;
    const std::size_t columns = batch * h * w;
    std::vector<T> x_cm(x.numel());
    batch_major_to_channel_major(x.data().data(), batch, c_in, h * w, x_cm.data());
    std::vector<T> cols(patch * columns);
    MapR<T>(cols.data(), patch, columns).noalias() =
        ConstMapR<T>(kernel.data().data(), c_in, patch).transpose() * ConstMapR<T>(x_cm.data(), c_in, columns);
    std::vector<T> out(batch * c_out * oh * ow, T(0));
    col2im(cols.data(), batch, c_out, oh, ow, k, geometry, h, w, out.data());
    if (bias.defined()) {
        const auto bv = bias.data();
        const std::size_t plane = oh * ow;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < c_out; ++c) {
                T* dst = out.data() + (b * c_out + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) dst[i] += bv[c];
            }
    }
    cols = {};

    auto xi = x.impl();
    auto ki = kernel.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    if (!GradMode::enabled() || !(needs_grad(x) || needs_grad(kernel) || needs_grad(bias))) {
        return Tensor<T>(Shape{batch, c_out, oh, ow}, std::move(out));
    }
    return make_result<T>(
        Shape{batch, c_out, oh, ow}, std::move(out), OpKind::conv_transpose2d, {x, kernel, bias},
        [xi, ki, bi, x_cm = std::move(x_cm), geometry, batch, c_in, h, w, c_out, k, oh, ow](std::span<const T> g) {
            const std::size_t patch = c_out * k * k;
            const std::size_t columns = batch * h * w;
            if (T* gb = grad_sink(bi)) {
                const std::size_t plane = oh * ow;
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t c = 0; c < c_out; ++c) {
                        const T* src = g.data() + (b * c_out + c) * plane;
                        T acc = T(0);
                        for (std::size_t i = 0; i < plane; ++i) acc += src[i];
                        gb[c] += acc;
                    }
            }
            T* gk = grad_sink(ki);
            T* gx = grad_sink(xi);
            if (!gk && !gx) return;
            std::vector<T> dcols(patch * columns);
            im2col(g.data(), batch, c_out, oh, ow, k, geometry, h, w, dcols.data());
            ConstMapR<T> dm(dcols.data(), patch, columns);
            if (gk) {
                MapR<T>(gk, c_in, patch).noalias() += ConstMapR<T>(x_cm.data(), c_in, columns) * dm.transpose();
            }
            if (gx) {
                std::vector<T> dx_cm(c_in * columns);
                MapR<T>(dx_cm.data(), c_in, columns).noalias() = ConstMapR<T>(ki->data.data(), c_in, patch) * dm;
                std::vector<T> dx(dx_cm.size());
                channel_major_to_batch_major(dx_cm.data(), batch, c_in, h * w, dx.data());
                for (std::size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
            }
        });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
    require(numel(shape) == x.numel(), "reshape: cannot view " + to_string(x.shape()) + " (" +
                                           std::to_string(x.numel()) + " elements) as " + to_string(shape));
    auto xi = x.impl();
    return make_result<T>(shape, std::vector<T>(x.data().begin(), x.data().end()), OpKind::reshape, {x},
                          [xi](std::span<const T> g) {
                              T* gx = grad_sink(xi);
                              for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                          });
}

template <class T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormBuffers<T>& buffers, BatchNormOptions options) {
    require(x.rank() == 4, "batch_norm2d: expected [b, c, h, w], got " + to_string(x.shape()));
    const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
    require(gamma.shape() == Shape{channels} && beta.shape() == Shape{channels},
            "batch_norm2d: affine parameters must be [" + std::to_string(channels) + "]");
    require(buffers.running_mean.shape() == Shape{channels} && buffers.running_var.shape() == Shape{channels},
            "batch_norm2d: running statistics must be [" + std::to_string(channels) + "]");
    if (options.training && batch < 2) {
        throw ShapeError("batch_norm2d: training mode needs a batch of at least 2, got " + std::to_string(batch));
    }

    const auto xv = x.data();
    const auto gv = gamma.data();
    const auto bv = beta.data();
    const std::size_t count = batch * plane;
    std::vector<T> mean_c(channels), invstd_c(channels);

    if (options.training) {
        auto rm = buffers.running_mean.data();
        auto rv = buffers.running_var.data();
        for (std::size_t c = 0; c < channels; ++c) {
            double acc = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const T* src = xv.data() + (b * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) acc += src[i];
            }
            const double mu = acc / static_cast<double>(count);
            double sq = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const T* src = xv.data() + (b * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = src[i] - mu;
                    sq += d * d;
                }
            }
            const double var = sq / static_cast<double>(count);
            mean_c[c] = static_cast<T>(mu);
            invstd_c[c] = static_cast<T>(1.0 / std::sqrt(var + options.epsilon));
            const double unbiased = sq / static_cast<double>(count - 1);
            rm[c] = static_cast<T>((1.0 - options.momentum) * rm[c] + options.momentum * mu);
            rv[c] = static_cast<T>((1.0 - options.momentum) * rv[c] + options.momentum * unbiased);
        }
    } else {
        const auto rm = buffers.running_mean.data();
        const auto rv = buffers.running_var.data();
        for (std::size_t c = 0; c < channels; ++c) {
            mean_c[c] = rm[c];
            invstd_c[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[c]) + options.epsilon));
        }
    }

    std::vector<T> xhat(x.numel()), out(x.numel());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                xhat[base + i] = (xv[base + i] - mean_c[c]) * invstd_c[c];
                out[base + i] = gv[c] * xhat[base + i] + bv[c];
            }
        }

    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    const bool training = options.training;
    return make_result<T>(
        x.shape(), std::move(out), OpKind::batch_norm2d, {x, gamma, beta},
        [xi, gi, bi, xhat = std::move(xhat), invstd_c = std::move(invstd_c), training, batch, channels,
         plane](std::span<const T> g) {
            const std::size_t count = batch * plane;
            T* gx = grad_sink(xi);
            T* gg = grad_sink(gi);
            T* gb = grad_sink(bi);
            for (std::size_t c = 0; c < channels; ++c) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t base = (b * channels + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_g += g[base + i];
                        sum_gx += static_cast<double>(g[base + i]) * xhat[base + i];
                    }
                }
                if (gg) gg[c] += static_cast<T>(sum_gx);
                if (gb) gb[c] += static_cast<T>(sum_g);
                if (!gx) continue;
                const T gamma_c = gi->data[c];
                if (training) {
                    // dx = gamma * invstd / N * (N g - sum(g) - xhat * sum(g xhat))
                    const double factor = static_cast<double>(gamma_c) * invstd_c[c] / static_cast<double>(count);
                    for (std::size_t b = 0; b < batch; ++b) {
                        const std::size_t base = (b * channels + c) * plane;
                        for (std::size_t i = 0; i < plane; ++i) {
                            gx[base + i] += static_cast<T>(
                                factor * (static_cast<double>(count) * g[base + i] - sum_g - xhat[base + i] * sum_gx));
                        }
                    }
                } else {
                    const T factor = gamma_c * invstd_c[c];
                    for (std::size_t b = 0; b < batch; ++b) {
                        const std::size_t base = (b * channels + c) * plane;
                        for (std::size_t i = 0; i < plane; ++i) gx[base + i] += g[base + i] * factor;
                    }
                }
            }
        });
}

template <class T>
Tensor<T> dropout2d(const Tensor<T>& x, double p, bool training, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout2d: probability must lie in [0, 1), got " + std::to_string(p));
    require(x.rank() >= 2, "dropout2d: expected at least [b, c], got " + to_string(x.shape()));
    if (!training || p == 0.0) return x;
    const std::size_t planes = x.dim(0) * x.dim(1);
    const std::size_t plane = x.numel() / planes;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    std::vector<T> mask(planes);
    for (auto& m : mask) m = rng.uniform() < p ? T(0) : keep_scale;
    std::vector<T> out(x.numel());
    const auto xv = x.data();
    for (std::size_t q = 0; q < planes; ++q)
        for (std::size_t i = 0; i < plane; ++i) out[q * plane + i] = xv[q * plane + i] * mask[q];
    auto xi = x.impl();
    return make_result<T>(x.shape(), std::move(out), OpKind::dropout2d, {x},
                          [xi, mask = std::move(mask), plane](std::span<const T> g) {
                              T* gx = grad_sink(xi);
                              for (std::size_t q = 0; q < mask.size(); ++q)
                                  for (std::size_t i = 0; i < plane; ++i) gx[q * plane + i] += g[q * plane + i] * mask[q];
                          });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    const auto xv = x.data();
    std::vector<T> out(xv.size()), d(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const bool positive = xv[i] > T(0);
        out[i] = positive ? xv[i] : T(0);
        d[i] = positive ? T(1) : T(0);
    }
    return unary(x, OpKind::relu, std::move(out), std::move(d));
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope) {
    const auto xv = x.data();
    std::vector<T> out(xv.size()), d(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const bool positive = xv[i] > T(0);
        out[i] = positive ? xv[i] : negative_slope * xv[i];
        d[i] = positive ? T(1) : negative_slope;
    }
    return unary(x, OpKind::leaky_relu, std::move(out), std::move(d));
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
    const auto xv = x.data();
    std::vector<T> out(xv.size()), d(xv.size());
    // std::tanh rounds to +-1 past |x| ~ 9 (float) / 19 (double); keep the
    // range open so generated pixels never sit on the boundary.
    const T edge = std::nextafter(T(1), T(0));
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = std::clamp(std::tanh(xv[i]), -edge, edge);
        d[i] = T(1) - out[i] * out[i];
    }
    return unary(x, OpKind::tanh, std::move(out), std::move(d));
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    const auto xv = x.data();
    std::vector<T> out(xv.size()), d(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        // Branching keeps exp() from overflowing for large |x|.
        if (xv[i] >= T(0)) {
            out[i] = T(1) / (T(1) + std::exp(-xv[i]));
        } else {
            const T e = std::exp(xv[i]);
            out[i] = e / (T(1) + e);
        }
        // same for saturated logits: probabilities stay inside (0, 1)
        out[i] = std::clamp(out[i], std::numeric_limits<T>::min(), std::nextafter(T(1), T(0)));
        d[i] = out[i] * (T(1) - out[i]);
    }
    return unary(x, OpKind::sigmoid, std::move(out), std::move(d));
}

template <class T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.rank() >= 1 && a.rank() == b.rank(),
            "concat: rank mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    require(std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1),
            "concat: trailing shapes differ " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    Shape shape = a.shape();
    shape[0] += b.dim(0);
    std::vector<T> out;
    out.reserve(a.numel() + b.numel());
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    auto ai = a.impl();
    auto bi = b.impl();
    return make_result<T>(std::move(shape), std::move(out), OpKind::concat, {a, b}, [ai, bi](std::span<const T> g) {
        const std::size_t na = ai->data.size();
        if (T* ga = grad_sink(ai))
            for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        if (T* gb = grad_sink(bi))
            for (std::size_t i = 0; i < bi->data.size(); ++i) gb[i] += g[na + i];
    });
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t begin, std::size_t end) {
    require(x.rank() >= 1 && begin < end && end <= x.dim(0),
            "slice: rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                to_string(x.shape()));
    const std::size_t row = x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = end - begin;
    std::vector<T> out(x.data().begin() + begin * row, x.data().begin() + end * row);
    auto xi = x.impl();
    const std::size_t offset = begin * row;
    return make_result<T>(std::move(shape), std::move(out), OpKind::slice, {x}, [xi, offset](std::span<const T> g) {
        T* gx = grad_sink(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
    });
}

template <class T>
Tensor<T> bce(const Tensor<T>& probabilities, std::span<const T> labels, double clamp) {
    const auto pv = probabilities.data();
    require(pv.size() == labels.size(), "bce: " + std::to_string(pv.size()) + " predictions but " +
                                            std::to_string(labels.size()) + " labels");
    require(!pv.empty(), "bce: empty batch");
    const T lo = static_cast<T>(clamp);
    const T hi = static_cast<T>(1.0 - clamp);
    const std::size_t n = pv.size();
    T total = T(0);
    std::vector<T> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool inside = pv[i] > lo && pv[i] < hi;
        const T z = std::clamp(pv[i], lo, hi);
        total += labels[i] * std::log(z) + (T(1) - labels[i]) * std::log(T(1) - z);
        d[i] = inside ? -(labels[i] / z - (T(1) - labels[i]) / (T(1) - z)) / static_cast<T>(n) : T(0);
    }
    auto pi = probabilities.impl();
    return make_result<T>(Shape{}, {-total / static_cast<T>(n)}, OpKind::bce, {probabilities},
                          [pi, d = std::move(d)](std::span<const T> g) {
                              T* gp = grad_sink(pi);
                              for (std::size_t i = 0; i < d.size(); ++i) gp[i] += g[0] * d[i];
                          });
}

template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> labels, double clamp) {
    const auto lv = logits.data();
    require(lv.size() == labels.size(), "bce_with_logits: " + std::to_string(lv.size()) + " predictions but " +
                                            std::to_string(labels.size()) + " labels");
    require(!lv.empty(), "bce_with_logits: empty batch");
    const T bound = static_cast<T>(std::log((1.0 - clamp) / clamp));
    const std::size_t n = lv.size();
    T total = T(0);
    std::vector<T> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool inside = lv[i] > -bound && lv[i] < bound;
        const T l = std::clamp(lv[i], -bound, bound);
        // softplus(l) - y l, the stable form of -[y log s(l) + (1-y) log(1-s(l))]
        total += std::max(l, T(0)) - l * labels[i] + std::log1p(std::exp(-std::abs(l)));
        const T s = l >= T(0) ? T(1) / (T(1) + std::exp(-l)) : std::exp(l) / (T(1) + std::exp(l));
        d[i] = inside ? (s - labels[i]) / static_cast<T>(n) : T(0);
    }
    auto li = logits.impl();
    return make_result<T>(Shape{}, {total / static_cast<T>(n)}, OpKind::bce_logits, {logits},
                          [li, d = std::move(d)](std::span<const T> g) {
                              T* gl = grad_sink(li);
                              for (std::size_t i = 0; i < d.size(); ++i) gl[i] += g[0] * d[i];
                          });
}

#define MDCGAN_INSTANTIATE_OPS(T)                                                                             \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> neg(const Tensor<T>&);                                                                 \
    template Tensor<T> scale(const Tensor<T>&, T);                                                            \
    template Tensor<T> sum(const Tensor<T>&);                                                                 \
    template Tensor<T> mean(const Tensor<T>&);                                                                \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvGeometry);            \
    template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvGeometry);  \
    template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                               \
    template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormBuffers<T>&, \
                                    BatchNormOptions);                                                        \
    template Tensor<T> dropout2d(const Tensor<T>&, double, bool, Rng&);                                       \
    template Tensor<T> relu(const Tensor<T>&);                                                                \
    template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                       \
    template Tensor<T> tanh(const Tensor<T>&);                                                                \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                             \
    template Tensor<T> concat(const Tensor<T>&, const Tensor<T>&);                                            \
    template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t);                                     \
    template Tensor<T> bce(const Tensor<T>&, std::span<const T>, double);                                     \
    template Tensor<T> bce_with_logits(const Tensor<T>&, std::span<const T>, double);

MDCGAN_INSTANTIATE_OPS(float)
MDCGAN_INSTANTIATE_OPS(double)

}  // namespace mdcgan
