#pragma once

// Dense row-major tensors with tape-free reverse-mode autodiff.
//
// Every operation that consumes a tensor requiring gradients attaches a
// Node to its result. The node owns strong references to its inputs and a
// closure that maps the output gradient onto the inputs. Calling
// backward() on a scalar walks the resulting DAG in reverse topological
// order. Leaf gradients accumulate across calls until zero_grad().

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdcgan {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class OpKind {
    leaf,
    add,
    sub,
    mul,
    neg,
    scale,
    sum,
    mean,
    linear,
    conv2d,
    conv_transpose2d,
    reshape,
    batch_norm2d,
    dropout2d,
    relu,
    leaky_relu,
    tanh,
    sigmoid,
    concat,
    slice,
    bce,
    bce_logits,
};

const char* op_name(OpKind kind);

namespace detail {

template <class T>
struct TensorImpl;

template <class T>
struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    // Receives dLoss/dOutput and accumulates into inputs[i]->grad.
    std::function<void(std::span<const T>)> backward;
};

template <class T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    std::shared_ptr<Node<T>> node;

    std::vector<T>& grad_buffer() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
        return grad;
    }
};

}  // namespace detail

/// Thread-local switch for graph recording.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool on);
};

class NoGradGuard {
public:
    NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <class T>
class Tensor {
public:
    using value_type = T;
    using Impl = detail::TensorImpl<T>;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);
    explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

    static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return impl_->data.size(); }

    std::span<T> data() { return impl_->data; }
    std::span<const T> data() const { return impl_->data; }
    T item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool on = true);
    bool has_grad() const { return impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }
    /// Empty when no gradient has been accumulated yet.
    std::span<const T> grad() const { return impl_->grad; }
    std::span<T> mutable_grad() { return impl_->grad_buffer(); }
    void zero_grad();

    OpKind op() const { return impl_->node ? impl_->node->kind : OpKind::leaf; }
    bool is_leaf() const { return impl_->node == nullptr; }

    /// Copy of the values with no graph attached.
    Tensor detach() const;

    /// Reverse-mode sweep from this scalar.
    void backward() const;

    const std::shared_ptr<Impl>& impl() const { return impl_; }
    bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

private:
    std::shared_ptr<Impl> impl_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mdcgan
