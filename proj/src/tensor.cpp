#include "mdcgan/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace mdcgan {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::neg: return "neg";
        case OpKind::scale: return "scale";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::linear: return "linear";
        case OpKind::conv2d: return "conv2d";
        case OpKind::conv_transpose2d: return "conv_transpose2d";
        case OpKind::reshape: return "reshape";
        case OpKind::batch_norm2d: return "batch_norm2d";
        case OpKind::dropout2d: return "dropout2d";
        case OpKind::relu: return "relu";
        case OpKind::leaky_relu: return "leaky_relu";
        case OpKind::tanh: return "tanh";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::bce: return "bce";
        case OpKind::bce_logits: return "bce_logits";
    }
    return "unknown";
}

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

template <class T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<Impl>()) {
    impl_->data.assign(mdcgan::numel(shape), fill);
    impl_->shape = std::move(shape);
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
    if (mdcgan::numel(shape) != values.size()) {
        throw ShapeError("Tensor: shape " + to_string(shape) + " holds " + std::to_string(mdcgan::numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

template <class T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    if (axis >= impl_->shape.size()) {
        throw ShapeError("Tensor::dim: axis " + std::to_string(axis) + " out of range for " + to_string(impl_->shape));
    }
    return impl_->shape[axis];
}

template <class T>
T Tensor<T>::item() const {
    if (impl_->data.size() != 1) throw ShapeError("Tensor::item: tensor " + to_string(impl_->shape) + " is not a scalar");
    return impl_->data[0];
}

template <class T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
    if (impl_->node) throw std::logic_error("set_requires_grad: only leaf tensors can change gradient tracking");
    impl_->requires_grad = on;
    return *this;
}

template <class T>
void Tensor<T>::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(impl_->shape, impl_->data);
}

template <class T>
void Tensor<T>::backward() const {
    if (impl_->data.size() != 1) {
        throw ShapeError("backward: loss must be a scalar, got shape " + to_string(impl_->shape));
    }
    if (!impl_->requires_grad) throw std::logic_error("backward: loss does not depend on any tensor requiring grad");

    // Iterative post-order DFS gives a topological order (inputs before outputs).
    std::vector<Impl*> order;
    std::unordered_set<Impl*> visited;
    std::vector<std::pair<Impl*, bool>> stack{{impl_.get(), false}};
    while (!stack.empty()) {
        auto [node, expanded] = stack.back();
        stack.pop_back();
        if (expanded) {
            order.push_back(node);
            continue;
        }
        if (!visited.insert(node).second) continue;
        stack.emplace_back(node, true);
        if (node->node) {
            for (const auto& input : node->node->inputs) {
                if (input->requires_grad && !visited.count(input.get())) stack.emplace_back(input.get(), false);
            }
        }
    }

    impl_->grad_buffer()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Impl* node = *it;
        if (!node->node) continue;
        if (node->grad.size() == node->data.size()) node->node->backward(node->grad);
        // Interior gradients are scratch space; only leaves keep theirs.
        std::vector<T>().swap(node->grad);
    }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace mdcgan
