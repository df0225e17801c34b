#include "mdcgan/layers.hpp"

#include <stdexcept>

namespace mdcgan {

const char* layer_type_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::linear: return "Linear";
        case LayerKind::conv2d: return "Conv2d";
        case LayerKind::conv_transpose2d: return "ConvTranspose2d";
        case LayerKind::batchnorm2d: return "BatchNorm2d";
        case LayerKind::dropout2d: return "Dropout2d";
        case LayerKind::relu: return "ReLU";
        case LayerKind::leaky_relu: return "LeakyReLU";
        case LayerKind::tanh: return "Tanh";
        case LayerKind::sigmoid: return "Sigmoid";
        case LayerKind::reshape: return "Reshape";
    }
    return "Unknown";
}

LayerSpec LayerSpec::linear(std::size_t in_features, std::size_t out_features) {
    LayerSpec s;
    s.kind = LayerKind::linear;
    s.in_channels = in_features;
    s.out_channels = out_features;
    return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::conv_transpose2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
    LayerSpec s = conv2d(in, out, kernel, stride, padding);
    s.kind = LayerKind::conv_transpose2d;
    return s;
}

LayerSpec LayerSpec::batchnorm2d(std::size_t channels, double epsilon, double momentum) {
    LayerSpec s;
    s.kind = LayerKind::batchnorm2d;
    s.in_channels = s.out_channels = channels;
    s.bn_epsilon = epsilon;
    s.bn_momentum = momentum;
    return s;
}

LayerSpec LayerSpec::dropout2d(double p) {
    LayerSpec s;
    s.kind = LayerKind::dropout2d;
    s.drop_probability = p;
    return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::leaky_relu(double negative_slope) {
    LayerSpec s;
    s.kind = LayerKind::leaky_relu;
    s.negative_slope = negative_slope;
    return s;
}

LayerSpec LayerSpec::tanh() {
    LayerSpec s;
    s.kind = LayerKind::tanh;
    return s;
}

LayerSpec LayerSpec::sigmoid() {
    LayerSpec s;
    s.kind = LayerKind::sigmoid;
    return s;
}

LayerSpec LayerSpec::reshape(Shape per_sample) {
    LayerSpec s;
    s.kind = LayerKind::reshape;
    s.target_shape = std::move(per_sample);
    return s;
}

void LayerSpec::validate() const {
    auto fail = [this](const std::string& what) {
        throw std::invalid_argument(std::string(layer_type_name(kind)) + ": " + what);
    };
    switch (kind) {
        case LayerKind::linear:
            if (in_channels == 0 || out_channels == 0) fail("features must be positive");
            break;
        case LayerKind::conv2d:
        case LayerKind::conv_transpose2d:
            if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
                fail("channels, kernel and stride must be positive");
            }
            break;
        case LayerKind::batchnorm2d:
            if (in_channels == 0) fail("channels must be positive");
            if (!(bn_epsilon > 0.0)) fail("epsilon must be positive");
            if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) fail("momentum must lie in [0, 1]");
            break;
        case LayerKind::dropout2d:
            if (!(drop_probability >= 0.0 && drop_probability < 1.0)) fail("drop probability must lie in [0, 1)");
            break;
        case LayerKind::leaky_relu:
            if (!(negative_slope >= 0.0)) fail("negative slope must be non-negative");
            break;
        case LayerKind::reshape:
            if (target_shape.empty()) fail("target shape is empty");
            for (auto extent : target_shape)
                if (extent == 0) fail("target extents must be positive");
            break;
        case LayerKind::relu:
        case LayerKind::tanh:
        case LayerKind::sigmoid: break;
    }
}

std::size_t param_count(const LayerSpec& spec) {
    switch (spec.kind) {
        case LayerKind::linear: return spec.in_channels * spec.out_channels + spec.out_channels;
        case LayerKind::conv2d:
        case LayerKind::conv_transpose2d:
            return spec.in_channels * spec.out_channels * spec.kernel * spec.kernel + spec.out_channels;
        case LayerKind::batchnorm2d: return 2 * spec.in_channels;
        default: return 0;
    }
}

Shape output_shape(const LayerSpec& spec, const Shape& input) {
    auto fail = [&](const std::string& why) -> Shape {
        throw ShapeError(std::string(layer_type_name(spec.kind)) + ": input " + to_string(input) + " " + why);
    };
    switch (spec.kind) {
        case LayerKind::linear:
            if (input.size() != 2 || input[1] != spec.in_channels) return fail("is not [batch, " + std::to_string(spec.in_channels) + "]");
            return {input[0], spec.out_channels};
        case LayerKind::conv2d:
        case LayerKind::conv_transpose2d: {
            if (input.size() != 4 || input[1] != spec.in_channels) {
                return fail("is not [batch, " + std::to_string(spec.in_channels) + ", h, w]");
            }
            const ConvGeometry g{spec.stride, spec.padding};
            const bool transpose = spec.kind == LayerKind::conv_transpose2d;
            const std::size_t h = transpose ? conv_transpose2d_extent(input[2], spec.kernel, g)
                                            : conv2d_extent(input[2], spec.kernel, g);
            const std::size_t w = transpose ? conv_transpose2d_extent(input[3], spec.kernel, g)
                                            : conv2d_extent(input[3], spec.kernel, g);
            if (h == 0 || w == 0) return fail("gives an output extent below 1");
            return {input[0], spec.out_channels, h, w};
        }
        case LayerKind::batchnorm2d:
            if (input.size() != 4 || input[1] != spec.in_channels) return fail("channel count mismatch");
            return input;
        case LayerKind::reshape: {
            if (input.empty()) return fail("has no batch axis");
            Shape out{input[0]};
            out.insert(out.end(), spec.target_shape.begin(), spec.target_shape.end());
            if (numel(out) != numel(input)) return fail("cannot be reshaped to " + to_string(out));
            return out;
        }
        default: return input;
    }
}

template <class T>
Layer<T>::Layer(LayerSpec spec, Rng& rng) : spec_(std::move(spec)) {
    spec_.validate();
    auto normal_tensor = [&rng](Shape shape) {
        Tensor<T> t(std::move(shape));
        for (auto& v : t.data()) v = static_cast<T>(rng.normal(0.0, kInitStddev));
        t.set_requires_grad(true);
        return t;
    };
    auto constant_tensor = [](std::size_t n, T value) {
        Tensor<T> t(Shape{n}, value);
        t.set_requires_grad(true);
        return t;
    };
    switch (spec_.kind) {
        case LayerKind::linear:
            parameters_.emplace_back("weight", normal_tensor({spec_.out_channels, spec_.in_channels}));
            parameters_.emplace_back("bias", constant_tensor(spec_.out_channels, T(0)));
            break;
        case LayerKind::conv2d:
            parameters_.emplace_back("weight",
                                     normal_tensor({spec_.out_channels, spec_.in_channels, spec_.kernel, spec_.kernel}));
            parameters_.emplace_back("bias", constant_tensor(spec_.out_channels, T(0)));
            break;
        case LayerKind::conv_transpose2d:
            parameters_.emplace_back("weight",
                                     normal_tensor({spec_.in_channels, spec_.out_channels, spec_.kernel, spec_.kernel}));
            parameters_.emplace_back("bias", constant_tensor(spec_.out_channels, T(0)));
            break;
        case LayerKind::batchnorm2d:
            parameters_.emplace_back("gamma", constant_tensor(spec_.in_channels, T(1)));
            parameters_.emplace_back("beta", constant_tensor(spec_.in_channels, T(0)));
            bn_.running_mean = Tensor<T>(Shape{spec_.in_channels}, T(0));
            bn_.running_var = Tensor<T>(Shape{spec_.in_channels}, T(1));
            break;
        default: break;
    }
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> Layer<T>::buffers() const {
    if (spec_.kind != LayerKind::batchnorm2d) return {};
    return {{"running_mean", bn_.running_mean}, {"running_var", bn_.running_var}};
}

template <class T>
Tensor<T> Layer<T>::forward(const Tensor<T>& x, Rng* rng) {
    const bool training = mode_ == Mode::train;
    switch (spec_.kind) {
        case LayerKind::linear: return linear(x, param(0), param(1));
        case LayerKind::conv2d: return conv2d(x, param(0), param(1), ConvGeometry{spec_.stride, spec_.padding});
        case LayerKind::conv_transpose2d:
            return conv_transpose2d(x, param(0), param(1), ConvGeometry{spec_.stride, spec_.padding});
        case LayerKind::batchnorm2d:
            return batch_norm2d(x, param(0), param(1), bn_,
                                BatchNormOptions{training, spec_.bn_momentum, spec_.bn_epsilon});
        case LayerKind::dropout2d: {
            if (!training || spec_.drop_probability == 0.0) return x;
            if (!rng) throw std::logic_error("Dropout2d: train-mode forward needs a random generator");
            return dropout2d(x, spec_.drop_probability, true, *rng);
        }
        case LayerKind::relu: return relu(x);
        case LayerKind::leaky_relu: return leaky_relu(x, static_cast<T>(spec_.negative_slope));
        case LayerKind::tanh: return mdcgan::tanh(x);
        case LayerKind::sigmoid: return sigmoid(x);
        case LayerKind::reshape: return reshape(x, output_shape(spec_, x.shape()));
    }
    return x;
}

template class Layer<float>;
template class Layer<double>;

}  // namespace mdcgan
