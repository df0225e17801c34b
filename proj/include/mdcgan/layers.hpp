#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mdcgan/ops.hpp"
#include "mdcgan/random.hpp"
#include "mdcgan/tensor.hpp"

namespace mdcgan {

enum class LayerKind {
    linear,
    conv2d,
    conv_transpose2d,
    batchnorm2d,
    dropout2d,
    relu,
    leaky_relu,
    tanh,
    sigmoid,
    reshape,
};

/// Module-style type name, e.g. "ConvTranspose2d".
const char* layer_type_name(LayerKind kind);

enum class Mode { train, eval };

struct LayerSpec {
    LayerKind kind = LayerKind::relu;

    // linear: in_channels = in_features, out_channels = out_features.
    // conv2d: kernel [out, in, k, k]; conv_transpose2d: kernel [in, out, k, k].
    // batchnorm2d: in_channels == out_channels == channels.
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    Shape target_shape;  // reshape, per sample

    double negative_slope = 0.2;
    double drop_probability = 0.3;
    double bn_epsilon = 1e-5;
    double bn_momentum = 0.1;

    static LayerSpec linear(std::size_t in_features, std::size_t out_features);
    static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding);
    static LayerSpec conv_transpose2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                                      std::size_t padding);
    static LayerSpec batchnorm2d(std::size_t channels, double epsilon = 1e-5, double momentum = 0.1);
    static LayerSpec dropout2d(double p);
    static LayerSpec relu();
    static LayerSpec leaky_relu(double negative_slope);
    static LayerSpec tanh();
    static LayerSpec sigmoid();
    static LayerSpec reshape(Shape per_sample);

    /// Throws std::invalid_argument on non-positive geometry or out-of-range hyperparameters.
    void validate() const;
};

/// Learnable parameter count: c_in*c_out*k^2 + c_out for convolutions,
/// in*out + out for linear, 2*channels for batch norm, 0 otherwise.
std::size_t param_count(const LayerSpec& spec);

/// Output shape for a batched input shape; throws ShapeError when the input
/// does not fit the layer.
Shape output_shape(const LayerSpec& spec, const Shape& input);

/// LayerState: parameters, batch-norm running statistics, and mode.
template <class T>
class Layer {
public:
    Layer() = default;
    Layer(LayerSpec spec, Rng& rng);

    const LayerSpec& spec() const { return spec_; }
    Mode mode() const { return mode_; }
    void set_mode(Mode mode) { mode_ = mode; }

    /// Named learnable tensors in a fixed order (weight, bias) or (gamma, beta).
    std::vector<std::pair<std::string, Tensor<T>>>& parameters() { return parameters_; }
    const std::vector<std::pair<std::string, Tensor<T>>>& parameters() const { return parameters_; }
    /// Batch-norm running_mean / running_var; empty for other kinds.
    std::vector<std::pair<std::string, Tensor<T>>> buffers() const;

    /// `rng` drives dropout masks in train mode and may be null otherwise.
    Tensor<T> forward(const Tensor<T>& x, Rng* rng);

private:
    const Tensor<T>& param(std::size_t i) const { return parameters_[i].second; }

    LayerSpec spec_;
    Mode mode_ = Mode::train;
    std::vector<std::pair<std::string, Tensor<T>>> parameters_;
    BatchNormBuffers<T> bn_;
};

/// Weights ~ Normal(0, 0.02), biases 0, gamma 1, beta 0, running mean 0,
/// running variance 1.
template <class T>
Layer<T> init_parameters(const LayerSpec& spec, Rng& rng) {
    return Layer<T>(spec, rng);
}

inline constexpr double kInitStddev = 0.02;

extern template class Layer<float>;
extern template class Layer<double>;

}  // namespace mdcgan
