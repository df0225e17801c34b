#include "mdcgan/model.hpp"

#include <bit>
#include <map>
#include <stdexcept>

namespace mdcgan {

const char* network_name(Network network) {
    return network == Network::generator ? "generator" : "discriminator";
}

namespace {

/// Assigns "<Type>-<n>" names, counting only tabulated layers.
class RowNamer {
public:
    void add(std::vector<ModelLayer>& layers, LayerSpec spec) {
        ++counter_;
        std::string name = std::string(layer_type_name(spec.kind)) + "-" + std::to_string(counter_);
        layers.push_back(ModelLayer{std::move(spec), name, name});
    }

    static void add_untabulated(std::vector<ModelLayer>& layers, LayerSpec spec, std::string label) {
        layers.push_back(ModelLayer{std::move(spec), "", std::move(label)});
    }

private:
    std::size_t counter_ = 0;
};

const std::vector<std::size_t> kGeneratorLadder{1024, 512, 256, 128, 64, 32, 3};
const std::vector<std::size_t> kDiscriminatorLadder{3, 8, 16, 32, 64, 128, 256};
constexpr std::size_t kBaseExtent = 4;

}  // namespace

void require_scale_factor(std::size_t scale_factor) {
    if (scale_factor != 1 && scale_factor != 2 && scale_factor != 4 && scale_factor != 8) {
        throw std::invalid_argument("scale factor must be one of 1, 2, 4, 8; got " + std::to_string(scale_factor));
    }
}

std::size_t image_extent_for_scale(std::size_t scale_factor) {
    require_scale_factor(scale_factor);
    return kFullImageExtent / scale_factor;
}

std::size_t ModelSpec::latent_dim() const {
    if (network != Network::generator) throw std::logic_error("latent_dim: not a generator spec");
    return input_shape.at(0);
}

std::size_t ModelSpec::image_extent() const {
    return network == Network::generator ? output_shape.at(1) : input_shape.at(1);
}

void ModelSpec::validate() const {
    Shape shape{1};
    shape.insert(shape.end(), input_shape.begin(), input_shape.end());
    for (const auto& layer : layers) {
        layer.spec.validate();
        shape = mdcgan::output_shape(layer.spec, shape);
    }
    Shape expected{1};
    expected.insert(expected.end(), output_shape.begin(), output_shape.end());
    if (shape != expected) {
        throw ShapeError(std::string(network_name(network)) + " spec produces " + to_string(shape) +
                         " but declares " + to_string(expected));
    }
}

ModelSpec generator_spec_from_ladder(std::size_t latent_dim, const std::vector<std::size_t>& channels) {
    if (channels.size() < 2) throw std::invalid_argument("generator ladder needs at least two channel counts");
    ModelSpec spec;
    spec.network = Network::generator;
    spec.input_shape = {latent_dim};
    RowNamer namer;
    namer.add(spec.layers, LayerSpec::linear(latent_dim, channels.front() * kBaseExtent * kBaseExtent));
    RowNamer::add_untabulated(spec.layers, LayerSpec::reshape({channels.front(), kBaseExtent, kBaseExtent}),
                              "Reshape");
    std::size_t extent = kBaseExtent;
    for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
        namer.add(spec.layers, LayerSpec::conv_transpose2d(channels[i], channels[i + 1], 4, 2, 1));
        extent *= 2;
        if (i + 2 < channels.size()) {
            namer.add(spec.layers, LayerSpec::batchnorm2d(channels[i + 1]));
            namer.add(spec.layers, LayerSpec::relu());
        }
    }
    RowNamer::add_untabulated(spec.layers, LayerSpec::tanh(), "Tanh");
    spec.output_shape = {channels.back(), extent, extent};
    spec.scale_factor = kFullImageExtent / extent;
    spec.validate();
    return spec;
}

ModelSpec discriminator_spec_from_ladder(std::size_t image_extent, const std::vector<std::size_t>& channels,
                                         double dropout) {
    if (channels.size() < 2) throw std::invalid_argument("discriminator ladder needs at least two channel counts");
    ModelSpec spec;
    spec.network = Network::discriminator;
    spec.input_shape = {channels.front(), image_extent, image_extent};
    RowNamer namer;
    std::size_t extent = image_extent;
    for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
        namer.add(spec.layers, LayerSpec::conv2d(channels[i], channels[i + 1], 3, 2, 1));
        // The first block normalizes before dropping; later blocks drop first.
        if (i == 0) {
            namer.add(spec.layers, LayerSpec::batchnorm2d(channels[i + 1]));
            namer.add(spec.layers, LayerSpec::dropout2d(dropout));
        } else {
            namer.add(spec.layers, LayerSpec::dropout2d(dropout));
            namer.add(spec.layers, LayerSpec::batchnorm2d(channels[i + 1]));
        }
        namer.add(spec.layers, LayerSpec::leaky_relu(kDiscriminatorSlope));
        extent = conv2d_extent(extent, 3, ConvGeometry{2, 1});
    }
    RowNamer::add_untabulated(spec.layers, LayerSpec::conv2d(channels.back(), 1, extent, 1, 0), "Conv2d (final)");
    RowNamer::add_untabulated(spec.layers, LayerSpec::reshape({1}), "Reshape");
    RowNamer::add_untabulated(spec.layers, LayerSpec::sigmoid(), "Sigmoid");
    spec.output_shape = {1};
    spec.scale_factor = kFullImageExtent / image_extent;
    spec.validate();
    return spec;
}

ModelSpec generator_spec(std::size_t scale_factor, std::size_t latent_dim) {
    require_scale_factor(scale_factor);
    const auto dropped = static_cast<std::size_t>(std::countr_zero(scale_factor));
    std::vector<std::size_t> ladder(kGeneratorLadder.begin() + static_cast<std::ptrdiff_t>(dropped),
                                    kGeneratorLadder.end());
    return generator_spec_from_ladder(latent_dim, ladder);
}

ModelSpec discriminator_spec(std::size_t scale_factor, double dropout) {
    require_scale_factor(scale_factor);
    const auto dropped = static_cast<std::size_t>(std::countr_zero(scale_factor));
    std::vector<std::size_t> ladder(kDiscriminatorLadder.begin(),
                                    kDiscriminatorLadder.end() - static_cast<std::ptrdiff_t>(dropped));
    return discriminator_spec_from_ladder(kFullImageExtent / scale_factor, ladder, dropout);
}

template <class T>
Model<T>::Model(ModelSpec spec, Rng& rng) : spec_(std::move(spec)) {
    spec_.validate();
    layers_.reserve(spec_.layers.size());
    for (const auto& layer : spec_.layers) layers_.push_back(init_parameters<T>(layer.spec, rng));
}

template <class T>
Model<T>::Model(ModelSpec spec, std::uint64_t seed) {
    Rng rng(seed);
    *this = Model(std::move(spec), rng);
}

template <class T>
Tensor<T> Model<T>::forward(const Tensor<T>& x, Rng* rng, std::size_t end) {
    Tensor<T> h = x;
    for (std::size_t i = 0; i < end && i < layers_.size(); ++i) h = layers_[i].forward(h, rng);
    return h;
}

template <class T>
void Model<T>::set_mode(Mode mode) {
    mode_ = mode;
    for (auto& layer : layers_) layer.set_mode(mode);
}

template <class T>
std::vector<typename Model<T>::NamedTensor> Model<T>::named_parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (const auto& [name, tensor] : layers_[i].parameters())
            out.emplace_back("layers." + std::to_string(i) + "." + name, tensor);
    return out;
}

template <class T>
std::vector<typename Model<T>::NamedTensor> Model<T>::named_buffers() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (const auto& [name, tensor] : layers_[i].buffers())
            out.emplace_back("layers." + std::to_string(i) + "." + name, tensor);
    return out;
}

template <class T>
std::vector<Tensor<T>> Model<T>::parameters() const {
    std::vector<Tensor<T>> out;
    for (const auto& layer : layers_)
        for (const auto& entry : layer.parameters()) out.push_back(entry.second);
    return out;
}

template <class T>
std::size_t Model<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

template <class T>
void Model<T>::zero_grad() {
    for (auto& p : parameters()) p.zero_grad();
}

template <class T>
Tensor<T> generator_forward(Model<T>& generator, const Tensor<T>& z, Rng* rng) {
    const auto& spec = generator.spec();
    if (spec.network != Network::generator) throw std::invalid_argument("generator_forward: model is a discriminator");
    if (z.rank() != 2 || z.dim(1) != spec.latent_dim()) {
        throw ShapeError("generator_forward: latent batch must be [batch, " + std::to_string(spec.latent_dim()) +
                         "], got " + to_string(z.shape()));
    }
    return generator.forward(z, rng);
}

namespace {

template <class T>
void check_images(const Model<T>& discriminator, const Tensor<T>& images) {
    const auto& spec = discriminator.spec();
    if (spec.network != Network::discriminator) throw std::invalid_argument("discriminator: model is a generator");
    Shape expected{images.rank() > 0 ? images.dim(0) : 0};
    expected.insert(expected.end(), spec.input_shape.begin(), spec.input_shape.end());
    if (images.rank() != 4 || images.shape() != expected) {
        throw ShapeError("discriminator: images must be [batch, " + std::to_string(spec.input_shape[0]) + ", " +
                         std::to_string(spec.input_shape[1]) + ", " + std::to_string(spec.input_shape[2]) +
                         "], got " + to_string(images.shape()));
    }
}

}  // namespace

template <class T>
Tensor<T> discriminator_logits(Model<T>& discriminator, const Tensor<T>& images, Rng* rng) {
    check_images(discriminator, images);
    auto out = discriminator.forward(images, rng, discriminator.layers().size() - 1);
    return reshape(out, Shape{images.dim(0)});
}

template <class T>
Tensor<T> discriminator_forward(Model<T>& discriminator, const Tensor<T>& images, Rng* rng) {
    check_images(discriminator, images);
    auto out = discriminator.forward(images, rng);
    return reshape(out, Shape{images.dim(0)});
}

template class Model<float>;
template class Model<double>;
template Tensor<float> generator_forward(Model<float>&, const Tensor<float>&, Rng*);
template Tensor<double> generator_forward(Model<double>&, const Tensor<double>&, Rng*);
template Tensor<float> discriminator_logits(Model<float>&, const Tensor<float>&, Rng*);
template Tensor<double> discriminator_logits(Model<double>&, const Tensor<double>&, Rng*);
template Tensor<float> discriminator_forward(Model<float>&, const Tensor<float>&, Rng*);
template Tensor<double> discriminator_forward(Model<double>&, const Tensor<double>&, Rng*);

}  // namespace mdcgan
