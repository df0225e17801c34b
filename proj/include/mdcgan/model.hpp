#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mdcgan/layers.hpp"

namespace mdcgan {

enum class Network { generator, discriminator };

const char* network_name(Network network);

inline constexpr std::size_t kLatentDim = 100;
inline constexpr std::size_t kFullImageExtent = 256;
inline constexpr double kDiscriminatorSlope = 0.2;
inline constexpr double kDefaultDropout = 0.3;

/// One entry of a ModelSpec. `row_name` follows the summary-table
/// numbering ("ConvTranspose2d-2"); empty for layers the tables omit
/// (the generator's reshape/tanh, the discriminator's final conv,
/// reshape and sigmoid).
struct ModelLayer {
    LayerSpec spec;
    std::string row_name;
    std::string label;  // display name; equals row_name when tabulated

    bool tabulated() const { return !row_name.empty(); }
};

struct ModelSpec {
    Network network = Network::generator;
    std::size_t scale_factor = 1;
    Shape input_shape;   // per sample
    Shape output_shape;  // per sample
    std::vector<ModelLayer> layers;

    std::size_t latent_dim() const;    // generator only
    std::size_t image_extent() const;  // generator output / discriminator input H (== W)

    /// Runs shape inference through every layer; throws on inconsistency.
    void validate() const;
};

/// Scale factor must be one of {1, 2, 4, 8}. Scale f removes log2(f)
/// blocks from the wide end of the channel ladder; every mechanism stays.
void require_scale_factor(std::size_t scale_factor);
std::size_t image_extent_for_scale(std::size_t scale_factor);

/// Linear latent -> channels[0]*4*4, reshape, then one k=4 s=2 p=1
/// transpose-conv block per ladder step; BN+ReLU on all but the last,
/// which is followed by tanh.
ModelSpec generator_spec_from_ladder(std::size_t latent_dim, const std::vector<std::size_t>& channels);

/// One k=3 s=2 p=1 conv block per ladder step (conv, dropout, BN, leaky
/// ReLU 0.2; the first block has BN before dropout), then a final conv
/// whose kernel equals the remaining extent, reshape and sigmoid.
ModelSpec discriminator_spec_from_ladder(std::size_t image_extent, const std::vector<std::size_t>& channels,
                                         double dropout = kDefaultDropout);

ModelSpec generator_spec(std::size_t scale_factor, std::size_t latent_dim = kLatentDim);
ModelSpec discriminator_spec(std::size_t scale_factor, double dropout = kDefaultDropout);

template <class T>
class Model {
public:
    using NamedTensor = std::pair<std::string, Tensor<T>>;

    Model() = default;
    Model(ModelSpec spec, Rng& rng);
    Model(ModelSpec spec, std::uint64_t seed);

    const ModelSpec& spec() const { return spec_; }
    std::vector<Layer<T>>& layers() { return layers_; }
    const std::vector<Layer<T>>& layers() const { return layers_; }

    /// Runs layers [0, end). `rng` feeds dropout in train mode.
    Tensor<T> forward(const Tensor<T>& x, Rng* rng, std::size_t end) ;
    Tensor<T> forward(const Tensor<T>& x, Rng* rng = nullptr) { return forward(x, rng, layers_.size()); }

    void set_mode(Mode mode);
    void train() { set_mode(Mode::train); }
    void eval() { set_mode(Mode::eval); }
    Mode mode() const { return mode_; }

    /// "layers.<i>.<name>" in layer order.
    std::vector<NamedTensor> named_parameters() const;
    std::vector<NamedTensor> named_buffers() const;
    std::vector<Tensor<T>> parameters() const;
    std::size_t parameter_count() const;
    void zero_grad();

private:
    ModelSpec spec_;
    std::vector<Layer<T>> layers_;
    Mode mode_ = Mode::train;
};

template <class T>
Model<T> build_generator(std::size_t scale_factor, std::uint64_t seed) {
    return Model<T>(generator_spec(scale_factor), seed);
}

template <class T>
Model<T> build_discriminator(std::size_t scale_factor, std::uint64_t seed, double dropout = kDefaultDropout) {
    return Model<T>(discriminator_spec(scale_factor, dropout), seed);
}

/// z [batch, latent_dim] -> images [batch, 3, H, W] in (-1, 1).
template <class T>
Tensor<T> generator_forward(Model<T>& generator, const Tensor<T>& z, Rng* rng = nullptr);

/// images [batch, 3, H, W] -> logits [batch] (everything but the sigmoid).
template <class T>
Tensor<T> discriminator_logits(Model<T>& discriminator, const Tensor<T>& images, Rng* rng = nullptr);

/// images [batch, 3, H, W] -> probabilities [batch] in (0, 1).
template <class T>
Tensor<T> discriminator_forward(Model<T>& discriminator, const Tensor<T>& images, Rng* rng = nullptr);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace mdcgan
