#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mdcgan/image_io.hpp"
#include "mdcgan/training.hpp"

namespace mdcgan {

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);

/// Normalized 1-D Gaussian taps, radius max(1, ceil(3 sigma)).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur, mirrored borders (edge pixel not repeated).
Image gaussian_filter(const Image& image, double sigma);

/// Sliding-window median per channel with mirrored borders. The window
/// must be odd.
Image median_filter(const Image& image, std::size_t window);

struct ChannelStats {
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};  // population

    void save(const std::filesystem::path& path) const;
    static ChannelStats load(const std::filesystem::path& path);
};

inline constexpr double kStddevFloor = 1e-6;

/// Per-channel mean and population standard deviation over every pixel
/// of every image.
ChannelStats channel_stats(std::span<const Image> images);

/// (I - mean) / max(stddev, 1e-6), per channel.
Image normalize_zscore(const Image& image, const ChannelStats& stats);
Image denormalize_zscore(const Image& image, const ChannelStats& stats);

/// [0, 255] -> [-1, 1].
float to_model_range(float pixel);
Image to_model_range(const Image& image);
/// [-1, 1] -> integral pixel values in [0, 255], rounded half up.
float from_model_range(float value);
Image from_model_range(const Image& image);

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

struct SyntheticSpec {
    std::vector<Rgb> palette{{220, 40, 40}, {30, 30, 30}, {240, 200, 40}, {40, 90, 200}};
    Rgb background{245, 240, 230};
    std::size_t min_strokes = 3;
    std::size_t max_strokes = 8;
    std::size_t extent = 32;
    std::size_t count = 2000;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Random axis-aligned rectangles and thick line strokes in palette
/// colors on a flat background. Identical output for identical specs.
std::vector<Image> make_synthetic_dataset(const SyntheticSpec& spec);

/// Image files of `dir` (see list_images) in an order shuffled by
/// `shuffle_seed`, truncated to `sample_count` (0 = all). Throws
/// ImageIoError if there are none.
std::vector<std::filesystem::path> sample_image_paths(const std::filesystem::path& dir, std::size_t sample_count,
                                                      std::uint64_t shuffle_seed);

/// Lists a directory, seeds a shuffle of the sorted file list, and loads
/// the first `sample_count` images (0 = all).
std::vector<Image> load_image_directory(const std::filesystem::path& dir, std::size_t sample_count,
                                        std::uint64_t shuffle_seed);

enum class Normalization { affine, zscore };

struct PipelineOptions {
    std::size_t extent = kFullImageExtent;
    bool gaussian = true;
    double gaussian_sigma = 0.001;
    bool median = true;
    std::size_t median_window = 3;
    Normalization normalization = Normalization::affine;

    void validate() const;
};

/// Resize, then Gaussian, then median. Values stay in [0, 255].
Image preprocess_image(const Image& image, const PipelineOptions& options);

struct PreparedDataset {
    Dataset data;        // model-space values
    ChannelStats stats;  // of the filtered images, before normalization
};

PreparedDataset prepare_dataset(std::span<const Image> images, const PipelineOptions& options);

/// Row i of a [n, 3, H, W] tensor as an image (values copied verbatim).
Image image_from_tensor(const TensorF& batch, std::size_t index);

}  // namespace mdcgan
