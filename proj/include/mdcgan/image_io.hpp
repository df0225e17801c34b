#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdcgan {

/// Planar RGB image, [3, height, width], values in display range [0, 255].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    static constexpr std::size_t channels = 3;

    Image() = default;
    Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), values(3 * h * w, fill) {}

    std::size_t plane() const { return height * width; }
    float& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }

    bool operator==(const Image&) const = default;
};

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Decodes a PNG or JPEG (detected from the leading bytes). Gray and
/// palette images are expanded to RGB, alpha is dropped, 16-bit samples
/// are reduced to 8.
Image read_image(const std::filesystem::path& path);

/// 8-bit RGB PNG. Values are rounded half up and clamped to [0, 255].
void write_png(const std::filesystem::path& path, const Image& image);

/// Regular files with a .png/.jpg/.jpeg extension (any case) directly in
/// `dir`, sorted lexicographically by path.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Display value -> byte: round half up, clamp to [0, 255].
unsigned char to_byte(float value);

}  // namespace mdcgan
