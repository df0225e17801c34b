#include "mdcgan/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace mdcgan {

namespace {

// Mirror index into [0, n) without repeating the edge sample.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    i %= period;
    if (i < 0) i += period;
    if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
    return static_cast<std::size_t>(i);
}

void require_image(const Image& image, const char* op) {
    if (image.height == 0 || image.width == 0 || image.values.size() != 3 * image.plane())
        throw std::invalid_argument(std::string(op) + ": empty or malformed image");
}

}  // namespace

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
    require_image(image, "resize_bilinear");
    if (height == 0 || width == 0) throw std::invalid_argument("resize_bilinear: target size must be positive");
    if (height == image.height && width == image.width) return image;

    struct Tap {
        std::size_t i0, i1;
        double f;
    };
    auto taps = [](std::size_t src, std::size_t dst) {
        std::vector<Tap> out(dst);
        const double ratio = static_cast<double>(src) / static_cast<double>(dst);
        for (std::size_t d = 0; d < dst; ++d) {
            double s = (static_cast<double>(d) + 0.5) * ratio - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(src - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(s));
            const auto i1 = std::min(i0 + 1, src - 1);
            out[d] = {i0, i1, s - static_cast<double>(i0)};
        }
        return out;
    };
    const auto ty = taps(image.height, height);
    const auto tx = taps(image.width, width);

    Image out(height, width);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            const auto& a = ty[y];
            for (std::size_t x = 0; x < width; ++x) {
                const auto& b = tx[x];
                const double top = image.at(c, a.i0, b.i0) * (1 - b.f) + image.at(c, a.i0, b.i1) * b.f;
                const double bottom = image.at(c, a.i1, b.i0) * (1 - b.f) + image.at(c, a.i1, b.i1) * b.f;
                out.at(c, y, x) = static_cast<float>(top * (1 - a.f) + bottom * a.f);
            }
        }
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0) || !std::isfinite(sigma)) throw std::invalid_argument("gaussian sigma must be positive");
    const auto radius = std::max<std::ptrdiff_t>(1, static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        total += w;
    }
    for (auto& w : k) w /= total;
    return k;
}

Image gaussian_filter(const Image& image, double sigma) {
    require_image(image, "gaussian_filter");
    const auto k = gaussian_kernel(sigma);
    const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
    const std::size_t h = image.height, w = image.width;
    Image tmp(h, w), out(h, w);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0;
                for (std::ptrdiff_t i = -r; i <= r; ++i)
                    s += k[static_cast<std::size_t>(i + r)] *
                         image.at(c, y, reflect(static_cast<std::ptrdiff_t>(x) + i, w));
                tmp.at(c, y, x) = static_cast<float>(s);
            }
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0;
                for (std::ptrdiff_t i = -r; i <= r; ++i)
                    s += k[static_cast<std::size_t>(i + r)] *
                         tmp.at(c, reflect(static_cast<std::ptrdiff_t>(y) + i, h), x);
                out.at(c, y, x) = static_cast<float>(s);
            }
    }
    return out;
}

Image median_filter(const Image& image, std::size_t window) {
    require_image(image, "median_filter");
    if (window == 0 || window % 2 == 0)
        throw std::invalid_argument("median window must be odd and positive, got " + std::to_string(window));
    if (window == 1) return image;
    const auto r = static_cast<std::ptrdiff_t>(window / 2);
    const std::size_t h = image.height, w = image.width;
    Image out(h, w);
    std::vector<float> buf(window * window);
    const auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                std::size_t n = 0;
                for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                    const auto yy = reflect(static_cast<std::ptrdiff_t>(y) + dy, h);
                    for (std::ptrdiff_t dx = -r; dx <= r; ++dx)
                        buf[n++] = image.at(c, yy, reflect(static_cast<std::ptrdiff_t>(x) + dx, w));
                }
                std::nth_element(buf.begin(), mid, buf.end());
                out.at(c, y, x) = *mid;
            }
    return out;
}

ChannelStats channel_stats(std::span<const Image> images) {
    if (images.empty()) throw std::invalid_argument("channel_stats: empty image set");
    ChannelStats s;
    std::array<double, 3> count{};
    for (const auto& img : images) {
        require_image(img, "channel_stats");
        for (std::size_t c = 0; c < 3; ++c) {
            const auto* p = img.values.data() + c * img.plane();
            for (std::size_t i = 0; i < img.plane(); ++i) s.mean[c] += p[i];
            count[c] += static_cast<double>(img.plane());
        }
    }
    for (std::size_t c = 0; c < 3; ++c) s.mean[c] /= count[c];
    for (const auto& img : images)
        for (std::size_t c = 0; c < 3; ++c) {
            const auto* p = img.values.data() + c * img.plane();
            for (std::size_t i = 0; i < img.plane(); ++i) {
                const double d = p[i] - s.mean[c];
                s.stddev[c] += d * d;
            }
        }
    for (std::size_t c = 0; c < 3; ++c) s.stddev[c] = std::sqrt(s.stddev[c] / count[c]);
    return s;
}

void ChannelStats::save(const std::filesystem::path& path) const {
    nlohmann::json j;
    j["mean"] = mean;
    j["std"] = stddev;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write channel stats to " + path.string());
    out << j.dump(2) << '\n';
}

ChannelStats ChannelStats::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read channel stats from " + path.string());
    ChannelStats s;
    try {
        const auto j = nlohmann::json::parse(in);
        s.mean = j.at("mean").get<std::array<double, 3>>();
        s.stddev = j.at("std").get<std::array<double, 3>>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed channel stats " + path.string() + ": " + e.what());
    }
    for (double sd : s.stddev)
        if (!(sd >= 0)) throw std::runtime_error("channel stats " + path.string() + " hold a negative stddev");
    return s;
}

Image normalize_zscore(const Image& image, const ChannelStats& stats) {
    Image out = image;
    for (std::size_t c = 0; c < 3; ++c) {
        const double sd = std::max(stats.stddev[c], kStddevFloor);
        auto* p = out.values.data() + c * out.plane();
        for (std::size_t i = 0; i < out.plane(); ++i) p[i] = static_cast<float>((p[i] - stats.mean[c]) / sd);
    }
    return out;
}

Image denormalize_zscore(const Image& image, const ChannelStats& stats) {
    Image out = image;
    for (std::size_t c = 0; c < 3; ++c) {
        const double sd = std::max(stats.stddev[c], kStddevFloor);
        auto* p = out.values.data() + c * out.plane();
        for (std::size_t i = 0; i < out.plane(); ++i) p[i] = static_cast<float>(p[i] * sd + stats.mean[c]);
    }
    return out;
}

float to_model_range(float pixel) { return pixel / 127.5f - 1.0f; }

Image to_model_range(const Image& image) {
    Image out = image;
    for (auto& v : out.values) v = to_model_range(v);
    return out;
}

float from_model_range(float value) {
    const double pixel = (static_cast<double>(value) + 1.0) * 127.5;
    return static_cast<float>(std::clamp(std::floor(pixel + 0.5), 0.0, 255.0));
}

Image from_model_range(const Image& image) {
    Image out = image;
    for (auto& v : out.values) v = from_model_range(v);
    return out;
}

void SyntheticSpec::validate() const {
    if (palette.empty()) throw std::invalid_argument("synthetic palette must not be empty");
    if (extent < 4) throw std::invalid_argument("synthetic extent must be at least 4");
    if (min_strokes < 1 || max_strokes < min_strokes)
        throw std::invalid_argument("synthetic stroke range must satisfy 1 <= min <= max");
    if (count < 1) throw std::invalid_argument("synthetic count must be at least 1");
}

std::vector<Image> make_synthetic_dataset(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t n = spec.extent;
    std::vector<Image> out;
    out.reserve(spec.count);

    for (std::size_t k = 0; k < spec.count; ++k) {
        Image img(n, n);
        auto paint = [&](std::size_t y, std::size_t x, const Rgb& col) {
            img.at(0, y, x) = col.r;
            img.at(1, y, x) = col.g;
            img.at(2, y, x) = col.b;
        };
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) paint(y, x, spec.background);

        const std::size_t strokes = spec.min_strokes + rng.below(spec.max_strokes - spec.min_strokes + 1);
        for (std::size_t s = 0; s < strokes; ++s) {
            const Rgb& col = spec.palette[rng.below(spec.palette.size())];
            if (rng.below(2) == 0) {
                // rectangle
                const std::size_t y0 = rng.below(n), x0 = rng.below(n);
                const std::size_t hh = 1 + rng.below(n / 2), ww = 1 + rng.below(n / 2);
                for (std::size_t y = y0; y < std::min(n, y0 + hh); ++y)
                    for (std::size_t x = x0; x < std::min(n, x0 + ww); ++x) paint(y, x, col);
            } else {
                // thick line, stamped with a square brush
                const double ya = rng.uniform(0, static_cast<double>(n)), xa = rng.uniform(0, static_cast<double>(n));
                const double yb = rng.uniform(0, static_cast<double>(n)), xb = rng.uniform(0, static_cast<double>(n));
                const auto half = static_cast<std::ptrdiff_t>(rng.below(std::max<std::size_t>(1, n / 16) + 1));
                const auto steps = static_cast<std::size_t>(std::ceil(std::max(std::abs(yb - ya), std::abs(xb - xa)))) + 1;
                for (std::size_t t = 0; t <= steps; ++t) {
                    const double f = static_cast<double>(t) / static_cast<double>(steps);
                    const auto cy = static_cast<std::ptrdiff_t>(ya + (yb - ya) * f);
                    const auto cx = static_cast<std::ptrdiff_t>(xa + (xb - xa) * f);
                    for (std::ptrdiff_t dy = -half; dy <= half; ++dy)
                        for (std::ptrdiff_t dx = -half; dx <= half; ++dx) {
                            const auto y = cy + dy, x = cx + dx;
                            if (y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(n) &&
                                x < static_cast<std::ptrdiff_t>(n))
                                paint(static_cast<std::size_t>(y), static_cast<std::size_t>(x), col);
                        }
                }
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<std::filesystem::path> sample_image_paths(const std::filesystem::path& dir, std::size_t sample_count,
                                                      std::uint64_t shuffle_seed) {
    auto files = list_images(dir);
    if (files.empty()) throw ImageIoError("no PNG or JPEG images in " + dir.string());
    Rng rng(shuffle_seed);
    rng.shuffle(files);
    if (sample_count > 0 && sample_count < files.size()) files.resize(sample_count);
    return files;
}

std::vector<Image> load_image_directory(const std::filesystem::path& dir, std::size_t sample_count,
                                        std::uint64_t shuffle_seed) {
    const auto files = sample_image_paths(dir, sample_count, shuffle_seed);
    std::vector<Image> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(read_image(f));
    return out;
}

void PipelineOptions::validate() const {
    if (extent < 1) throw std::invalid_argument("target extent must be positive");
    if (gaussian && !(gaussian_sigma > 0)) throw std::invalid_argument("gaussian sigma must be positive");
    if (median && (median_window == 0 || median_window % 2 == 0))
        throw std::invalid_argument("median window must be odd and positive");
}

Image preprocess_image(const Image& image, const PipelineOptions& options) {
    Image out = resize_bilinear(image, options.extent, options.extent);
    if (options.gaussian) out = gaussian_filter(out, options.gaussian_sigma);
    if (options.median) out = median_filter(out, options.median_window);
    return out;
}

PreparedDataset prepare_dataset(std::span<const Image> images, const PipelineOptions& options) {
    options.validate();
    if (images.empty()) throw std::invalid_argument("prepare_dataset: no images");
    std::vector<Image> filtered;
    filtered.reserve(images.size());
    for (const auto& img : images) filtered.push_back(preprocess_image(img, options));

    PreparedDataset out;
    out.stats = channel_stats(filtered);
    auto& d = out.data;
    d.count = filtered.size();
    d.height = d.width = options.extent;
    d.values.reserve(d.count * d.image_size());
    for (const auto& img : filtered) {
        const Image m = options.normalization == Normalization::zscore ? normalize_zscore(img, out.stats)
                                                                       : to_model_range(img);
        d.values.insert(d.values.end(), m.values.begin(), m.values.end());
    }
    return out;
}

Image image_from_tensor(const TensorF& batch, std::size_t index) {
    if (batch.rank() != 4 || batch.dim(1) != 3) throw std::invalid_argument("expected a [n, 3, H, W] tensor");
    if (index >= batch.dim(0)) throw std::out_of_range("image index out of range");
    Image img(batch.dim(2), batch.dim(3));
    const auto src = batch.data().subspan(index * img.values.size(), img.values.size());
    std::copy(src.begin(), src.end(), img.values.begin());
    return img;
}

}  // namespace mdcgan
