#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mdcgan/image_io.hpp"
#include "mdcgan/checkpoint.hpp"
#include "mdcgan/model.hpp"
#include "mdcgan/preprocessing.hpp"

namespace mdcgan {

using LatentVector = std::vector<float>;

enum class WalkMode { combine_eq6, combine_eq7, combine_eq8, random_walk };

const char* walk_mode_name(WalkMode mode);
/// Accepts "eq6", "eq7", "eq8", "random" (or "walk") and the full enum names.
WalkMode parse_walk_mode(const std::string& text);

/// eq6: v2 + v3 - v1;  eq7: v1 + v2 - v3;  eq8: v1 - v2 + v3.
LatentVector combine(const LatentVector& v1, const LatentVector& v2, const LatentVector& v3, WalkMode mode);

/// steps + 1 points; v_t = v_{t-1} + step_scale * u_t, u_t ~ Uniform(-1, 1)^d.
std::vector<LatentVector> random_walk(const LatentVector& start, std::size_t steps, double step_scale, Rng& rng);

struct WalkPlan {
    WalkMode mode = WalkMode::random_walk;
    std::vector<LatentVector> anchors;
    std::size_t steps = 8;
    double step_scale = 0.1;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument; `latent_dim` 0 skips the width check.
    void validate(std::size_t latent_dim = 0) const;

    /// Combine modes: v1, v2, v3, result. Walk: start plus every step.
    /// Walk increments come from a stream derived from `seed`, distinct
    /// from the one make_walk_plan draws anchors from.
    std::vector<LatentVector> points() const;
};

/// Anchors drawn like generator inputs (Uniform(-1, 1)) from Rng(seed):
/// three for combine modes, one for a walk.
WalkPlan make_walk_plan(WalkMode mode, std::size_t latent_dim, std::uint64_t seed, std::size_t steps = 8,
                        double step_scale = 0.1);

/// Reads whitespace/comma separated anchor rows, one vector per line.
std::vector<LatentVector> load_anchors(const std::filesystem::path& path);

inline constexpr std::size_t kGridSeparator = 2;
inline constexpr float kSeparatorValue = 255.0f;

struct GridLayout {
    std::size_t tiles = 0, columns = 0, rows = 0, tile_extent = 0;
    std::size_t width() const { return columns * tile_extent + (columns - 1) * kGridSeparator; }
    std::size_t height() const { return rows * tile_extent + (rows - 1) * kGridSeparator; }
    /// Top-left pixel of tile i (row-major).
    std::size_t tile_y(std::size_t i) const { return (i / columns) * (tile_extent + kGridSeparator); }
    std::size_t tile_x(std::size_t i) const { return (i % columns) * (tile_extent + kGridSeparator); }
};

/// ceil(sqrt(n)) columns.
GridLayout grid_layout(std::size_t tiles, std::size_t tile_extent);
Image tile_grid(const std::vector<Image>& tiles);

/// Maps one generator output (model space) to display range.
using DisplayMap = std::function<Image(const Image&)>;

/// Checkpoint annotations recording how the training inputs were mapped.
std::vector<std::pair<std::string, std::string>> normalization_annotations(Normalization normalization,
                                                                           const ChannelStats& stats);

/// Display mapping for a checkpoint's generator: affine, unless its
/// annotations record z-score inputs, then the stored statistics invert it.
DisplayMap display_map_for(const Checkpoint& checkpoint);

/// Decodes latent rows through the generator in eval mode; returns
/// display-range images. An empty map means from_model_range.
std::vector<Image> decode_latents(Model<float>& generator, const std::vector<LatentVector>& points,
                                  const DisplayMap& to_display = {});

struct WalkOutput {
    std::vector<LatentVector> points;
    std::vector<Image> tiles;
    Image grid;
};

/// Writes grid.png, tile_NNN.png per point and manifest.txt (one line
/// per tile: index then the comma-separated coordinates) into `out_dir`.
WalkOutput render_walk(Model<float>& generator, const WalkPlan& plan, const std::filesystem::path& out_dir,
                       const DisplayMap& to_display = {});

}  // namespace mdcgan
