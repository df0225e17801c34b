#include "mdcgan/latent.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mdcgan/preprocessing.hpp"

namespace mdcgan {

namespace {

constexpr std::uint64_t kWalkStreamSalt = 0x9E3779B97F4A7C15ull;

bool is_combine(WalkMode mode) { return mode != WalkMode::random_walk; }

}  // namespace

const char* walk_mode_name(WalkMode mode) {
    switch (mode) {
        case WalkMode::combine_eq6: return "combine_eq6";
        case WalkMode::combine_eq7: return "combine_eq7";
        case WalkMode::combine_eq8: return "combine_eq8";
        case WalkMode::random_walk: return "random_walk";
    }
    return "?";
}

WalkMode parse_walk_mode(const std::string& text) {
    if (text == "eq6" || text == "combine_eq6") return WalkMode::combine_eq6;
    if (text == "eq7" || text == "combine_eq7") return WalkMode::combine_eq7;
    if (text == "eq8" || text == "combine_eq8") return WalkMode::combine_eq8;
    if (text == "walk" || text == "random" || text == "random_walk") return WalkMode::random_walk;
    throw std::invalid_argument("unknown walk mode '" + text + "' (expected eq6, eq7, eq8 or random)");
}

LatentVector combine(const LatentVector& v1, const LatentVector& v2, const LatentVector& v3, WalkMode mode) {
    if (v1.size() != v2.size() || v1.size() != v3.size())
        throw std::invalid_argument("combine: latent widths differ (" + std::to_string(v1.size()) + ", " +
                                    std::to_string(v2.size()) + ", " + std::to_string(v3.size()) + ")");
    // The difference is formed first so equal anchors cancel exactly.
    LatentVector out(v1.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double a = v1[i], b = v2[i], c = v3[i];
        switch (mode) {
            case WalkMode::combine_eq6: out[i] = static_cast<float>(c + (b - a)); break;
            case WalkMode::combine_eq7: out[i] = static_cast<float>(a + (b - c)); break;
            case WalkMode::combine_eq8: out[i] = static_cast<float>(a + (c - b)); break;
            case WalkMode::random_walk: throw std::invalid_argument("combine: random_walk is not a combine mode");
        }
    }
    return out;
}

std::vector<LatentVector> random_walk(const LatentVector& start, std::size_t steps, double step_scale, Rng& rng) {
    if (steps < 1) throw std::invalid_argument("random_walk: steps must be at least 1");
    std::vector<LatentVector> out{start};
    out.reserve(steps + 1);
    for (std::size_t t = 0; t < steps; ++t) {
        LatentVector next = out.back();
        for (auto& v : next) v = static_cast<float>(v + step_scale * rng.uniform(-1.0, 1.0));
        out.push_back(std::move(next));
    }
    return out;
}

void WalkPlan::validate(std::size_t latent_dim) const {
    if (is_combine(mode)) {
        if (anchors.size() != 3) throw std::invalid_argument("combine modes need exactly 3 anchors");
    } else {
        if (anchors.size() != 1) throw std::invalid_argument("random_walk needs exactly 1 anchor");
        if (steps < 1) throw std::invalid_argument("random_walk needs steps >= 1");
        if (!(step_scale > 0) || !std::isfinite(step_scale))
            throw std::invalid_argument("random_walk needs step_scale > 0");
    }
    for (const auto& a : anchors) {
        if (a.empty()) throw std::invalid_argument("empty anchor vector");
        if (a.size() != anchors.front().size()) throw std::invalid_argument("anchor widths differ");
        if (latent_dim && a.size() != latent_dim)
            throw std::invalid_argument("anchor width " + std::to_string(a.size()) + " does not match latent dim " +
                                        std::to_string(latent_dim));
    }
}

std::vector<LatentVector> WalkPlan::points() const {
    validate();
    if (is_combine(mode)) return {anchors[0], anchors[1], anchors[2], combine(anchors[0], anchors[1], anchors[2], mode)};
    Rng rng(seed ^ kWalkStreamSalt);
    return random_walk(anchors[0], steps, step_scale, rng);
}

WalkPlan make_walk_plan(WalkMode mode, std::size_t latent_dim, std::uint64_t seed, std::size_t steps,
                        double step_scale) {
    WalkPlan plan;
    plan.mode = mode;
    plan.steps = steps;
    plan.step_scale = step_scale;
    plan.seed = seed;
    Rng rng(seed);
    const std::size_t n = is_combine(mode) ? 3 : 1;
    for (std::size_t i = 0; i < n; ++i) {
        const auto z = sample_noise(1, latent_dim, rng);
        plan.anchors.emplace_back(z.data().begin(), z.data().end());
    }
    plan.validate(latent_dim);
    return plan;
}

std::vector<LatentVector> load_anchors(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open anchor file " + path.string());
    std::vector<LatentVector> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        for (auto& c : line)
            if (c == ',') c = ' ';
        std::istringstream row(line);
        LatentVector v;
        std::string tok;
        while (row >> tok) {
            try {
                std::size_t used = 0;
                v.push_back(std::stof(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
            }
        }
        if (!v.empty()) out.push_back(std::move(v));
    }
    return out;
}

GridLayout grid_layout(std::size_t tiles, std::size_t tile_extent) {
    if (tiles == 0) throw std::invalid_argument("grid needs at least one tile");
    GridLayout g;
    g.tiles = tiles;
    g.tile_extent = tile_extent;
    g.columns = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(tiles))));
    while (g.columns * g.columns < tiles) ++g.columns;  // guard sqrt rounding
    while (g.columns > 1 && (g.columns - 1) * (g.columns - 1) >= tiles) --g.columns;
    g.rows = (tiles + g.columns - 1) / g.columns;
    return g;
}

Image tile_grid(const std::vector<Image>& tiles) {
    if (tiles.empty()) throw std::invalid_argument("tile_grid: no tiles");
    const std::size_t e = tiles.front().height;
    for (const auto& t : tiles)
        if (t.height != e || t.width != e) throw std::invalid_argument("tile_grid: tiles must be square and equal");
    const auto layout = grid_layout(tiles.size(), e);
    Image grid(layout.height(), layout.width(), kSeparatorValue);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const std::size_t oy = layout.tile_y(i), ox = layout.tile_x(i);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < e; ++y)
                for (std::size_t x = 0; x < e; ++x) grid.at(c, oy + y, ox + x) = tiles[i].at(c, y, x);
    }
    return grid;
}

namespace {

std::string join3(const std::array<double, 3>& v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", v[0], v[1], v[2]);
    return buf;
}

std::array<double, 3> split3(const std::string& text) {
    std::array<double, 3> out{};
    std::istringstream in(text);
    char comma = 0;
    if (!(in >> out[0] >> comma >> out[1] >> comma >> out[2]))
        throw std::runtime_error("malformed channel statistics '" + text + "' in checkpoint");
    return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> normalization_annotations(Normalization normalization,
                                                                           const ChannelStats& stats) {
    return {{"normalization", normalization == Normalization::zscore ? "zscore" : "affine"},
            {"stats_mean", join3(stats.mean)},
            {"stats_std", join3(stats.stddev)}};
}

DisplayMap display_map_for(const Checkpoint& cp) {
    if (cp.config_value("normalization", "affine") != "zscore") return {};
    ChannelStats stats;
    stats.mean = split3(cp.config_value("stats_mean"));
    stats.stddev = split3(cp.config_value("stats_std"));
    return [stats](const Image& raw) {
        Image img = denormalize_zscore(raw, stats);
        for (auto& v : img.values) v = to_byte(v);
        return img;
    };
}

std::vector<Image> decode_latents(Model<float>& generator, const std::vector<LatentVector>& points,
                                  const DisplayMap& to_display) {
    const std::size_t d = generator.spec().latent_dim();
    const Mode previous = generator.mode();
    generator.eval();
    NoGradGuard guard;
    std::vector<Image> out;
    constexpr std::size_t kChunk = 32;
    for (std::size_t begin = 0; begin < points.size(); begin += kChunk) {
        const std::size_t n = std::min(kChunk, points.size() - begin);
        std::vector<float> z;
        z.reserve(n * d);
        for (std::size_t i = begin; i < begin + n; ++i) {
            if (points[i].size() != d)
                throw std::invalid_argument("latent width " + std::to_string(points[i].size()) +
                                            " does not match generator latent dim " + std::to_string(d));
            z.insert(z.end(), points[i].begin(), points[i].end());
        }
        const auto images = generator_forward(generator, TensorF(Shape{n, d}, std::move(z)));
        for (std::size_t i = 0; i < n; ++i) {
            const Image raw = image_from_tensor(images, i);
            out.push_back(to_display ? to_display(raw) : from_model_range(raw));
        }
    }
    generator.set_mode(previous);
    return out;
}

WalkOutput render_walk(Model<float>& generator, const WalkPlan& plan, const std::filesystem::path& out_dir,
                       const DisplayMap& to_display) {
    plan.validate(generator.spec().latent_dim());
    WalkOutput out;
    out.points = plan.points();
    out.tiles = decode_latents(generator, out.points, to_display);
    out.grid = tile_grid(out.tiles);

    std::filesystem::create_directories(out_dir);
    write_png(out_dir / "grid.png", out.grid);
    std::ofstream manifest(out_dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write manifest in " + out_dir.string());
    for (std::size_t i = 0; i < out.points.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "tile_%03zu.png", i);
        write_png(out_dir / name, out.tiles[i]);
        manifest << i;
        for (float v : out.points[i]) {
            char buf[32];
            std::snprintf(buf, sizeof buf, ",%.9g", v);
            manifest << buf;
        }
        manifest << '\n';
    }
    return out;
}

}  // namespace mdcgan
