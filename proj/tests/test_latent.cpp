#include <cmath>
#include <fstream>

#include "doctest.h"
#include "mdcgan/image_io.hpp"
#include "mdcgan/latent.hpp"
#include "mdcgan/training.hpp"
#include "support.hpp"

using namespace mdcgan;

namespace {

LatentVector random_latent(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    LatentVector v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    return v;
}

LatentVector scaled(const LatentVector& v, float a) {
    LatentVector out(v);
    for (auto& x : out) x *= a;
    return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

}  // namespace

TEST_SUITE("latent") {

TEST_CASE("combine identities") {
    const auto v1 = random_latent(100, 1), v2 = random_latent(100, 2), v3 = random_latent(100, 3);
    CHECK(combine(v1, v1, v3, WalkMode::combine_eq6) == v3);
    CHECK(combine(v1, v2, v2, WalkMode::combine_eq7) == v1);
    CHECK(combine({1, 0}, {0, 1}, {1, 1}, WalkMode::combine_eq6) == LatentVector{0, 2});
    CHECK(combine({1, 0}, {0, 1}, {1, 1}, WalkMode::combine_eq7) == LatentVector{0, 0});
    CHECK(combine({1, 0}, {0, 1}, {1, 1}, WalkMode::combine_eq8) == LatentVector{2, 0});
    CHECK_THROWS(combine({1, 0}, {0, 1, 2}, {1, 1}, WalkMode::combine_eq6));
    CHECK_THROWS(combine(v1, v2, v3, WalkMode::random_walk));

    const auto e6 = combine(v1, v2, v3, WalkMode::combine_eq6), e7 = combine(v1, v2, v3, WalkMode::combine_eq7);
    for (std::size_t i = 0; i < 100; ++i) CHECK(e6[i] + e7[i] == doctest::Approx(2 * v2[i]).epsilon(1e-6));
}

TEST_CASE("combine is linear") {
    const auto v1 = random_latent(100, 4), v2 = random_latent(100, 5), v3 = random_latent(100, 6);
    for (auto mode : {WalkMode::combine_eq6, WalkMode::combine_eq7, WalkMode::combine_eq8})
        for (float a : {2.0f, -0.5f, 0.25f}) {
            // powers of two scale exactly; 0.3 only to rounding
            const auto lhs = combine(scaled(v1, a), scaled(v2, a), scaled(v3, a), mode);
            CHECK(lhs == scaled(combine(v1, v2, v3, mode), a));
            const auto l3 = combine(scaled(v1, 0.3f), scaled(v2, 0.3f), scaled(v3, 0.3f), mode);
            const auto r3 = scaled(combine(v1, v2, v3, mode), 0.3f);
            for (std::size_t i = 0; i < 100; ++i) REQUIRE(std::abs(l3[i] - r3[i]) <= 1e-6f);
        }
}

TEST_CASE("random walk") {
    const auto start = random_latent(100, 7);
    Rng a(3), b(3);
    const auto w1 = random_walk(start, 5, 0.1, a), w2 = random_walk(start, 5, 0.1, b);
    CHECK(w1.size() == 6);
    CHECK(w1 == w2);
    CHECK(w1.front() == start);
    Rng c(3);
    for (const auto& p : random_walk(start, 4, 0.0, c)) CHECK(p == start);
    for (std::size_t t = 1; t < w1.size(); ++t)
        for (std::size_t i = 0; i < 100; ++i) REQUIRE(std::abs(w1[t][i] - w1[t - 1][i]) <= 0.1f + 1e-6f);
}

TEST_CASE("mean squared displacement over 10^4 walks") {
    const std::size_t walks = 10000, steps = 10;
    const double s = 0.1;
    const LatentVector origin(100, 0.0f);
    std::vector<double> msd(steps + 1, 0.0);
    Rng rng(2024);
    for (std::size_t w = 0; w < walks; ++w) {
        const auto path = random_walk(origin, steps, s, rng);
        for (std::size_t t = 1; t <= steps; ++t) {
            double d = 0;
            for (std::size_t i = 0; i < 100; ++i) d += static_cast<double>(path[t][i]) * path[t][i];
            msd[t] += d / walks;
        }
    }
    // Var Uniform(-1, 1) = 1/3 per component per step
    for (std::size_t t = 1; t <= steps; ++t) {
        const double expected = static_cast<double>(t) * s * s * 100.0 / 3.0;
        CAPTURE(t);
        CHECK(std::abs(msd[t] - expected) <= 0.05 * expected);
    }
}

TEST_CASE("walk plans") {
    const auto p6 = make_walk_plan(WalkMode::combine_eq6, 100, 3);
    CHECK(p6.anchors.size() == 3);
    const auto pts = p6.points();
    REQUIRE(pts.size() == 4);
    CHECK(pts[0] == p6.anchors[0]);
    CHECK(pts[3] == combine(p6.anchors[0], p6.anchors[1], p6.anchors[2], WalkMode::combine_eq6));
    CHECK(make_walk_plan(WalkMode::combine_eq6, 100, 3).anchors == p6.anchors);

    const auto walk = make_walk_plan(WalkMode::random_walk, 100, 3, 16, 0.1);
    CHECK(walk.anchors.size() == 1);
    CHECK(walk.points().size() == 17);
    CHECK(walk.points() == walk.points());

    auto bad = walk;
    bad.step_scale = 0;
    CHECK_THROWS(bad.validate());
    bad = walk;
    bad.steps = 0;
    CHECK_THROWS(bad.validate());
    bad = p6;
    bad.anchors.pop_back();
    CHECK_THROWS(bad.validate());
    CHECK_THROWS(p6.validate(64));
    CHECK_NOTHROW(p6.validate(100));

    CHECK(parse_walk_mode("eq7") == WalkMode::combine_eq7);
    CHECK(parse_walk_mode("walk") == WalkMode::random_walk);
    CHECK(parse_walk_mode("random") == WalkMode::random_walk);
    CHECK(parse_walk_mode(walk_mode_name(WalkMode::combine_eq8)) == WalkMode::combine_eq8);
    CHECK_THROWS(parse_walk_mode("eq9"));
}

TEST_CASE("anchor files") {
    test::TempDir dir("anchors");
    std::ofstream(dir.path() / "a.txt") << "1, 2, 3\n4 5 6\n\n7,8,9\n";
    const auto rows = load_anchors(dir.path() / "a.txt");
    REQUIRE(rows.size() == 3);
    CHECK(rows[1] == LatentVector{4, 5, 6});
    std::ofstream(dir.path() / "b.txt") << "1, x\n";
    CHECK_THROWS(load_anchors(dir.path() / "b.txt"));
}

TEST_CASE("grid layout") {
    const auto one = grid_layout(1, 32);
    CHECK(one.columns == 1);
    CHECK(one.width() == 32);
    CHECK(one.height() == 32);
    const auto four = grid_layout(4, 32);
    CHECK(four.columns == 2);
    CHECK(four.rows == 2);
    CHECK(four.width() == 66);
    const auto seventeen = grid_layout(17, 8);
    CHECK(seventeen.columns == 5);
    CHECK(seventeen.rows == 4);
    CHECK(seventeen.tile_x(6) == 10);
    CHECK(seventeen.tile_y(6) == 10);
}

TEST_CASE("tiling") {
    std::vector<Image> tiles;
    for (int i = 0; i < 4; ++i) tiles.push_back(Image(3, 3, static_cast<float>(10 * (i + 1))));
    const auto grid = tile_grid(tiles);
    CHECK(grid.width == 8);
    CHECK(grid.at(0, 0, 0) == 10);
    CHECK(grid.at(0, 0, 5) == 20);
    CHECK(grid.at(1, 5, 0) == 30);
    CHECK(grid.at(2, 5, 5) == 40);
    CHECK(grid.at(0, 3, 0) == kSeparatorValue);
    CHECK(grid.at(0, 0, 4) == kSeparatorValue);
    CHECK(tile_grid({tiles[0]}) == tiles[0]);
}

TEST_CASE("rendering a walk") {
    auto g = build_generator<float>(8, 5);
    test::TempDir a("walk-a"), b("walk-b");
    const auto plan = make_walk_plan(WalkMode::combine_eq6, 100, 3);
    const auto out = render_walk(g, plan, a.path());
    render_walk(g, plan, b.path());
    REQUIRE(out.tiles.size() == 4);
    CHECK(read_image(a.path() / "grid.png") == read_image(b.path() / "grid.png"));
    CHECK(read_image(a.path() / "grid.png") == out.grid);

    // decode each tile offset of the grid and compare with the per-point decode
    const auto layout = grid_layout(4, 32);
    const auto singles = decode_latents(g, plan.points());
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(read_image(a.path() / ("tile_00" + std::to_string(i) + ".png")) == singles[i]);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < 32; ++y)
                for (std::size_t x = 0; x < 32; ++x)
                    REQUIRE(out.grid.at(c, layout.tile_y(i) + y, layout.tile_x(i) + x) == singles[i].at(c, y, x));
    }
    const auto manifest = read_lines(a.path() / "manifest.txt");
    REQUIRE(manifest.size() == 4);
    CHECK(manifest[3].starts_with("3,"));
    CHECK(std::count(manifest[0].begin(), manifest[0].end(), ',') == 100);

    test::TempDir c("walk-one");
    auto single = make_walk_plan(WalkMode::random_walk, 100, 1, 1, 0.1);
    const auto one = render_walk(g, single, c.path());
    CHECK(one.tiles.size() == 2);
    CHECK(tile_grid({one.tiles[0]}) == one.tiles[0]);

    // a wrong-width plan fails before anything is decoded
    auto wide = plan;
    for (auto& v : wide.anchors) v.push_back(0.0f);
    CHECK_THROWS(render_walk(g, wide, c.path()));
}

TEST_CASE("display mapping follows the checkpoint's normalization") {
    Trainer trainer([] {
        TrainConfig c;
        c.scale_factor = 8;
        return c;
    }());
    ChannelStats stats;
    stats.mean = {100, 120, 140};
    stats.stddev = {10, 20, 0.5};

    Checkpoint affine = trainer.checkpoint();
    CHECK_FALSE(display_map_for(affine));
    for (const auto& [k, v] : normalization_annotations(Normalization::affine, stats)) trainer.set_annotation(k, v);
    CHECK_FALSE(display_map_for(trainer.checkpoint()));

    for (const auto& [k, v] : normalization_annotations(Normalization::zscore, stats)) trainer.set_annotation(k, v);
    const Checkpoint cp = trainer.checkpoint();
    const auto map = display_map_for(cp);
    REQUIRE(map);
    Image raw(1, 2);
    const float z[6] = {0.0f, 1.0f, -0.5f, 2.0f, 3.0f, -3.0f};
    std::copy(z, z + 6, raw.values.begin());
    const Image shown = map(raw);
    // mean + z * std, rounded half up and clamped to a byte
    CHECK(shown.values == std::vector<float>{100, 110, 110, 160, 142, 139});

    auto g = generator_from_checkpoint(cp);
    const auto pts = make_walk_plan(WalkMode::combine_eq6, 100, 2).points();
    const auto mapped = decode_latents(g, pts, map);
    const auto affine_tiles = decode_latents(g, pts);
    REQUIRE(mapped.size() == 4);
    CHECK(mapped[0] != affine_tiles[0]);
    for (float v : mapped[0].values) REQUIRE((v == std::round(v) && v >= 0 && v <= 255));

    Checkpoint broken = cp;
    for (auto& [k, v] : broken.config)
        if (k == "stats_std") v = "1,2";
    CHECK_THROWS(display_map_for(broken));
}

}  // TEST_SUITE
