#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mdcgan/image_io.hpp"
#include "mdcgan/preprocessing.hpp"
#include "support.hpp"

using namespace mdcgan;

namespace {

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed, double lo = 0, double hi = 255) {
    Image img(h, w);
    Rng rng(seed);
    for (auto& v : img.values) v = static_cast<float>(rng.uniform(lo, hi));
    return img;
}

Image integral_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    Image img(h, w);
    Rng rng(seed);
    for (auto& v : img.values) v = static_cast<float>(rng.below(256));
    return img;
}

double mean_of(const Image& img) {
    double s = 0;
    for (float v : img.values) s += v;
    return s / static_cast<double>(img.values.size());
}

// population moments of one channel across a batch, computed directly
std::pair<double, double> moments(const std::vector<Image>& images, std::size_t c) {
    double s = 0, n = 0;
    for (const auto& im : images)
        for (std::size_t p = 0; p < im.plane(); ++p) {
            s += im.values[c * im.plane() + p];
            ++n;
        }
    const double m = s / n;
    double ss = 0;
    for (const auto& im : images)
        for (std::size_t p = 0; p < im.plane(); ++p) ss += std::pow(im.values[c * im.plane() + p] - m, 2);
    return {m, std::sqrt(ss / n)};
}

}  // namespace

TEST_SUITE("preprocessing") {

TEST_CASE("resize") {
    const Image flat(512, 512, 77.0f);
    const auto small = resize_bilinear(flat, 256, 256);
    CHECK(small.height == 256);
    CHECK(small.width == 256);
    for (float v : small.values) REQUIRE(v == doctest::Approx(77.0f));

    const auto img = random_image(9, 13, 1);
    CHECK(resize_bilinear(img, 9, 13) == img);

    Image checker(2, 2);
    for (std::size_t c = 0; c < 3; ++c) {
        checker.at(c, 0, 0) = 255;
        checker.at(c, 1, 1) = 255;
    }
    const auto up = resize_bilinear(checker, 3, 3);
    for (std::size_t c = 0; c < 3; ++c) CHECK(up.at(c, 1, 1) == doctest::Approx(127.5));

    const auto odd = resize_bilinear(random_image(37, 23, 2), 256, 256);
    CHECK(odd.values.size() == 3 * 256 * 256);
}

TEST_CASE("gaussian kernel and filter") {
    for (double sigma : {0.001, 0.5, 1.0, 2.3}) {
        const auto k = gaussian_kernel(sigma);
        const auto radius = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(3 * sigma)));
        CHECK(k.size() == 2 * radius + 1);
        CHECK(std::accumulate(k.begin(), k.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS(gaussian_kernel(0.0));

    const auto img = random_image(16, 16, 3);
    const auto same = gaussian_filter(img, 0.001);
    for (std::size_t i = 0; i < img.values.size(); ++i) REQUIRE(std::abs(same.values[i] - img.values[i]) <= 1e-6);

    const Image flat(10, 12, 40.0f);
    const auto blurred = gaussian_filter(flat, 2.0);
    for (float v : blurred.values) REQUIRE(v == doctest::Approx(40.0f).epsilon(1e-6));

    // content kept clear of the border by more than the radius: nothing is
    // reflected, so a unit-sum kernel moves mass around without changing it
    Image blob(24, 24);
    const auto inner = random_image(8, 8, 4);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x) blob.at(c, y + 8, x + 8) = inner.at(c, y, x);
    const auto spread = gaussian_filter(blob, 1.3);
    CHECK(std::abs(mean_of(spread) - mean_of(blob)) <= 1e-6 * mean_of(blob));
    CHECK(spread.height == blob.height);
    CHECK(spread.width == blob.width);
}

TEST_CASE("median filter") {
    const auto img = random_image(7, 9, 5);
    CHECK(median_filter(img, 1) == img);
    CHECK_THROWS_AS(median_filter(img, 2), std::invalid_argument);
    CHECK_THROWS_AS(median_filter(img, 0), std::invalid_argument);

    const Image flat(6, 6, 13.0f);
    CHECK(median_filter(flat, 3) == flat);
    CHECK(median_filter(flat, 5) == flat);

    Image salt(5, 5);
    for (std::size_t c = 0; c < 3; ++c) salt.at(c, 2, 2) = 255;
    const auto clean = median_filter(salt, 3);
    for (float v : clean.values) CHECK(v == 0.0f);
}

TEST_CASE("channel statistics") {
    const std::vector<Image> zeros{Image(4, 4), Image(4, 4)};
    const auto z = channel_stats(zeros);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(z.mean[c] == 0.0);
        CHECK(z.stddev[c] == 0.0);
    }

    Image half(2, 2);
    for (std::size_t c = 0; c < 3; ++c) {
        half.at(c, 0, 0) = 255;
        half.at(c, 1, 1) = 255;
    }
    const auto h = channel_stats(std::vector<Image>{half});
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(h.mean[c] == doctest::Approx(127.5));
        CHECK(h.stddev[c] == doctest::Approx(127.5));
    }

    std::vector<Image> batch{random_image(5, 5, 1), random_image(5, 5, 2), random_image(5, 5, 3)};
    const auto a = channel_stats(batch);
    std::swap(batch[0], batch[2]);
    const auto b = channel_stats(batch);
    for (std::size_t c = 0; c < 3; ++c) {
        const auto [m, s] = moments(batch, c);
        CHECK(a.mean[c] == doctest::Approx(m).epsilon(1e-12));
        CHECK(a.stddev[c] == doctest::Approx(s).epsilon(1e-12));
        CHECK(a.mean[c] == doctest::Approx(b.mean[c]).epsilon(1e-14));
        CHECK(a.stddev[c] == doctest::Approx(b.stddev[c]).epsilon(1e-14));
    }
    CHECK_THROWS(channel_stats(std::vector<Image>{}));
}

TEST_CASE("z-score normalization") {
    SUBCASE("standardized channels") {
        std::vector<Image> batch;
        for (std::uint64_t s = 0; s < 6; ++s) batch.push_back(random_image(11, 7, s, 20, 230));
        const auto stats = channel_stats(batch);
        std::vector<Image> normed;
        for (const auto& im : batch) normed.push_back(normalize_zscore(im, stats));
        for (std::size_t c = 0; c < 3; ++c) {
            const auto [m, s] = moments(normed, c);
            CHECK(std::abs(m) <= 1e-6);
            CHECK(std::abs(s - 1.0) <= 1e-6);
        }
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const auto back = denormalize_zscore(normed[i], stats);
            for (std::size_t k = 0; k < back.values.size(); ++k)
                REQUIRE(back.values[k] == doctest::Approx(batch[i].values[k]).epsilon(1e-5));
        }
    }
    SUBCASE("constant channel goes to zero") {
        const Image flat(3, 3, 90.0f);
        const auto stats = channel_stats(std::vector<Image>{flat});
        for (float v : normalize_zscore(flat, stats).values) CHECK(v == 0.0f);
    }
    SUBCASE("255 under mean 127.5, std 127.5") {
        ChannelStats stats;
        stats.mean = {127.5, 127.5, 127.5};
        stats.stddev = {127.5, 127.5, 127.5};
        const auto z = normalize_zscore(Image(1, 1, 255.0f), stats);
        for (float v : z.values) CHECK(v == doctest::Approx(1.0));
    }
}

TEST_CASE("stats file round trip") {
    test::TempDir dir("stats");
    ChannelStats stats;
    stats.mean = {1.0 / 3.0, 120.25, 200.0};
    stats.stddev = {0.1, 64.0 + 1e-9, 3.0};
    stats.save(dir.path() / "stats.json");
    const auto back = ChannelStats::load(dir.path() / "stats.json");
    CHECK(back.mean == stats.mean);
    CHECK(back.stddev == stats.stddev);
    CHECK_THROWS(ChannelStats::load(dir.path() / "missing.json"));
}

TEST_CASE("model range") {
    CHECK(from_model_range(-1.0f) == 0.0f);
    CHECK(from_model_range(1.0f) == 255.0f);
    CHECK(from_model_range(0.0f) == 128.0f);  // 127.5 rounds half up
    CHECK(from_model_range(-2.0f) == 0.0f);
    CHECK(from_model_range(3.0f) == 255.0f);
    for (int p = 0; p <= 255; ++p) {
        const auto back = from_model_range(to_model_range(static_cast<float>(p)));
        REQUIRE(std::abs(back - p) <= 1.0f / 255.0f);
    }
    const auto img = integral_image(4, 4, 9);
    CHECK(from_model_range(to_model_range(img)) == img);
    CHECK(to_byte(127.5f) == 128);
    CHECK(to_byte(127.49f) == 127);
    CHECK(to_byte(-3.0f) == 0);
    CHECK(to_byte(300.0f) == 255);
}

TEST_CASE("synthetic dataset") {
    SyntheticSpec spec;
    spec.count = 50;
    spec.seed = 4;
    const auto a = make_synthetic_dataset(spec), b = make_synthetic_dataset(spec);
    CHECK(a == b);
    spec.seed = 5;
    CHECK(make_synthetic_dataset(spec) != a);

    spec.palette = {{255, 0, 0}, {0, 0, 0}};
    const auto two = make_synthetic_dataset(spec);
    std::set<std::array<float, 3>> allowed{{255, 0, 0}, {0, 0, 0}, {245, 240, 230}};
    std::set<std::array<float, 3>> seen;
    for (const auto& im : two) {
        REQUIRE(im.height == 32);
        for (std::size_t p = 0; p < im.plane(); ++p) {
            const std::array<float, 3> px{im.values[p], im.values[im.plane() + p], im.values[2 * im.plane() + p]};
            REQUIRE(allowed.count(px) == 1);
            seen.insert(px);
        }
    }
    CHECK(seen.size() == 3);

    spec.count = 2000;
    const auto t0 = std::chrono::steady_clock::now();
    const auto full = make_synthetic_dataset(spec);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(full.size() == 2000);
    CHECK(secs < 10.0);
}

TEST_CASE("pipeline") {
    const auto img = random_image(40, 30, 6);
    PipelineOptions options;
    options.extent = 32;
    const auto once = preprocess_image(img, options), twice = preprocess_image(img, options);
    CHECK(once == twice);
    CHECK(once.height == 32);
    CHECK(once.width == 32);
    CHECK(median_filter(gaussian_filter(resize_bilinear(img, 32, 32), 0.001), 3) == once);

    options.median_window = 4;
    CHECK_THROWS(options.validate());

    std::vector<Image> images{random_image(20, 20, 1), random_image(33, 17, 2), random_image(32, 32, 3)};
    PipelineOptions affine;
    affine.extent = 32;
    const auto prepared = prepare_dataset(images, affine);
    CHECK(prepared.data.count == 3);
    CHECK(prepared.data.height == 32);
    for (float v : prepared.data.values) {
        REQUIRE(v >= -1.0f);
        REQUIRE(v <= 1.0f);
    }
    PipelineOptions z = affine;
    z.normalization = Normalization::zscore;
    const auto zprep = prepare_dataset(images, z);
    const TensorF all(Shape{3, 3, 32, 32}, std::vector<float>(zprep.data.values));
    std::vector<Image> normed;
    for (std::size_t i = 0; i < 3; ++i) normed.push_back(image_from_tensor(all, i));
    for (std::size_t c = 0; c < 3; ++c) {
        const auto [m, s] = moments(normed, c);
        CHECK(std::abs(m) <= 1e-6);
        CHECK(std::abs(s - 1.0) <= 1e-6);
    }
}

}  // TEST_SUITE

TEST_SUITE("image_io") {

TEST_CASE("png round trip") {
    test::TempDir dir("png");
    const auto img = integral_image(7, 11, 3);
    write_png(dir.path() / "sub" / "a.png", img);
    CHECK(read_image(dir.path() / "sub" / "a.png") == img);

    std::ofstream(dir.path() / "junk.png") << "not an image";
    CHECK_THROWS_AS(read_image(dir.path() / "junk.png"), ImageIoError);
    CHECK_THROWS_AS(read_image(dir.path() / "none.png"), ImageIoError);
}

TEST_CASE("directory listing and sampling") {
    test::TempDir dir("list");
    for (const char* name : {"c.png", "a.PNG", "b.txt", "d.jpeg"}) std::ofstream(dir.path() / name) << "x";
    std::filesystem::create_directory(dir.path() / "e.png");
    const auto files = list_images(dir.path());
    REQUIRE(files.size() == 3);
    CHECK(files[0].filename() == "a.PNG");
    CHECK(files[1].filename() == "c.png");
    CHECK(files[2].filename() == "d.jpeg");

    test::TempDir imgs("sample");
    for (int i = 0; i < 6; ++i) {
        Image im(3, 3, static_cast<float>(i * 10));
        write_png(imgs.path() / ("img" + std::to_string(i) + ".png"), im);
    }
    const auto a = load_image_directory(imgs.path(), 4, 1), b = load_image_directory(imgs.path(), 4, 1);
    CHECK(a.size() == 4);
    CHECK(a == b);
    CHECK(load_image_directory(imgs.path(), 0, 1).size() == 6);

    // the loader reads exactly the sampled paths, in that order
    const auto paths = sample_image_paths(imgs.path(), 4, 1);
    REQUIRE(paths.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(read_image(paths[i]) == a[i]);
    auto all = sample_image_paths(imgs.path(), 0, 1);
    CHECK(all.size() == 6);
    std::sort(all.begin(), all.end());
    CHECK(all == list_images(imgs.path()));
    test::TempDir empty("empty");
    CHECK_THROWS_AS(sample_image_paths(empty.path(), 0, 1), ImageIoError);
}

}  // TEST_SUITE
