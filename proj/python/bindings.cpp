#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mdcgan/analysis.hpp"
#include "mdcgan/architecture.hpp"
#include "mdcgan/latent.hpp"
#include "mdcgan/preprocessing.hpp"
#include "mdcgan/training.hpp"

namespace py = pybind11;
using namespace mdcgan;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Images cross the boundary as [n, H, W, 3] arrays; internally they are planar.
py::array_t<std::uint8_t> to_array(const std::vector<Image>& images) {
    const std::size_t n = images.size();
    const std::size_t h = n ? images[0].height : 0, w = n ? images[0].width : 0;
    py::array_t<std::uint8_t> out({n, h, w, std::size_t{3}});
    auto r = out.mutable_unchecked<4>();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t c = 0; c < 3; ++c)
                    r(i, y, x, c) = to_byte(images[i].at(c, y, x));
    return out;
}

std::vector<Image> from_array(const FloatArray& a) {
    if (a.ndim() != 4 || a.shape(3) != 3) throw py::value_error("expected an [n, H, W, 3] array");
    auto r = a.unchecked<4>();
    std::vector<Image> out;
    for (py::ssize_t i = 0; i < a.shape(0); ++i) {
        Image img(a.shape(1), a.shape(2));
        for (py::ssize_t y = 0; y < a.shape(1); ++y)
            for (py::ssize_t x = 0; x < a.shape(2); ++x)
                for (py::ssize_t c = 0; c < 3; ++c) img.at(c, y, x) = r(i, y, x, c);
        out.push_back(std::move(img));
    }
    return out;
}

LatentVector to_latent(const FloatArray& a) {
    if (a.ndim() != 1) throw py::value_error("expected a 1-D latent vector");
    return {a.data(), a.data() + a.size()};
}

py::array_t<float> from_latents(const std::vector<LatentVector>& points) {
    const std::size_t n = points.size(), d = n ? points[0].size() : 0;
    py::array_t<float> out({n, d});
    auto r = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) r(i, j) = points[i][j];
    return out;
}

/// Generator restored from a checkpoint, for sampling and latent decoding.
class Generator {
public:
    explicit Generator(const std::filesystem::path& path)
        : checkpoint_(load_checkpoint(path)), model_(generator_from_checkpoint(checkpoint_)),
          display_(display_map_for(checkpoint_)) {}

    std::size_t latent_dim() const { return model_.spec().latent_dim(); }
    std::size_t scale() const { return model_.spec().scale_factor; }
    std::size_t epoch() const { return checkpoint_.epoch; }

    py::array_t<std::uint8_t> decode(const FloatArray& z) {
        if (z.ndim() != 2) throw py::value_error("expected an [n, latent_dim] array");
        std::vector<LatentVector> points(z.shape(0));
        for (py::ssize_t i = 0; i < z.shape(0); ++i) points[i].assign(z.data(i, 0), z.data(i, 0) + z.shape(1));
        return to_array(decode_latents(model_, points, display_));
    }

    py::array_t<std::uint8_t> sample(std::size_t count, std::uint64_t seed) {
        Rng rng(seed);
        const TensorF z = sample_noise(count, latent_dim(), rng);
        FloatArray arr({count, latent_dim()});
        std::copy(z.data().begin(), z.data().end(), arr.mutable_data());
        return decode(arr);
    }

private:
    Checkpoint checkpoint_;
    Model<float> model_;
    DisplayMap display_;
};

py::dict test_dict(const FTestResult& t) {
    py::dict d;
    d["f"] = t.f;
    d["d1"] = t.d1;
    d["d2"] = t.d2;
    d["alpha"] = t.alpha;
    d["two_sided"] = t.tail == Tail::two_sided;
    d["critical_value"] = t.critical_value;
    d["critical_value_low"] = t.critical_value_low;
    d["reject"] = t.reject;
    d["note"] = t.note;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Modified DCGAN for paintings: models, latent exploration and batch statistics.";
    m.attr("LATENT_DIM") = kLatentDim;

    m.def("image_extent", &image_extent_for_scale, py::arg("scale"));

    m.def(
        "architecture_report",
        [](const std::string& network) {
            if (network != "generator" && network != "discriminator")
                throw py::value_error("network must be 'generator' or 'discriminator'");
            const auto spec = network == "generator" ? generator_spec(1) : discriminator_spec(1);
            const auto report = verify_architecture(spec);
            return py::make_tuple(report.all_match(), report.total_parameters(), report.render());
        },
        py::arg("network"), "(all rows match, built parameter count, rendered table) at scale 1");

    m.def(
        "parameter_count",
        [](const std::string& network, std::size_t scale) {
            if (network == "generator") return build_generator<float>(scale, 0).parameter_count();
            if (network == "discriminator") return build_discriminator<float>(scale, 0).parameter_count();
            throw py::value_error("network must be 'generator' or 'discriminator'");
        },
        py::arg("network"), py::arg("scale") = 1);

    py::class_<Generator>(m, "Generator")
        .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
        .def_property_readonly("latent_dim", &Generator::latent_dim)
        .def_property_readonly("scale", &Generator::scale)
        .def_property_readonly("epoch", &Generator::epoch)
        .def("decode", &Generator::decode, py::arg("z"), "Latent rows -> uint8 images [n, H, W, 3]")
        .def("sample", &Generator::sample, py::arg("count"), py::arg("seed") = 0);

    m.def(
        "train_synthetic",
        [](std::size_t scale, std::size_t epochs, std::size_t count, std::size_t palette_size, std::size_t batch_size,
           std::uint64_t seed, const std::filesystem::path& output) {
            SyntheticSpec spec;
            if (palette_size < 1 || palette_size > spec.palette.size())
                throw py::value_error("palette_size out of range");
            spec.palette.resize(palette_size);
            spec.extent = image_extent_for_scale(scale);
            spec.count = count;
            spec.seed = seed;
            const auto prepared = prepare_dataset(make_synthetic_dataset(spec), {spec.extent, false, 0.001, false, 3});
            TrainConfig config;
            config.scale_factor = scale;
            config.epochs = epochs;
            config.batch_size = batch_size;
            config.seed = seed;
            TrainOptions options;
            options.output_dir = output;
            options.annotations = normalization_annotations(Normalization::affine, prepared.stats);
            TrainResult result;
            {
                py::gil_scoped_release release;
                result = train(config, prepared.data, options);
            }
            return py::make_tuple(result.checkpoints.empty() ? std::filesystem::path() : result.checkpoints.back(),
                                  result.metrics.size());
        },
        py::arg("scale"), py::arg("epochs"), py::arg("count"), py::arg("palette_size") = 2, py::arg("batch_size") = 32,
        py::arg("seed") = 0, py::arg("output"), "Trains on synthetic images; returns (final checkpoint, step count)");

    m.def(
        "combine",
        [](const FloatArray& v1, const FloatArray& v2, const FloatArray& v3, const std::string& mode) {
            const auto r = combine(to_latent(v1), to_latent(v2), to_latent(v3), parse_walk_mode(mode));
            py::array_t<float> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(r.size())});
            std::copy(r.begin(), r.end(), out.mutable_data());
            return out;
        },
        py::arg("v1"), py::arg("v2"), py::arg("v3"), py::arg("mode"));

    m.def(
        "random_walk",
        [](const FloatArray& start, std::size_t steps, double step_scale, std::uint64_t seed) {
            Rng rng(seed);
            return from_latents(random_walk(to_latent(start), steps, step_scale, rng));
        },
        py::arg("start"), py::arg("steps"), py::arg("step_scale") = 0.1, py::arg("seed") = 0);

    m.def(
        "snr_db", [](const FloatArray& a, const FloatArray& b) { return snr_db(from_array(a), from_array(b)); },
        py::arg("signal"), py::arg("noisy"));

    m.def(
        "f_test",
        [](double std1, double std2, std::size_t n1, std::size_t n2, double alpha, bool two_sided) {
            return test_dict(f_test({n1, 0, std1}, {n2, 0, std2}, alpha, two_sided ? Tail::two_sided : Tail::upper));
        },
        py::arg("std1"), py::arg("std2"), py::arg("n1") = 101, py::arg("n2") = 101, py::arg("alpha") = 0.05,
        py::arg("two_sided") = false);

    m.def("f_quantile", &f_quantile, py::arg("p"), py::arg("d1"), py::arg("d2"));

    m.def(
        "analyze",
        [](const FloatArray& a, const FloatArray& b, double alpha) {
            const auto report = analyze(from_array(a), from_array(b), alpha);
            py::dict d;
            d["snr_db"] = report.snr_db;
            d["l1"] = report.l1;
            d["l2"] = report.l2;
            d["std1"] = report.first.stddev;
            d["std2"] = report.second.stddev;
            d["test"] = test_dict(report.test);
            return d;
        },
        py::arg("first"), py::arg("second"), py::arg("alpha") = 0.05, "Images as [n, H, W, 3] arrays in [0, 255]");

    m.def(
        "zscore",
        [](const FloatArray& images) {
            const auto imgs = from_array(images);
            const auto stats = channel_stats(imgs);
            std::vector<Image> out;
            for (const auto& img : imgs) out.push_back(normalize_zscore(img, stats));
            const std::size_t n = out.size(), h = out[0].height, w = out[0].width;
            py::array_t<float> arr({n, h, w, std::size_t{3}});
            auto r = arr.mutable_unchecked<4>();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x)
                        for (std::size_t c = 0; c < 3; ++c) r(i, y, x, c) = out[i].at(c, y, x);
            return py::make_tuple(arr, stats.mean, stats.stddev);
        },
        py::arg("images"), "Per-channel z-score over the batch; returns (normalized, mean, std)");
}
