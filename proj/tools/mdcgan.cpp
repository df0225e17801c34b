// mdcgan command-line tool: preprocess, train, generate, walk, analyze, verify-arch.
//
// Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <array>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdcgan/analysis.hpp"
#include "mdcgan/architecture.hpp"
#include "mdcgan/checkpoint.hpp"
#include "mdcgan/image_io.hpp"
#include "mdcgan/latent.hpp"
#include "mdcgan/preprocessing.hpp"
#include "mdcgan/training.hpp"

namespace fs = std::filesystem;
using namespace mdcgan;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Validation failures found before any work starts are usage errors.
template <class F>
auto usage_checked(F&& f) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

struct Globals {
    std::uint64_t seed = 0;
    std::size_t scale = 1;
    bool scale_given = false;
};

std::string numbered(const char* prefix, std::size_t i, const std::string& suffix = ".png") {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
    return buf + suffix;
}

std::vector<Rgb> palette_prefix(std::size_t n) {
    const SyntheticSpec defaults;
    if (n < 1 || n > defaults.palette.size())
        throw UsageError("--palette-size must be between 1 and " + std::to_string(defaults.palette.size()));
    return {defaults.palette.begin(), defaults.palette.begin() + static_cast<std::ptrdiff_t>(n)};
}

void check_scale(const Globals& g, std::size_t stored, const std::string& what) {
    if (g.scale_given && g.scale != stored)
        throw UsageError("--scale " + std::to_string(g.scale) + " does not match " + what + " (scale " +
                         std::to_string(stored) + ")");
}

std::vector<LatentVector> noise_points(std::size_t count, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    const TensorF z = sample_noise(count, dim, rng);
    std::vector<LatentVector> points(count);
    for (std::size_t i = 0; i < count; ++i)
        points[i].assign(z.data().begin() + static_cast<std::ptrdiff_t>(i * dim),
                         z.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    return points;
}

// ---- preprocess

struct PreprocessArgs {
    std::string input, output;
    std::size_t extent = 0, count = 0, synthetic = 0, palette = 4;
    double sigma = 0.001;
    std::size_t median_window = 3;
    bool no_gaussian = false, no_median = false;
};

int run_preprocess(const Globals& g, const PreprocessArgs& a) {
    if (a.input.empty() == (a.synthetic == 0)) throw UsageError("preprocess needs exactly one of --input or --synthetic");
    PipelineOptions opts;
    opts.extent = a.extent ? a.extent : usage_checked([&] { return image_extent_for_scale(g.scale); });
    opts.gaussian = !a.no_gaussian;
    opts.gaussian_sigma = a.sigma;
    opts.median = !a.no_median;
    opts.median_window = a.median_window;
    usage_checked([&] { opts.validate(); });

    SyntheticSpec spec;
    if (a.synthetic) {
        spec.palette = palette_prefix(a.palette);
        spec.extent = opts.extent;
        spec.count = a.synthetic;
        spec.seed = g.seed;
        usage_checked([&] { spec.validate(); });
    }

    fs::create_directories(a.output);
    std::vector<Image> written;
    auto emit = [&](const Image& source, const std::string& name) {
        Image img = preprocess_image(source, opts);
        for (auto& v : img.values) v = to_byte(v);  // what the PNG will hold
        write_png(fs::path(a.output) / name, img);
        written.push_back(std::move(img));
    };

    if (a.synthetic) {
        const auto images = make_synthetic_dataset(spec);
        for (std::size_t i = 0; i < images.size(); ++i) emit(images[i], numbered("synthetic_", i));
    } else {
        const auto files = sample_image_paths(a.input, a.count, g.seed);
        for (std::size_t i = 0; i < files.size(); ++i) {
            try {
                emit(read_image(files[i]), numbered("", i, "_" + files[i].stem().string() + ".png"));
            } catch (const ImageIoError& e) {
                std::cerr << "warning: skipping " << files[i].string() << ": " << e.what() << '\n';
            }
        }
        if (written.empty()) throw std::runtime_error("no image in " + a.input + " could be processed");
    }
    const auto stats = channel_stats(written);
    stats.save(fs::path(a.output) / "stats.json");
    std::cout << "wrote " << written.size() << " images at " << opts.extent << "x" << opts.extent << " to "
              << a.output << '\n';
    return 0;
}

// ---- train

struct TrainArgs {
    TrainConfig config;
    std::string data, output = "run", resume;
    std::size_t synthetic = 0, palette = 4, count = 0;
    std::string generator_loss = "non-saturating", batching = "split", normalization = "affine";
    bool filters = false;
};

struct DataSource {
    std::string dir;
    std::size_t synthetic = 0, palette = 4, count = 0;
    bool filters = false;
    Normalization normalization = Normalization::affine;
};

PreparedDataset load_training_data(const DataSource& src, std::size_t scale, std::uint64_t seed) {
    PipelineOptions opts;
    opts.extent = image_extent_for_scale(scale);
    opts.gaussian = opts.median = src.filters;
    opts.normalization = src.normalization;
    std::vector<Image> images;
    if (src.synthetic) {
        SyntheticSpec spec;
        spec.palette = palette_prefix(src.palette);
        spec.extent = opts.extent;
        spec.count = src.synthetic;
        spec.seed = seed;
        images = make_synthetic_dataset(spec);
    } else {
        images = load_image_directory(src.dir, src.count, seed);
    }
    return prepare_dataset(images, opts);
}

int run_train(const Globals& g, const TrainArgs& a, bool epochs_given) {
    TrainConfig config = a.config;
    DataSource src;
    src.dir = a.data;
    src.synthetic = a.synthetic;
    src.palette = a.palette;
    src.count = a.count;
    src.filters = a.filters;
    src.normalization = a.normalization == "zscore" ? Normalization::zscore : Normalization::affine;
    std::optional<fs::path> resume;

    if (!a.resume.empty()) {
        resume = a.resume;
        const Checkpoint cp = load_checkpoint(a.resume);
        const TrainConfig stored = TrainConfig::from_echo(cp.config);
        check_scale(g, stored.scale_factor, a.resume);
        const std::size_t epochs = epochs_given ? config.epochs : stored.epochs;
        config = stored;
        config.epochs = epochs;
        // the data come from the run being resumed unless given again
        if (src.dir.empty() && src.synthetic == 0) {
            src.dir = cp.config_value("data_dir");
            src.synthetic = std::stoul(cp.config_value("synthetic", "0"));
            src.palette = std::stoul(cp.config_value("palette_size", "4"));
            src.count = std::stoul(cp.config_value("sample_count", "0"));
            src.filters = cp.config_value("filters", "false") == "true";
        }
        src.normalization =
            cp.config_value("normalization", "affine") == "zscore" ? Normalization::zscore : Normalization::affine;
        if (config.epochs < cp.epoch)
            throw UsageError("--epochs " + std::to_string(config.epochs) + " is below the " +
                             std::to_string(cp.epoch) + " epochs already in " + a.resume);
    } else {
        config.seed = g.seed;
        config.scale_factor = g.scale;
        config.generator_loss =
            a.generator_loss == "saturating" ? GeneratorLoss::saturating : GeneratorLoss::non_saturating;
        config.batching = a.batching == "combined" ? DiscriminatorBatching::combined : DiscriminatorBatching::split;
    }
    usage_checked([&] { config.validate(); });
    if (src.dir.empty() && src.synthetic == 0) throw UsageError("train needs --data DIR or --synthetic N");
    if (!src.dir.empty() && src.synthetic) throw UsageError("--data and --synthetic are mutually exclusive");
    if (!src.dir.empty() && !fs::is_directory(src.dir)) throw UsageError("dataset directory not found: " + src.dir);
    if (src.synthetic) palette_prefix(src.palette);

    const auto prepared = load_training_data(src, config.scale_factor, config.seed);
    fs::create_directories(a.output);
    prepared.stats.save(fs::path(a.output) / "stats.json");

    TrainOptions options;
    options.output_dir = a.output;
    options.resume_from = resume;
    options.annotations = {
        {"data_dir", src.dir},
        {"synthetic", std::to_string(src.synthetic)},
        {"palette_size", std::to_string(src.palette)},
        {"sample_count", std::to_string(src.count)},
        {"filters", src.filters ? "true" : "false"},
    };
    for (auto& kv : normalization_annotations(src.normalization, prepared.stats)) options.annotations.push_back(kv);
    options.on_epoch = [](const Trainer& t, const std::vector<MetricRow>& rows) {
        double ld = 0, lg = 0, dr = 0, df = 0;
        for (const auto& r : rows) {
            ld += r.loss_d;
            lg += r.loss_g;
            dr += r.d_real_mean;
            df += r.d_fake_mean;
        }
        const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
        std::printf("epoch %zu/%zu  step %" PRIu64 "  loss_d %.4f  loss_g %.4f  D(x) %.3f  D(G(z)) %.3f\n",
                    t.epochs_completed(), t.config().epochs, t.steps_completed(), ld / n, lg / n, dr / n, df / n);
        std::fflush(stdout);
    };

    std::cout << "training on " << prepared.data.count << " images at " << prepared.data.height << "x"
              << prepared.data.width << '\n';
    const auto result = train(config, prepared.data, options);
    if (!result.checkpoints.empty()) std::cout << "checkpoint: " << result.checkpoints.back().string() << '\n';
    return 0;
}

// ---- generate

struct GenerateArgs {
    std::string checkpoint, output;
    std::size_t count = 16;
};

int run_generate(const Globals& g, const GenerateArgs& a) {
    if (a.count == 0) throw UsageError("--count must be positive");
    const Checkpoint cp = load_checkpoint(a.checkpoint);
    check_scale(g, TrainConfig::from_echo(cp.config).scale_factor, a.checkpoint);
    auto generator = generator_from_checkpoint(cp);
    const auto points = noise_points(a.count, generator.spec().latent_dim(), g.seed);
    const auto images = decode_latents(generator, points, display_map_for(cp));
    fs::create_directories(a.output);
    for (std::size_t i = 0; i < images.size(); ++i) write_png(fs::path(a.output) / numbered("gen_", i), images[i]);
    std::cout << "wrote " << images.size() << " images to " << a.output << '\n';
    return 0;
}

// ---- walk

struct WalkArgs {
    std::string checkpoint, output, anchors, mode = "random";
    std::size_t steps = 8;
    double step_scale = 0.1;
};

int run_walk(const Globals& g, const WalkArgs& a) {
    const WalkMode mode = usage_checked([&] { return parse_walk_mode(a.mode); });
    WalkPlan plan = usage_checked([&] { return make_walk_plan(mode, kLatentDim, g.seed, a.steps, a.step_scale); });
    if (!a.anchors.empty()) plan.anchors = usage_checked([&] { return load_anchors(a.anchors); });

    const Checkpoint cp = load_checkpoint(a.checkpoint);
    check_scale(g, TrainConfig::from_echo(cp.config).scale_factor, a.checkpoint);
    auto generator = generator_from_checkpoint(cp);
    usage_checked([&] { plan.validate(generator.spec().latent_dim()); });

    const auto out = render_walk(generator, plan, a.output, display_map_for(cp));
    std::cout << "wrote " << out.tiles.size() << " tiles to " << (fs::path(a.output) / "grid.png").string() << '\n';
    return 0;
}

// ---- analyze

struct AnalyzeArgs {
    std::string first, second, csv;
    std::size_t count = 0;
    double alpha = 0.05;
    bool two_sided = false;
};

inline constexpr std::size_t kDefaultSampleCount = 101;

std::vector<Image> load_batch(const std::string& path, std::size_t count, std::uint64_t seed) {
    if (fs::is_directory(path)) return load_image_directory(path, count, seed);
    // a checkpoint: decode a seeded noise batch, the same one for either input
    const Checkpoint cp = load_checkpoint(path);
    auto generator = generator_from_checkpoint(cp);
    const auto points = noise_points(count ? count : kDefaultSampleCount, generator.spec().latent_dim(), seed);
    return decode_latents(generator, points, display_map_for(cp));
}

int run_analyze(const Globals& g, const AnalyzeArgs& a) {
    if (!(a.alpha > 0 && a.alpha < 1)) throw UsageError("--alpha must lie in (0, 1)");
    const auto first = load_batch(a.first, a.count, g.seed);
    const auto second = load_batch(a.second, a.count, g.seed);
    const auto report = analyze(first, second, a.alpha, a.two_sided ? Tail::two_sided : Tail::upper);
    std::cout << report.to_text();
    if (!a.csv.empty()) {
        const bool fresh = !fs::exists(a.csv) || fs::file_size(a.csv) == 0;
        std::ofstream out(a.csv, std::ios::app);
        if (!out) throw std::runtime_error("cannot write " + a.csv);
        if (fresh) out << AnalysisReport::csv_header() << '\n';
        out << report.to_csv_row() << '\n';
    }
    return 0;  // retain or reject, the decision is part of the report
}

// ---- verify-arch

int run_verify_arch(const Globals& g) {
    if (g.scale_given && g.scale != 1) throw UsageError("verify-arch compares the full-size (scale 1) networks only");
    bool ok = true;
    for (const auto& spec : {discriminator_spec(1), generator_spec(1)}) {
        const auto report = verify_architecture(spec);
        std::cout << report.render() << '\n';
        ok = ok && report.all_match();
    }
    std::cout << (ok ? "architecture matches the reference tables\n" : "architecture MISMATCH\n");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mdcgan: train and explore a modified DCGAN for paintings"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "INI file; top-level keys set global flags, [command] sections set command flags");
    app.allow_config_extras(CLI::config_extras_mode::error);

    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    auto* scale_opt = app.add_option("--scale", g.scale, "Scale factor: image extent is 256/scale")
                          ->check(CLI::IsMember({1, 2, 4, 8}))
                          ->capture_default_str();

    PreprocessArgs pa;
    auto* pre = app.add_subcommand("preprocess", "Resize and filter a folder of images; write PNGs and stats.json");
    pre->add_option("--input", pa.input, "Source folder (PNG/JPEG)")->check(CLI::ExistingDirectory);
    pre->add_option("--synthetic", pa.synthetic, "Generate N synthetic images instead of reading --input");
    pre->add_option("--palette-size", pa.palette, "Colours used by --synthetic")->capture_default_str();
    pre->add_option("--output", pa.output, "Destination folder")->required();
    pre->add_option("--extent", pa.extent, "Output size in pixels (default 256/scale)");
    pre->add_option("--count", pa.count, "Sample this many files (0 = all)")->capture_default_str();
    pre->add_option("--sigma", pa.sigma, "Gaussian sigma")->capture_default_str();
    pre->add_option("--median-window", pa.median_window, "Median window (odd)")->capture_default_str();
    pre->add_flag("--no-gaussian", pa.no_gaussian, "Skip the Gaussian filter");
    pre->add_flag("--no-median", pa.no_median, "Skip the median filter");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train a generator/discriminator pair");
    tr->add_option("--data", ta.data, "Folder of (preprocessed) training images");
    tr->add_option("--synthetic", ta.synthetic, "Train on N synthetic images");
    tr->add_option("--palette-size", ta.palette, "Colours used by --synthetic")->capture_default_str();
    tr->add_option("--count", ta.count, "Sample this many files from --data (0 = all)")->capture_default_str();
    tr->add_flag("--filters", ta.filters, "Apply the Gaussian and median filters while loading");
    tr->add_option("--normalization", ta.normalization, "Input mapping")
        ->check(CLI::IsMember({"affine", "zscore"}))
        ->capture_default_str();
    tr->add_option("--output", ta.output, "Run folder for metrics.csv, stats.json and checkpoints")
        ->capture_default_str();
    auto* epochs_opt = tr->add_option("--epochs", ta.config.epochs)->capture_default_str();
    tr->add_option("--batch-size", ta.config.batch_size)->capture_default_str();
    tr->add_option("--lr", ta.config.learning_rate)->capture_default_str();
    tr->add_option("--beta1", ta.config.beta1)->capture_default_str();
    tr->add_option("--beta2", ta.config.beta2)->capture_default_str();
    tr->add_option("--adam-epsilon", ta.config.adam_epsilon)->capture_default_str();
    tr->add_option("--dropout", ta.config.dropout, "Discriminator dropout")->capture_default_str();
    tr->add_option("--checkpoint-every", ta.config.checkpoint_every, "Epochs between checkpoints (0 = last only)")
        ->capture_default_str();
    tr->add_option("--generator-loss", ta.generator_loss)
        ->check(CLI::IsMember({"non-saturating", "saturating"}))
        ->capture_default_str();
    tr->add_option("--batching", ta.batching, "Discriminator batches: split real/fake or one combined batch")
        ->check(CLI::IsMember({"split", "combined"}))
        ->capture_default_str();
    tr->add_option("--resume", ta.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Decode seeded noise into PNGs");
    gen->add_option("--checkpoint", ga.checkpoint)->required()->check(CLI::ExistingFile);
    gen->add_option("--count", ga.count)->capture_default_str();
    gen->add_option("--output", ga.output)->required();

    WalkArgs wa;
    auto* walk = app.add_subcommand("walk", "Latent arithmetic or a random walk, rendered as a grid");
    walk->add_option("--checkpoint", wa.checkpoint)->required()->check(CLI::ExistingFile);
    walk->add_option("--mode", wa.mode)
        ->check(CLI::IsMember({"eq6", "eq7", "eq8", "random", "walk"}))
        ->capture_default_str();
    walk->add_option("--steps", wa.steps, "Random walk steps")->capture_default_str();
    walk->add_option("--scale-step", wa.step_scale, "Random walk step scale")->capture_default_str();
    walk->add_option("--anchors", wa.anchors, "Text file of anchor vectors, one per line")->check(CLI::ExistingFile);
    walk->add_option("--output", wa.output)->required();

    AnalyzeArgs aa;
    auto* an = app.add_subcommand("analyze", "SNR, distances and F-test between two image sets");
    an->add_option("--first", aa.first, "Image folder or checkpoint")->required()->check(CLI::ExistingPath);
    an->add_option("--second", aa.second, "Image folder or checkpoint")->required()->check(CLI::ExistingPath);
    an->add_option("--count", aa.count, "Images per set (0 = all files, or 101 decoded samples)");
    an->add_option("--alpha", aa.alpha)->capture_default_str();
    an->add_flag("--two-sided", aa.two_sided, "Two-sided F-test instead of upper tail");
    an->add_option("--csv", aa.csv, "Append the report as a CSV row");

    auto* va = app.add_subcommand("verify-arch", "Compare the built networks with the reference layer tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    g.scale_given = scale_opt->count() > 0;

    try {
        if (*pre) return run_preprocess(g, pa);
        if (*tr) return run_train(g, ta, epochs_opt->count() > 0);
        if (*gen) return run_generate(g, ga);
        if (*walk) return run_walk(g, wa);
        if (*an) return run_analyze(g, aa);
        if (*va) return run_verify_arch(g);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\nRun with --help for more information.\n";
        return 2;
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: " << e.what();
        if (!e.diagnostic_checkpoint().empty()) std::cerr << " (state saved to " << e.diagnostic_checkpoint() << ")";
        std::cerr << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
