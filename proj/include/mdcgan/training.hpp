#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mdcgan/checkpoint.hpp"
#include "mdcgan/model.hpp"

namespace mdcgan {

/// Which generator objective to minimize. `non_saturating` is
/// BCE(D(G(z)), 1); `saturating` is mean log(1 - D(G(z))).
enum class GeneratorLoss { non_saturating, saturating };

/// `split` scores real and fake batches in separate forward passes and
/// averages the two losses; `combined` concatenates them into one batch.
enum class DiscriminatorBatching { split, combined };

struct TrainConfig {
    std::size_t epochs = 1000;
    std::size_t batch_size = 32;
    double learning_rate = 0.002;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t latent_dim = kLatentDim;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;  // 0: only the final epoch
    std::size_t scale_factor = 1;
    double dropout = kDefaultDropout;
    GeneratorLoss generator_loss = GeneratorLoss::non_saturating;
    DiscriminatorBatching batching = DiscriminatorBatching::split;

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;

    std::vector<std::pair<std::string, std::string>> echo() const;
    static TrainConfig from_echo(const std::vector<std::pair<std::string, std::string>>& entries);
};

struct AdamHyper {
    double learning_rate = 0.002;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One bias-corrected Adam update for step `t` (1-based) over flat spans.
template <class T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, std::uint64_t t,
                 const AdamHyper& hyper);

/// First/second moments for a list of parameters plus the step counter.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<std::pair<std::string, TensorF>> params, AdamHyper hyper);

    /// t += 1, then updates every parameter that holds a gradient.
    void step();
    void zero_grad();

    std::uint64_t t() const { return t_; }
    const AdamHyper& hyper() const { return hyper_; }

    OptimizerRecord state() const;
    void load_state(const OptimizerRecord& record);

private:
    AdamHyper hyper_;
    std::vector<std::pair<std::string, TensorF>> params_;
    std::vector<std::vector<float>> m_, v_;
    std::uint64_t t_ = 0;
};

/// Mean binary cross-entropy of probabilities against {0,1} labels, with
/// predictions clamped to [1e-7, 1 - 1e-7].
template <class T>
T bce_loss(std::span<const T> predictions, std::span<const T> labels);

/// Entries i.i.d. Uniform(-1, 1).
TensorF sample_noise(std::size_t batch, std::size_t dim, Rng& rng);

struct DiscriminatorLosses {
    float loss_d = 0.0f;
    float loss_d_real = 0.0f;
    float loss_d_fake = 0.0f;
    float d_real_mean = 0.0f;
    float d_fake_mean = 0.0f;
};

/// One discriminator update. Real images are labelled 1, generated ones 0;
/// the generator runs without recording a graph and is not updated.
DiscriminatorLosses discriminator_step(Model<float>& discriminator, Model<float>& generator, const TensorF& real_batch,
                                       Rng& rng, Adam& optimizer,
                                       DiscriminatorBatching batching = DiscriminatorBatching::split);

/// One generator update on a fresh noise batch of `batch` rows. Only the
/// generator's parameters move.
float generator_step(Model<float>& discriminator, Model<float>& generator, std::size_t batch, Rng& rng,
                     Adam& optimizer, GeneratorLoss objective = GeneratorLoss::non_saturating);

/// Same, with a caller-supplied latent batch.
float generator_step(Model<float>& discriminator, Model<float>& generator, const TensorF& z, Rng& rng,
                     Adam& optimizer, GeneratorLoss objective = GeneratorLoss::non_saturating);

struct MetricRow {
    std::size_t epoch = 0;  // 1-based
    std::uint64_t step = 0; // 1-based, global
    float loss_g = 0.0f;
    float loss_d = 0.0f;
    float loss_d_real = 0.0f;
    float loss_d_fake = 0.0f;
    float d_real_mean = 0.0f;
    float d_fake_mean = 0.0f;

    bool finite() const;
};

inline constexpr const char* kMetricsHeader =
    "epoch,step,loss_g,loss_d,loss_d_real,loss_d_fake,d_real_mean,d_fake_mean";
std::string format_metric_row(const MetricRow& row);

/// A batch of images already mapped into the generator's output range,
/// stored as [count, 3, extent, extent].
struct Dataset {
    std::size_t count = 0;
    std::size_t channels = 3;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    std::size_t image_size() const { return channels * height * width; }
    TensorF batch(std::span<const std::size_t> indices) const;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, std::filesystem::path diagnostic)
        : std::runtime_error(what), diagnostic_(std::move(diagnostic)) {}
    const std::filesystem::path& diagnostic_checkpoint() const { return diagnostic_; }

private:
    std::filesystem::path diagnostic_;
};

/// Owns both networks, their optimizers and the random stream.
class Trainer {
public:
    explicit Trainer(TrainConfig config);
    /// Resumes exactly where `checkpoint` left off.
    explicit Trainer(const Checkpoint& checkpoint);

    const TrainConfig& config() const { return config_; }
    Model<float>& generator() { return generator_; }
    Model<float>& discriminator() { return discriminator_; }
    Rng& rng() { return rng_; }
    std::size_t epochs_completed() const { return epoch_; }
    std::uint64_t steps_completed() const { return step_; }

    /// Extra key/value pairs written into every checkpoint's config echo.
    void set_annotation(const std::string& key, const std::string& value);
    std::vector<std::pair<std::string, std::string>> annotations() const { return annotations_; }

    /// One pass over a seeded shuffle of `data`: per batch, one
    /// discriminator step then one generator step.
    std::vector<MetricRow> run_epoch(const Dataset& data);

    Checkpoint checkpoint() const;

private:
    void build();

    TrainConfig config_;
    Model<float> generator_;
    Model<float> discriminator_;
    Adam generator_optimizer_;
    Adam discriminator_optimizer_;
    Rng rng_;
    std::size_t epoch_ = 0;
    std::uint64_t step_ = 0;
    std::vector<std::pair<std::string, std::string>> annotations_;
};

struct TrainOptions {
    /// Where metrics.csv and checkpoints go; empty keeps everything in memory.
    std::filesystem::path output_dir;
    std::optional<std::filesystem::path> resume_from;
    std::vector<std::pair<std::string, std::string>> annotations;
    /// Called after each epoch with the rows produced in that epoch.
    std::function<void(const Trainer&, const std::vector<MetricRow>&)> on_epoch;
};

struct TrainResult {
    std::vector<MetricRow> metrics;
    std::vector<std::filesystem::path> checkpoints;
    Checkpoint final_state;
};

/// Runs until config.epochs epochs are complete (counting epochs already
/// in a resumed checkpoint).
TrainResult train(const TrainConfig& config, const Dataset& data, const TrainOptions& options = {});

std::string checkpoint_filename(std::size_t epoch);

/// Rebuilds the generator stored in a checkpoint.
Model<float> generator_from_checkpoint(const Checkpoint& checkpoint);
Model<float> discriminator_from_checkpoint(const Checkpoint& checkpoint);

std::vector<NamedArray> export_tensors(const std::vector<std::pair<std::string, TensorF>>& tensors);
/// Copies values into existing tensors; names and shapes must agree.
void import_tensors(const std::vector<NamedArray>& arrays, const std::vector<std::pair<std::string, TensorF>>& tensors);

}  // namespace mdcgan
