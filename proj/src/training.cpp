#include "mdcgan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "mdcgan/ops.hpp"

namespace mdcgan {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const char* generator_loss_name(GeneratorLoss loss) {
    return loss == GeneratorLoss::non_saturating ? "non-saturating" : "saturating";
}

const char* batching_name(DiscriminatorBatching batching) {
    return batching == DiscriminatorBatching::split ? "split" : "combined";
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != value.size() || value.empty() || value[0] == '-')
        throw std::invalid_argument("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
    return static_cast<std::size_t>(v);
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != value.size() || value.empty())
        throw std::invalid_argument("config key '" + key + "': expected a number, got '" + value + "'");
    return v;
}

const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys{"epochs",     "batch_size", "learning_rate",    "beta1",
                                            "beta2",      "adam_epsilon", "latent_dim",     "seed",
                                            "checkpoint_every", "scale", "dropout",         "generator_loss",
                                            "batching"};
    return keys;
}

std::vector<float> constant(std::size_t n, float v) { return std::vector<float>(n, v); }

float mean_sigmoid(std::span<const float> logits) {
    double s = 0;
    for (float l : logits) s += 1.0 / (1.0 + std::exp(-static_cast<double>(l)));
    return logits.empty() ? 0.0f : static_cast<float>(s / static_cast<double>(logits.size()));
}

}  // namespace

// ---- config ----

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2 (batch norm needs two samples)");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("learning_rate must be positive");
    if (!(beta1 > 0 && beta1 < beta2 && beta2 < 1))
        throw std::invalid_argument("Adam betas must satisfy 0 < beta1 < beta2 < 1");
    if (!(adam_epsilon > 0)) throw std::invalid_argument("adam_epsilon must be positive");
    if (latent_dim < 1) throw std::invalid_argument("latent_dim must be at least 1");
    require_scale_factor(scale_factor);
    if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("dropout must lie in [0, 1)");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::echo() const {
    return {
        {"epochs", std::to_string(epochs)},
        {"batch_size", std::to_string(batch_size)},
        {"learning_rate", format_double(learning_rate)},
        {"beta1", format_double(beta1)},
        {"beta2", format_double(beta2)},
        {"adam_epsilon", format_double(adam_epsilon)},
        {"latent_dim", std::to_string(latent_dim)},
        {"seed", std::to_string(seed)},
        {"checkpoint_every", std::to_string(checkpoint_every)},
        {"scale", std::to_string(scale_factor)},
        {"dropout", format_double(dropout)},
        {"generator_loss", generator_loss_name(generator_loss)},
        {"batching", batching_name(batching)},
    };
}

TrainConfig TrainConfig::from_echo(const std::vector<std::pair<std::string, std::string>>& entries) {
    TrainConfig c;
    for (const auto& [key, value] : entries) {
        if (key == "epochs") c.epochs = parse_size(key, value);
        else if (key == "batch_size") c.batch_size = parse_size(key, value);
        else if (key == "learning_rate") c.learning_rate = parse_double(key, value);
        else if (key == "beta1") c.beta1 = parse_double(key, value);
        else if (key == "beta2") c.beta2 = parse_double(key, value);
        else if (key == "adam_epsilon") c.adam_epsilon = parse_double(key, value);
        else if (key == "latent_dim") c.latent_dim = parse_size(key, value);
        else if (key == "seed") c.seed = parse_size(key, value);
        else if (key == "checkpoint_every") c.checkpoint_every = parse_size(key, value);
        else if (key == "scale") c.scale_factor = parse_size(key, value);
        else if (key == "dropout") c.dropout = parse_double(key, value);
        else if (key == "generator_loss") {
            if (value == "non-saturating") c.generator_loss = GeneratorLoss::non_saturating;
            else if (value == "saturating") c.generator_loss = GeneratorLoss::saturating;
            else throw std::invalid_argument("unknown generator_loss '" + value + "'");
        } else if (key == "batching") {
            if (value == "split") c.batching = DiscriminatorBatching::split;
            else if (value == "combined") c.batching = DiscriminatorBatching::combined;
            else throw std::invalid_argument("unknown batching '" + value + "'");
        }
    }
    c.validate();
    return c;
}

// ---- Adam ----

template <class T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, std::uint64_t t,
                 const AdamHyper& hyper) {
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
        throw std::invalid_argument("adam_update: span sizes differ");
    if (t == 0) throw std::invalid_argument("adam_update: step counts from 1");
    const double b1 = hyper.beta1, b2 = hyper.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        const double mi = b1 * m[i] + (1.0 - b1) * g;
        const double vi = b2 * v[i] + (1.0 - b2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double step = hyper.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + hyper.epsilon);
        params[i] = static_cast<T>(params[i] - step);
    }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                 std::uint64_t, const AdamHyper&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                                  std::uint64_t, const AdamHyper&);

Adam::Adam(std::vector<std::pair<std::string, TensorF>> params, AdamHyper hyper)
    : hyper_(hyper), params_(std::move(params)) {
    for (const auto& [name, p] : params_) {
        m_.emplace_back(p.numel(), 0.0f);
        v_.emplace_back(p.numel(), 0.0f);
    }
}

void Adam::step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].second;
        if (!p.has_grad()) continue;
        adam_update<float>(p.data(), p.grad(), m_[i], v_[i], t_, hyper_);
    }
}

void Adam::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

OptimizerRecord Adam::state() const {
    OptimizerRecord r;
    r.step = t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& [name, p] = params_[i];
        r.moments.push_back({name + ".m", p.shape(), m_[i]});
        r.moments.push_back({name + ".v", p.shape(), v_[i]});
    }
    return r;
}

void Adam::load_state(const OptimizerRecord& record) {
    if (record.moments.size() != 2 * params_.size())
        throw std::runtime_error("optimizer state holds " + std::to_string(record.moments.size()) +
                                 " moment arrays, expected " + std::to_string(2 * params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& [name, p] = params_[i];
        const auto& m = record.moments[2 * i];
        const auto& v = record.moments[2 * i + 1];
        if (m.name != name + ".m" || v.name != name + ".v")
            throw std::runtime_error("optimizer state order mismatch at '" + name + "'");
        if (m.values.size() != p.numel() || v.values.size() != p.numel())
            throw std::runtime_error("optimizer state size mismatch at '" + name + "'");
        m_[i] = m.values;
        v_[i] = v.values;
    }
    t_ = record.step;
}

// ---- losses and steps ----

template <class T>
T bce_loss(std::span<const T> predictions, std::span<const T> labels) {
    if (predictions.size() != labels.size() || predictions.empty())
        throw std::invalid_argument("bce_loss: predictions and labels must be non-empty and equal length");
    const double eps = kProbabilityClamp;
    double s = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double p = std::clamp(static_cast<double>(predictions[i]), eps, 1.0 - eps);
        const double y = labels[i];
        s -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return static_cast<T>(s / static_cast<double>(predictions.size()));
}

template float bce_loss<float>(std::span<const float>, std::span<const float>);
template double bce_loss<double>(std::span<const double>, std::span<const double>);

TensorF sample_noise(std::size_t batch, std::size_t dim, Rng& rng) {
    TensorF z(Shape{batch, dim});
    for (auto& v : z.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return z;
}

DiscriminatorLosses discriminator_step(Model<float>& discriminator, Model<float>& generator, const TensorF& real_batch,
                                       Rng& rng, Adam& optimizer, DiscriminatorBatching batching) {
    const std::size_t b = real_batch.dim(0);
    TensorF fake;
    {
        NoGradGuard guard;
        const auto z = sample_noise(b, generator.spec().latent_dim(), rng);
        fake = generator_forward(generator, z, &rng).detach();
    }
    optimizer.zero_grad();
    const auto ones = constant(b, 1.0f);
    const auto zeros = constant(b, 0.0f);

    DiscriminatorLosses out;
    TensorF loss;
    if (batching == DiscriminatorBatching::split) {
        const auto real_logits = discriminator_logits(discriminator, real_batch, &rng);
        const auto fake_logits = discriminator_logits(discriminator, fake, &rng);
        const auto loss_real = bce_with_logits<float>(real_logits, ones);
        const auto loss_fake = bce_with_logits<float>(fake_logits, zeros);
        loss = scale(loss_real + loss_fake, 0.5f);
        out.loss_d_real = loss_real.item();
        out.loss_d_fake = loss_fake.item();
        out.d_real_mean = mean_sigmoid(real_logits.data());
        out.d_fake_mean = mean_sigmoid(fake_logits.data());
    } else {
        // One forward pass, so batch norm sees real and fake statistics
        // mixed; the loss is still scored per half.
        const auto logits = discriminator_logits(discriminator, concat(real_batch, fake), &rng);
        const auto loss_real = bce_with_logits<float>(slice(logits, 0, b), ones);
        const auto loss_fake = bce_with_logits<float>(slice(logits, b, 2 * b), zeros);
        loss = scale(loss_real + loss_fake, 0.5f);
        out.loss_d_real = loss_real.item();
        out.loss_d_fake = loss_fake.item();
        out.d_real_mean = mean_sigmoid(logits.data().subspan(0, b));
        out.d_fake_mean = mean_sigmoid(logits.data().subspan(b, b));
    }
    out.loss_d = loss.item();
    loss.backward();
    optimizer.step();
    return out;
}

float generator_step(Model<float>& discriminator, Model<float>& generator, const TensorF& z, Rng& rng,
                     Adam& optimizer, GeneratorLoss objective) {
    optimizer.zero_grad();
    const std::size_t b = z.dim(0);
    const auto fake = generator_forward(generator, z, &rng);
    const auto logits = discriminator_logits(discriminator, fake, &rng);
    TensorF loss;
    if (objective == GeneratorLoss::non_saturating) {
        loss = bce_with_logits<float>(logits, constant(b, 1.0f));
    } else {
        // mean log(1 - D(G(z))) == -BCE(D(G(z)), 0)
        loss = neg(bce_with_logits<float>(logits, constant(b, 0.0f)));
    }
    const float value = loss.item();
    loss.backward();
    optimizer.step();
    // The discriminator picked up gradients from this pass; they are not ours.
    discriminator.zero_grad();
    return value;
}

float generator_step(Model<float>& discriminator, Model<float>& generator, std::size_t batch, Rng& rng,
                     Adam& optimizer, GeneratorLoss objective) {
    const auto z = sample_noise(batch, generator.spec().latent_dim(), rng);
    return generator_step(discriminator, generator, z, rng, optimizer, objective);
}

// ---- metrics ----

bool MetricRow::finite() const {
    return std::isfinite(loss_g) && std::isfinite(loss_d) && std::isfinite(loss_d_real) &&
           std::isfinite(loss_d_fake) && std::isfinite(d_real_mean) && std::isfinite(d_fake_mean);
}

std::string format_metric_row(const MetricRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.epoch,
                  static_cast<unsigned long long>(r.step), r.loss_g, r.loss_d, r.loss_d_real, r.loss_d_fake,
                  r.d_real_mean, r.d_fake_mean);
    return buf;
}

TensorF Dataset::batch(std::span<const std::size_t> indices) const {
    const std::size_t n = image_size();
    std::vector<float> out;
    out.reserve(indices.size() * n);
    for (auto i : indices) {
        if (i >= count) throw std::out_of_range("dataset index " + std::to_string(i) + " out of range");
        out.insert(out.end(), values.begin() + static_cast<std::ptrdiff_t>(i * n),
                   values.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    }
    return TensorF(Shape{indices.size(), channels, height, width}, std::move(out));
}

// ---- tensor export ----

std::vector<NamedArray> export_tensors(const std::vector<std::pair<std::string, TensorF>>& tensors) {
    std::vector<NamedArray> out;
    out.reserve(tensors.size());
    for (const auto& [name, t] : tensors) {
        const auto d = t.data();
        out.push_back({name, t.shape(), std::vector<float>(d.begin(), d.end())});
    }
    return out;
}

void import_tensors(const std::vector<NamedArray>& arrays, const std::vector<std::pair<std::string, TensorF>>& tensors) {
    if (arrays.size() != tensors.size())
        throw std::runtime_error("checkpoint holds " + std::to_string(arrays.size()) + " tensors, model expects " +
                                 std::to_string(tensors.size()));
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        auto t = tensors[i].second;
        if (arrays[i].name != tensors[i].first)
            throw std::runtime_error("tensor name mismatch: checkpoint '" + arrays[i].name + "', model '" +
                                     tensors[i].first + "'");
        if (arrays[i].shape != t.shape())
            throw std::runtime_error("shape mismatch for '" + arrays[i].name + "': checkpoint " +
                                     to_string(arrays[i].shape) + ", model " + to_string(t.shape()));
        std::copy(arrays[i].values.begin(), arrays[i].values.end(), t.data().begin());
    }
}

// ---- trainer ----

Trainer::Trainer(TrainConfig config) : config_(std::move(config)) {
    config_.validate();
    build();
}

Trainer::Trainer(const Checkpoint& cp) : config_(TrainConfig::from_echo(cp.config)) {
    build();
    for (const auto& [k, v] : cp.config)
        if (!config_keys().count(k)) annotations_.emplace_back(k, v);
    import_tensors(cp.generator_parameters, generator_.named_parameters());
    import_tensors(cp.generator_buffers, generator_.named_buffers());
    import_tensors(cp.discriminator_parameters, discriminator_.named_parameters());
    import_tensors(cp.discriminator_buffers, discriminator_.named_buffers());
    generator_optimizer_.load_state(cp.generator_optimizer);
    discriminator_optimizer_.load_state(cp.discriminator_optimizer);
    rng_.set_state(cp.rng_state);
    epoch_ = cp.epoch;
    step_ = cp.step;
}

void Trainer::build() {
    rng_ = Rng(config_.seed);
    generator_ = Model<float>(generator_spec(config_.scale_factor, config_.latent_dim), rng_);
    discriminator_ = Model<float>(discriminator_spec(config_.scale_factor, config_.dropout), rng_);
    const AdamHyper hyper{config_.learning_rate, config_.beta1, config_.beta2, config_.adam_epsilon};
    generator_optimizer_ = Adam(generator_.named_parameters(), hyper);
    discriminator_optimizer_ = Adam(discriminator_.named_parameters(), hyper);
}

void Trainer::set_annotation(const std::string& key, const std::string& value) {
    if (config_keys().count(key)) throw std::invalid_argument("annotation key '" + key + "' is reserved");
    for (auto& [k, v] : annotations_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    annotations_.emplace_back(key, value);
}

std::vector<MetricRow> Trainer::run_epoch(const Dataset& data) {
    const std::size_t expected = image_extent_for_scale(config_.scale_factor);
    if (data.channels != 3 || data.height != expected || data.width != expected)
        throw std::invalid_argument("dataset images are " + std::to_string(data.channels) + "x" +
                                    std::to_string(data.height) + "x" + std::to_string(data.width) +
                                    ", the model expects 3x" + std::to_string(expected) + "x" +
                                    std::to_string(expected));
    if (data.count < 2) throw std::invalid_argument("dataset needs at least two images");

    generator_.train();
    discriminator_.train();
    std::vector<std::size_t> order(data.count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng_.shuffle(order);

    std::vector<MetricRow> rows;
    const std::size_t epoch = epoch_ + 1;
    for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
        const std::size_t end = std::min(order.size(), begin + config_.batch_size);
        // Batch norm cannot normalize a single sample; drop a trailing singleton.
        if (end - begin < 2) break;
        const auto real = data.batch(std::span<const std::size_t>(order).subspan(begin, end - begin));
        const auto d = discriminator_step(discriminator_, generator_, real, rng_, discriminator_optimizer_,
                                          config_.batching);
        const float g = generator_step(discriminator_, generator_, end - begin, rng_, generator_optimizer_,
                                       config_.generator_loss);
        MetricRow row{epoch, ++step_, g, d.loss_d, d.loss_d_real, d.loss_d_fake, d.d_real_mean, d.d_fake_mean};
        rows.push_back(row);
        if (!row.finite())
            throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(step_),
                                   {});
    }
    epoch_ = epoch;
    return rows;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint cp;
    cp.epoch = static_cast<std::uint32_t>(epoch_);
    cp.step = step_;
    cp.config = config_.echo();
    cp.config.insert(cp.config.end(), annotations_.begin(), annotations_.end());
    cp.generator_parameters = export_tensors(generator_.named_parameters());
    cp.generator_buffers = export_tensors(generator_.named_buffers());
    cp.discriminator_parameters = export_tensors(discriminator_.named_parameters());
    cp.discriminator_buffers = export_tensors(discriminator_.named_buffers());
    cp.generator_optimizer = generator_optimizer_.state();
    cp.discriminator_optimizer = discriminator_optimizer_.state();
    cp.rng_state = rng_.state();
    return cp;
}

std::string checkpoint_filename(std::size_t epoch) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "checkpoint_epoch%04zu.ckpt", epoch);
    return buf;
}

TrainResult train(const TrainConfig& config, const Dataset& data, const TrainOptions& options) {
    config.validate();
    std::optional<Trainer> trainer;
    if (options.resume_from) {
        Checkpoint cp = load_checkpoint(*options.resume_from);
        // The run length may be extended on resume; everything else comes from the checkpoint.
        for (auto& [k, v] : cp.config)
            if (k == "epochs") v = std::to_string(config.epochs);
        trainer.emplace(cp);
    } else {
        trainer.emplace(config);
    }
    for (const auto& [k, v] : options.annotations) trainer->set_annotation(k, v);

    const bool persist = !options.output_dir.empty();
    std::ofstream metrics;
    if (persist) {
        std::filesystem::create_directories(options.output_dir);
        const auto path = options.output_dir / "metrics.csv";
        const bool append = options.resume_from && std::filesystem::exists(path);
        metrics.open(path, append ? std::ios::app : std::ios::trunc);
        if (!metrics) throw std::runtime_error("cannot open " + path.string());
        if (!append) metrics << kMetricsHeader << '\n';
    }

    TrainResult result;
    const std::size_t every = trainer->config().checkpoint_every;
    const std::size_t total = trainer->config().epochs;
    while (trainer->epochs_completed() < total) {
        std::vector<MetricRow> rows;
        try {
            rows = trainer->run_epoch(data);
        } catch (const TrainingDiverged& e) {
            std::filesystem::path diagnostic;
            if (persist) {
                diagnostic = options.output_dir / "diverged.ckpt";
                save_checkpoint(trainer->checkpoint(), diagnostic);
            }
            throw TrainingDiverged(e.what(), diagnostic);
        }
        for (const auto& r : rows) {
            if (persist) metrics << format_metric_row(r) << '\n';
            result.metrics.push_back(r);
        }
        if (persist) metrics.flush();
        const std::size_t epoch = trainer->epochs_completed();
        if (persist && ((every > 0 && epoch % every == 0) || epoch == total)) {
            const auto path = options.output_dir / checkpoint_filename(epoch);
            save_checkpoint(trainer->checkpoint(), path);
            result.checkpoints.push_back(path);
        }
        if (options.on_epoch) options.on_epoch(*trainer, rows);
    }
    result.final_state = trainer->checkpoint();
    return result;
}

Model<float> generator_from_checkpoint(const Checkpoint& cp) {
    const auto config = TrainConfig::from_echo(cp.config);
    Model<float> g(generator_spec(config.scale_factor, config.latent_dim), std::uint64_t{0});
    import_tensors(cp.generator_parameters, g.named_parameters());
    import_tensors(cp.generator_buffers, g.named_buffers());
    g.eval();
    return g;
}

Model<float> discriminator_from_checkpoint(const Checkpoint& cp) {
    const auto config = TrainConfig::from_echo(cp.config);
    Model<float> d(discriminator_spec(config.scale_factor, config.dropout), std::uint64_t{0});
    import_tensors(cp.discriminator_parameters, d.named_parameters());
    import_tensors(cp.discriminator_buffers, d.named_buffers());
    d.eval();
    return d;
}

}  // namespace mdcgan
