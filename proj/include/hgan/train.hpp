#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgan/dataset.hpp"
#include "hgan/model.hpp"

namespace hgan {

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ModeMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ResumeMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scaled logistic ramp of the real→fake compositing weight.
struct CompositeSchedule {
    double start_epoch = 8.0;
    double mid_epoch = 10.0;
    double end_epoch = 12.0;
    double steepness = 0.0;  ///< per epoch; default ln(99)/2 gives beta(start)=0.01

    CompositeSchedule();
    /// The default ramp with every epoch (and the inverse steepness) multiplied by scale.
    static CompositeSchedule scaled(double scale);
    void validate() const;
};

/// 0 before start, 1 after end, logistic around mid in between.
double beta(const CompositeSchedule& schedule, double t);

struct TrainConfig {
    Variant variant = Variant::mcd;
    int depth = 8;
    bool leaky_encoder = false;
    int batch_size = 64;
    int total_epochs = 30;
    double base_lr = 2e-4;
    double decay_start_epoch = 20.0;
    double lambda_l1 = 100.0;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool backprop_through_cd3 = true;
    CompositeSchedule schedule{};
    std::uint64_t seed = 0;

    /// Variant flags (M, C, D, regression); initialised from variant.
    GeneratorTopology topology = GeneratorTopology::mutual;
    bool compositing = true;
    DiscriminatorMode discriminator_mode = DiscriminatorMode::joint;
    bool regression = false;

    static TrainConfig for_variant(Variant v);
    void apply_variant(Variant v);
    /// Rescales the compositing window and decay start proportionally to
    /// total_epochs (paper scale is 30 epochs).
    void scale_schedules_to_epochs();

    bool mutual() const { return topology == GeneratorTopology::mutual; }
    GeneratorSpec generator_spec() const;
    DiscriminatorSpec discriminator_spec() const;
    int discriminator_count() const;
    void validate() const;
};

/// base_lr until decay_start, then linear decay to 0 at total_epochs.
double learning_rate(const TrainConfig& config, double t);

struct LossTerm {
    std::string name;
    double value = 0.0;
    double weight = 1.0;
    double weighted() const { return weight * value; }
};

/// Binary cross-entropy of clamped sigmoid scores against a constant label,
/// averaged over the score map. Writes dL/dlogits (scaled by grad_scale) when
/// grad is non-null. Clamped scores contribute zero gradient.
template <class T>
double bce_with_logits(const Tensor<T>& logits, double label, Tensor<T>* grad = nullptr, double grad_scale = 1.0);

constexpr double kScoreClamp = 1e-7;

/// Discriminator score maps (logits) for real and fake inputs of one discriminator.
struct ScorePair {
    const Tensor<float>* real = nullptr;
    const Tensor<float>* fake = nullptr;
};

struct CganLoss {
    std::vector<LossTerm> discriminator_terms;  ///< ascended by the discriminators
    std::vector<LossTerm> generator_terms;      ///< non-saturating, descended by the generators
    double discriminator() const;
    double generator() const;
};

/// Four-term objective: D1 on (x, y1) vs (x, ŷ1) and D2 on (x, y2) vs (x, ŷ2).
CganLoss cgan_loss_separate(std::span<const ScorePair> pairs);
/// Two-term objective: one discriminator on (x, y1, y2) vs (x, ŷ1, ŷ2).
CganLoss cgan_loss_joint(std::span<const ScorePair> pairs);

/// Mean absolute difference; writes sign(fake - real) / N * grad_scale into grad.
template <class T>
double l1_loss(const Tensor<T>& fake, const Tensor<T>& real, Tensor<T>* grad = nullptr, double grad_scale = 1.0);

double total_generator_objective(double cgan_term, double l1_cd3, double l1_cd8, double lambda);

/// Adam with PyTorch's bias-corrected update.
class Adam {
public:
    Adam() = default;
    Adam(ParamRefs<float> params, double beta1, double beta2, double eps);

    void step(double lr);
    void zero_grad();
    std::uint64_t steps() const { return t_; }

    /// Moment buffers (m then v per parameter) for checkpointing.
    BufferRefs<float> state();
    void set_steps(std::uint64_t t) { t_ = t; }

private:
    ParamRefs<float> params_;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    std::vector<std::string> names_;
    double beta1_ = 0.5;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::uint64_t t_ = 0;
};

struct Batch {
    Tensor<float> x;   ///< Hoechst, signed range
    Tensor<float> y1;  ///< CD3
    Tensor<float> y2;  ///< CD8
};

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices);

struct StepReport {
    std::uint64_t step = 0;
    double epoch = 0.0;  ///< fractional epoch at which schedules were evaluated
    double beta = 0.0;
    double lr = 0.0;
    double lambda = 0.0;
    std::vector<LossTerm> discriminator_terms;
    std::vector<LossTerm> generator_terms;  ///< adversarial (weight 1) and L1 (weight lambda)
    double discriminator_loss = 0.0;
    double generator_loss = 0.0;
    double l1_cd3 = 0.0;
    double l1_cd8 = 0.0;

    /// Generator objective re-evaluated for another lambda from the recorded terms.
    double objective(double lambda) const;
};

/// Everything the optimisation loop owns: networks, optimisers, counters.
class Trainer {
public:
    explicit Trainer(TrainConfig config);
    // Optimisers hold pointers into the networks.
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    const TrainConfig& config() const { return config_; }
    Generator<float>& generator() { return g_; }
    std::vector<Discriminator<float>>& discriminators() { return ds_; }
    std::uint64_t step_count() const { return step_; }
    int epochs_done() const { return epochs_done_; }

    /// One discriminator update followed by one generator update at fractional epoch t.
    StepReport train_step(const Batch& batch, double t);

    /// Dropout seed of an inference call; fixed per (root seed, call index).
    std::uint64_t eval_dropout_seed(std::uint64_t index) const;

    std::string spec_hash() const;
    void save_checkpoint(const std::filesystem::path& path);
    /// Throws ResumeMismatch if the checkpoint was written for another architecture.
    void load_checkpoint(const std::filesystem::path& path);
    void set_epochs_done(int e) { epochs_done_ = e; }

private:
    TrainConfig config_;
    Generator<float> g_;
    std::vector<Discriminator<float>> ds_;
    Adam g_opt_;
    std::vector<Adam> d_opts_;
    std::uint64_t step_ = 0;
    int epochs_done_ = 0;
};

struct EpochSummary {
    int epoch = 0;  ///< 1-based index of the finished epoch
    std::size_t steps = 0;
    double discriminator_loss = 0.0;  ///< means over the epoch's steps
    double generator_loss = 0.0;
    double l1_cd3 = 0.0;
    double l1_cd8 = 0.0;
    double beta_end = 0.0;
    double lr_end = 0.0;
    std::filesystem::path checkpoint;
};

struct LoopOptions {
    std::filesystem::path checkpoint_dir;  ///< empty: no checkpoints
    std::filesystem::path metrics_path;    ///< empty: no per-step log
    int stop_after_epoch = -1;             ///< stop early (for resume tests); -1 runs to total_epochs
    std::function<void(const StepReport&)> on_step;
    std::function<void(const EpochSummary&, Trainer&)> on_epoch;
};

struct TrainResult {
    std::vector<EpochSummary> epochs;
    std::vector<std::filesystem::path> checkpoints;
};

/// Training configuration recorded in a checkpoint header.
TrainConfig checkpoint_config(const std::filesystem::path& path);

/// Order of training samples in an epoch; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// Trains from trainer.epochs_done() to total_epochs over the train split.
TrainResult train_loop(Trainer& trainer, const Dataset& data, const LoopOptions& options = {});

}  // namespace hgan
