#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lossmix/losses.hpp"
#include "lossmix/network.hpp"
#include "lossmix/rng.hpp"
#include "lossmix/sample.hpp"
#include "lossmix/signal.hpp"

namespace lossmix {

/// Training regimes. Erm trains on single samples; the mixup regimes pair
/// samples within each batch. The learnable regimes draw lam uniformly and
/// shape it with the neural mixing function; the fixed regimes draw lam
/// from Beta(alpha, alpha).
enum class Regime {
  Erm,
  LabelMixup,
  LossMixup,
  LearnableLabelMixup,
  LearnableLossMixup,
};

std::string to_string(Regime regime);
Regime regime_from_string(const std::string& name);
bool is_learnable(Regime regime);
bool is_mixup(Regime regime);
/// The four regimes compared by the ablation harness.
std::vector<Regime> ablation_regimes();

struct OptimizerConfig {
  enum class Kind { Sgd, Adam };
  Kind kind = Kind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;
};

/// Optimizer state: per-parameter moment buffers and a strictly increasing
/// step counter. Adam uses the standard bias-corrected update.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::size_t n_params);

  /// In-place parameter update. Throws NumericError on a non-finite
  /// gradient, naming the parameter through `name` when provided.
  void step(std::span<double> params, std::span<const double> grads,
            const std::function<std::string(std::size_t)>& name = {});

  long steps() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

/// Denoiser plus (for learnable regimes) the rho-MLP, flattened together:
/// denoiser parameters first, then MLP parameters.
struct Model {
  Denoiser denoiser;
  Network rho_mlp;
  double C = 5.0;
  bool has_mlp = false;
  bool detach_embedding = false;

  std::size_t param_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> theta);
  std::string param_name(std::size_t flat_index) const;
};

struct TrainConfig {
  Regime regime = Regime::Erm;
  LossKind loss = LossKind::Lsd;
  int epochs = 30;
  int batch_size = 16;
  std::uint64_t seed = 1;
  double beta_alpha = 1.0;    // Beta(alpha, alpha) for the fixed mixup regimes
  double mix_capacity = 5.0;  // C of the neural rho exponent
  int mlp_hidden = 32;
  int denoiser_hidden = 32;
  int bottleneck = 16;
  double l2_weight = 0.0;
  /// When set, phi is conditioned on a detached copy of the embedding, so
  /// no mixing-function gradient reaches the denoiser encoder.
  bool detach_phi_embedding = false;
  OptimizerConfig optimizer{};
  DatasetConfig dataset{};
  /// Test hook: fixes every lambda draw (mixup regimes only).
  std::optional<double> forced_lambda;

  void validate() const;
};

/// Freshly initialized model for the config (seeded, deterministic).
Model make_model(const TrainConfig& cfg, std::size_t bins);

/// Model parameters staged on a tape; gradients() concatenates in
/// Model::flatten order.
struct TapedModel {
  TapedNetwork denoiser;
  TapedNetwork mlp;  // staged only when has_mlp
  std::size_t bottleneck_layer = 1;
  double C = 5.0;
  bool has_mlp = false;
  bool detach_embedding = false;

  std::vector<double> gradients(const Tape& tape) const;
};

TapedModel stage_model(Tape& tape, const Model& model);

/// Per-unit training loss for a regime: Erm uses pair_j alone; the mixup
/// regimes mix pair_j with pair_k at lam. Shared by the training loop and
/// the gradient-check harness.
Value regime_unit_loss(Tape& tape, const TapedModel& model, Regime regime,
                       LossKind kind, const SamplePair& pair_j,
                       const SamplePair& pair_k, double lam);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_lsd = 0.0;
  bool has_phi = false;
  /// Mean phi at lam = 0.25 / 0.5 / 0.75 over validation embeddings.
  std::array<double, 3> phi_at_quartiles{0.25, 0.5, 0.75};
  /// Wall-clock time; kept out of serialized reports so a (config, seed)
  /// pair fully determines the emitted bytes.
  double wall_ms = 0.0;
};

struct TrainingReport {
  Regime regime = Regime::Erm;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  double final_train_loss = 0.0;
  double final_val_lsd = 0.0;
  double wall_ms_total = 0.0;
};

/// One full pass over the training split: shuffle, batch, pair, update.
/// Mixup regimes pair consecutive samples of the shuffled batch; a leftover
/// odd sample trains via Erm. One lambda per pair.
EpochRecord train_epoch(Model& model, Optimizer& opt, const TrainConfig& cfg,
                        std::span<const SamplePair> train, Rng& rng);

/// Mixing-free mean LSD over a split (deterministic; no virtual samples at
/// evaluation). Throws std::invalid_argument on an empty split.
double evaluate(const Denoiser& denoiser, std::span<const SamplePair> split);

/// Mean phi at the lambda quartiles over up to `max_samples` embeddings of
/// the split (learnable models).
std::array<double, 3> mean_phi_at_quartiles(const Model& model,
                                            std::span<const SamplePair> split,
                                            std::size_t max_samples = 8);

/// Full training run. When `final_model` is non-null it receives the
/// trained parameters.
TrainingReport train(const TrainConfig& cfg, const Dataset& dataset,
                     Model* final_model = nullptr);

struct AblationRow {
  Regime regime = Regime::Erm;
  std::uint64_t seed = 0;
  double final_val_lsd = 0.0;
};

struct AblationSummary {
  Regime regime = Regime::Erm;
  double mean = 0.0;
  double stddev = 0.0;
};

/// Four regimes x n_seeds cells. Every cell shares the dataset (identical
/// dataset seed); training seeds are base.seed + k. Regime ordering in the
/// results is reported, not asserted.
struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;
};

AblationResult run_ablation(const TrainConfig& base, int n_seeds);

}  // namespace lossmix
