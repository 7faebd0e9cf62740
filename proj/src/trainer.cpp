#include "lossmix/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lossmix/errors.hpp"
#include "lossmix/mixing.hpp"

namespace lossmix {

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::Erm:
      return "erm";
    case Regime::LabelMixup:
      return "label-mixup";
    case Regime::LossMixup:
      return "loss-mixup";
    case Regime::LearnableLabelMixup:
      return "learnable-label-mixup";
    case Regime::LearnableLossMixup:
      return "learnable-loss-mixup";
  }
  return "?";
}

Regime regime_from_string(const std::string& name) {
  for (Regime r : {Regime::Erm, Regime::LabelMixup, Regime::LossMixup,
                   Regime::LearnableLabelMixup, Regime::LearnableLossMixup}) {
    if (to_string(r) == name) return r;
  }
  throw std::invalid_argument(
      "unknown regime '" + name +
      "' (expected erm, label-mixup, loss-mixup, learnable-label-mixup or "
      "learnable-loss-mixup)");
}

bool is_learnable(Regime regime) {
  return regime == Regime::LearnableLabelMixup ||
         regime == Regime::LearnableLossMixup;
}

bool is_mixup(Regime regime) { return regime != Regime::Erm; }

std::vector<Regime> ablation_regimes() {
  return {Regime::Erm, Regime::LearnableLabelMixup, Regime::LossMixup,
          Regime::LearnableLossMixup};
}

Optimizer::Optimizer(OptimizerConfig cfg, std::size_t n_params)
    : cfg_(cfg), m_(n_params, 0.0), v_(n_params, 0.0) {}

void Optimizer::step(std::span<double> params, std::span<const double> grads,
                     const std::function<std::string(std::size_t)>& name) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Optimizer::step: size mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError(
          "non-finite gradient for parameter '" +
          (name ? name(i) : "#" + std::to_string(i)) + "'");
    }
  }
  ++t_;
  if (cfg_.kind == OptimizerConfig::Kind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i] -= cfg_.learning_rate * grads[i];
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
  }
}

std::size_t Model::param_count() const {
  return denoiser.net.param_count() + (has_mlp ? rho_mlp.param_count() : 0);
}

std::vector<double> Model::flatten() const {
  std::vector<double> theta = denoiser.net.flatten();
  if (has_mlp) {
    const std::vector<double> mlp = rho_mlp.flatten();
    theta.insert(theta.end(), mlp.begin(), mlp.end());
  }
  return theta;
}

void Model::unflatten(std::span<const double> theta) {
  if (theta.size() != param_count()) {
    throw std::invalid_argument("Model::unflatten: length mismatch");
  }
  const std::size_t nd = denoiser.net.param_count();
  denoiser.net.unflatten(theta.subspan(0, nd));
  if (has_mlp) rho_mlp.unflatten(theta.subspan(nd));
}

std::string Model::param_name(std::size_t flat_index) const {
  const std::size_t nd = denoiser.net.param_count();
  if (flat_index < nd) {
    return "denoiser." + denoiser.net.param_name(flat_index);
  }
  return "rho_mlp." + rho_mlp.param_name(flat_index - nd);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) {
    throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  }
  if (is_mixup(regime) && batch_size < 2) {
    throw std::invalid_argument(
        "TrainConfig: mixup regimes need batch_size >= 2 (pairs required)");
  }
  if (l2_weight < 0.0) {
    throw std::invalid_argument("TrainConfig: l2_weight must be >= 0");
  }
  if (!(beta_alpha > 0.0)) {
    throw std::invalid_argument("TrainConfig: beta_alpha must be > 0");
  }
  if (is_learnable(regime) && !(mix_capacity > 1.0)) {
    throw std::invalid_argument("TrainConfig: mix_capacity must exceed 1");
  }
  if (forced_lambda && !(*forced_lambda >= 0.0 && *forced_lambda <= 1.0)) {
    throw std::invalid_argument("TrainConfig: forced_lambda outside [0, 1]");
  }
  dataset.validate();
}

Model make_model(const TrainConfig& cfg, std::size_t bins) {
  Rng rng(Rng::derive(cfg.seed, 0x5eed));
  Model model;
  model.denoiser = make_denoiser(bins, cfg.denoiser_hidden, cfg.bottleneck, rng);
  if (is_learnable(cfg.regime)) {
    model.rho_mlp = make_rho_mlp(cfg.bottleneck, cfg.mlp_hidden, rng);
    model.has_mlp = true;
  }
  model.C = cfg.mix_capacity;
  model.detach_embedding = cfg.detach_phi_embedding;
  return model;
}

TapedModel stage_model(Tape& tape, const Model& model) {
  TapedModel staged;
  staged.denoiser = TapedNetwork::stage(tape, model.denoiser.net);
  if (model.has_mlp) staged.mlp = TapedNetwork::stage(tape, model.rho_mlp);
  staged.bottleneck_layer = model.denoiser.bottleneck_layer;
  staged.C = model.C;
  staged.has_mlp = model.has_mlp;
  staged.detach_embedding = model.detach_embedding;
  return staged;
}

std::vector<double> TapedModel::gradients(const Tape& tape) const {
  std::vector<double> g = denoiser.gradients(tape);
  if (has_mlp) {
    const std::vector<double> gm = mlp.gradients(tape);
    g.insert(g.end(), gm.begin(), gm.end());
  }
  return g;
}

namespace {

TapedDenoiserOutput forward_for_loss(Tape& tape, const TapedModel& model,
                                     const Tensor& input) {
  TapedDenoiserOutput out =
      forward_denoiser(tape, model.denoiser, model.bottleneck_layer, input);
  if (model.detach_embedding) {
    for (Value& e : out.embedding) e = tape.constant(tape.value(e));
  }
  return out;
}

}  // namespace

Value regime_unit_loss(Tape& tape, const TapedModel& model, Regime regime,
                       LossKind kind, const SamplePair& pair_j,
                       const SamplePair& pair_k, double lam) {
  if (regime == Regime::Erm) {
    const TapedDenoiserOutput out = forward_for_loss(tape, model, pair_j.noisy);
    const auto target = stage_constants(tape, pair_j.clean);
    return loss_eval(tape, kind, out.prediction, target, out.frames, out.bins);
  }
  const VirtualSample vs = make_virtual_sample(pair_j, pair_k, lam);
  const TapedDenoiserOutput out = forward_for_loss(tape, model, vs.mixed);
  switch (regime) {
    case Regime::LabelMixup:
      return label_mixup_objective(tape, kind, out.prediction, vs.clean_j,
                                   vs.clean_k, lam, out.frames, out.bins);
    case Regime::LossMixup:
      return loss_mixup_objective(tape, kind, out.prediction, vs.clean_j,
                                  vs.clean_k, lam, out.frames, out.bins);
    case Regime::LearnableLabelMixup:
      return learnable_label_mixup_objective(tape, kind, out, vs.clean_j,
                                             vs.clean_k, lam, model.mlp,
                                             model.C);
    case Regime::LearnableLossMixup:
      return learnable_loss_mixup_objective(tape, kind, out, vs.clean_j,
                                            vs.clean_k, lam, model.mlp,
                                            model.C);
    case Regime::Erm:
      break;
  }
  throw std::invalid_argument("regime_unit_loss: unknown regime");
}

EpochRecord train_epoch(Model& model, Optimizer& opt, const TrainConfig& cfg,
                        std::span<const SamplePair> train, Rng& rng) {
  if (train.empty()) {
    throw std::invalid_argument("train_epoch: empty training split");
  }
  const MixingDistribution beta =
      MixingDistribution::symmetric_beta(cfg.beta_alpha);
  const auto name_fn = [&model](std::size_t i) { return model.param_name(i); };

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  Tape tape;
  double epoch_loss = 0.0;
  int batches = 0;
  const std::size_t batch_size = static_cast<std::size_t>(cfg.batch_size);

  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<double> grads(model.param_count(), 0.0);
    double batch_loss = 0.0;
    int units = 0;

    const auto run_unit = [&](Regime regime, const SamplePair& j,
                              const SamplePair& k, double lam) {
      tape.reset();
      const TapedModel staged = stage_model(tape, model);
      const Value loss = regime_unit_loss(tape, staged, regime, cfg.loss, j, k,
                                          lam);
      tape.backward(loss);
      const std::vector<double> g = staged.gradients(tape);
      for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += g[i];
      batch_loss += tape.value(loss);
      ++units;
    };

    if (cfg.regime == Regime::Erm) {
      for (std::size_t i = start; i < end; ++i) {
        run_unit(Regime::Erm, train[order[i]], train[order[i]], 1.0);
      }
    } else {
      std::size_t i = start;
      for (; i + 1 < end; i += 2) {
        double lam;
        if (cfg.forced_lambda) {
          lam = *cfg.forced_lambda;
        } else if (is_learnable(cfg.regime)) {
          lam = rng.uniform();
        } else {
          lam = sample_lambda(beta, rng);
        }
        run_unit(cfg.regime, train[order[i]], train[order[i + 1]], lam);
      }
      if (i < end) {
        // Leftover odd sample trains via Erm.
        run_unit(Regime::Erm, train[order[i]], train[order[i]], 1.0);
      }
    }

    const double inv_units = 1.0 / static_cast<double>(units);
    for (double& g : grads) g *= inv_units;
    batch_loss *= inv_units;

    std::vector<double> theta = model.flatten();
    if (cfg.l2_weight > 0.0) {
      double penalty = 0.0;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        grads[i] += 2.0 * cfg.l2_weight * theta[i];
        penalty += theta[i] * theta[i];
      }
      batch_loss += cfg.l2_weight * penalty;
    }
    opt.step(theta, grads, name_fn);
    model.unflatten(theta);

    epoch_loss += batch_loss;
    ++batches;
  }

  EpochRecord record;
  record.train_loss = epoch_loss / static_cast<double>(batches);
  return record;
}

double evaluate(const Denoiser& denoiser, std::span<const SamplePair> split) {
  if (split.empty()) {
    throw std::invalid_argument("evaluate: empty split");
  }
  double acc = 0.0;
  for (const SamplePair& pair : split) {
    const DenoiserOutput out = forward_denoiser(denoiser, pair.noisy);
    acc += loss_eval(LossKind::Lsd, out.prediction, pair.clean);
  }
  return acc / static_cast<double>(split.size());
}

std::array<double, 3> mean_phi_at_quartiles(const Model& model,
                                            std::span<const SamplePair> split,
                                            std::size_t max_samples) {
  if (!model.has_mlp) {
    throw std::invalid_argument(
        "mean_phi_at_quartiles: model has no mixing MLP");
  }
  const MixingFunction phi(RhoFunction::neural(&model.rho_mlp, model.C));
  const std::size_t n = std::min(split.size(), max_samples);
  if (n == 0) {
    throw std::invalid_argument("mean_phi_at_quartiles: empty split");
  }
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  const std::array<double, 3> quartiles{0.25, 0.5, 0.75};
  for (std::size_t i = 0; i < n; ++i) {
    const DenoiserOutput out = forward_denoiser(model.denoiser, split[i].noisy);
    for (std::size_t q = 0; q < 3; ++q) {
      acc[q] += phi_eval(phi, quartiles[q], out.embedding);
    }
  }
  for (double& v : acc) v /= static_cast<double>(n);
  return acc;
}

TrainingReport train(const TrainConfig& cfg, const Dataset& dataset,
                     Model* final_model) {
  cfg.validate();
  if (dataset.train.empty() || dataset.val.empty()) {
    throw std::invalid_argument("train: dataset has an empty split");
  }
  const std::size_t bins = dataset.train.front().noisy.cols();
  Model model = make_model(cfg, bins);
  Optimizer opt(cfg.optimizer, model.param_count());
  Rng rng(Rng::derive(cfg.seed, 0xeb0c));

  TrainingReport report;
  report.regime = cfg.regime;
  report.seed = cfg.seed;
  report.epochs.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int e = 1; e <= cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord record = train_epoch(model, opt, cfg, dataset.train, rng);
    record.epoch = e;
    record.val_lsd = evaluate(model.denoiser, dataset.val);
    if (model.has_mlp) {
      record.has_phi = true;
      record.phi_at_quartiles = mean_phi_at_quartiles(model, dataset.val);
    }
    const auto t1 = std::chrono::steady_clock::now();
    record.wall_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    report.wall_ms_total += record.wall_ms;
    report.epochs.push_back(record);
  }
  report.final_train_loss = report.epochs.back().train_loss;
  report.final_val_lsd = report.epochs.back().val_lsd;
  if (final_model != nullptr) *final_model = std::move(model);
  return report;
}

AblationResult run_ablation(const TrainConfig& base, int n_seeds) {
  if (n_seeds < 1) {
    throw std::invalid_argument("run_ablation: n_seeds must be >= 1");
  }
  // One dataset for every cell: identical inputs across rows.
  const Dataset dataset = make_dataset(base.dataset);

  AblationResult result;
  for (Regime regime : ablation_regimes()) {
    std::vector<double> finals;
    finals.reserve(static_cast<std::size_t>(n_seeds));
    for (int k = 0; k < n_seeds; ++k) {
      TrainConfig cfg = base;
      cfg.regime = regime;
      cfg.seed = base.seed + static_cast<std::uint64_t>(k);
      const TrainingReport report = train(cfg, dataset);
      result.rows.push_back(
          AblationRow{regime, cfg.seed, report.final_val_lsd});
      finals.push_back(report.final_val_lsd);
    }
    const double mean =
        std::accumulate(finals.begin(), finals.end(), 0.0) /
        static_cast<double>(finals.size());
    double var = 0.0;
    for (double v : finals) var += (v - mean) * (v - mean);
    const double stddev =
        finals.size() > 1
            ? std::sqrt(var / static_cast<double>(finals.size() - 1))
            : 0.0;
    result.summary.push_back(AblationSummary{regime, mean, stddev});
  }
  return result;
}

}  // namespace lossmix
