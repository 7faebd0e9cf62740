#include "lossmix/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace lossmix {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Mse:
      return "mse";
    case LossKind::CrossEntropy:
      return "cross-entropy";
    case LossKind::Lsd:
      return "lsd";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "mse") return LossKind::Mse;
  if (name == "cross-entropy") return LossKind::CrossEntropy;
  if (name == "lsd") return LossKind::Lsd;
  throw std::invalid_argument("unknown loss kind '" + name +
                              "' (expected mse, cross-entropy or lsd)");
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_string() + " vs " + b.shape_string());
  }
}

void validate_ce_target(std::span<const double> t) {
  double sum = 0.0;
  for (double v : t) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument(
          "cross-entropy: target is not normalizable (negative or non-finite "
          "entry)");
    }
    sum += v;
  }
  if (!(sum > 0.0)) {
    throw std::invalid_argument(
        "cross-entropy: target is not normalizable (sum is zero)");
  }
}

double mse_plain(std::span<const double> p, std::span<const double> t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    acc += d * d;
  }
  return acc / static_cast<double>(p.size());
}

// Mean over frames of the root-mean-square log-spectral deviation.
double lsd_plain(const Tensor& p, const Tensor& t) {
  const std::size_t frames = p.rows(), bins = p.cols();
  double acc = 0.0;
  for (std::size_t r = 0; r < frames; ++r) {
    double frame = 0.0;
    for (std::size_t c = 0; c < bins; ++c) {
      const double d = p.at(r, c) - t.at(r, c);
      frame += d * d;
    }
    acc += std::sqrt(frame / static_cast<double>(bins));
  }
  return acc / static_cast<double>(frames);
}

double cross_entropy_plain(std::span<const double> logits,
                           std::span<const double> target) {
  validate_ce_target(target);
  double tsum = 0.0;
  for (double v : target) tsum += v;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  const double lse = std::log(z) + m;
  double dot = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    dot += (target[i] / tsum) * logits[i];
  }
  return lse - dot;
}

}  // namespace

double loss_eval(LossKind kind, const Tensor& prediction,
                 const Tensor& target) {
  require_same_shape(prediction, target, "loss_eval");
  switch (kind) {
    case LossKind::Mse:
      return mse_plain(prediction.data(), target.data());
    case LossKind::Lsd:
      if (prediction.rank() != 2) {
        throw std::invalid_argument(
            "lsd: expected a (frames x bins) tensor, got " +
            prediction.shape_string());
      }
      return lsd_plain(prediction, target);
    case LossKind::CrossEntropy:
      return cross_entropy_plain(prediction.data(), target.data());
  }
  throw std::invalid_argument("loss_eval: unknown kind");
}

std::vector<Value> stage_constants(Tape& tape, const Tensor& t) {
  std::vector<Value> out;
  out.reserve(t.size());
  for (double v : t.data()) out.push_back(tape.constant(v));
  return out;
}

Value loss_eval(Tape& tape, LossKind kind, std::span<const Value> prediction,
                std::span<const Value> target, std::size_t frames,
                std::size_t bins) {
  if (prediction.size() != target.size()) {
    throw std::invalid_argument("loss_eval: prediction/target size mismatch");
  }
  if (prediction.size() != frames * bins) {
    throw std::invalid_argument("loss_eval: frames*bins does not match data");
  }
  switch (kind) {
    case LossKind::Mse: {
      std::vector<Value> sq;
      sq.reserve(prediction.size());
      for (std::size_t i = 0; i < prediction.size(); ++i) {
        sq.push_back(tape.square(tape.sub(prediction[i], target[i])));
      }
      return tape.mean(sq);
    }
    case LossKind::Lsd: {
      std::vector<Value> per_frame;
      per_frame.reserve(frames);
      std::vector<Value> sq;
      for (std::size_t r = 0; r < frames; ++r) {
        sq.clear();
        sq.reserve(bins);
        for (std::size_t c = 0; c < bins; ++c) {
          const std::size_t i = r * bins + c;
          sq.push_back(tape.square(tape.sub(prediction[i], target[i])));
        }
        per_frame.push_back(tape.sqrt_(tape.mean(sq)));
      }
      return tape.mean(per_frame);
    }
    case LossKind::CrossEntropy: {
      // Validate and normalize the targets on the tape so learnable target
      // mixtures keep their gradient path.
      double tsum = 0.0;
      for (Value v : target) {
        const double tv = tape.value(v);
        if (!std::isfinite(tv) || tv < 0.0) {
          throw std::invalid_argument(
              "cross-entropy: target is not normalizable (negative or "
              "non-finite entry)");
        }
        tsum += tv;
      }
      if (!(tsum > 0.0)) {
        throw std::invalid_argument(
            "cross-entropy: target is not normalizable (sum is zero)");
      }
      double m = tape.value(prediction[0]);
      for (Value v : prediction) m = std::max(m, tape.value(v));
      std::vector<Value> expo;
      expo.reserve(prediction.size());
      for (Value v : prediction) {
        expo.push_back(tape.exp_(tape.add_const(v, -m)));
      }
      const Value lse = tape.add_const(tape.log_(tape.sum(expo)), m);
      const Value target_sum = tape.sum(target);
      std::vector<Value> normalized;
      normalized.reserve(target.size());
      for (Value v : target) normalized.push_back(tape.div(v, target_sum));
      const Value dot = tape.dot(normalized, prediction);
      return tape.sub(lse, dot);
    }
  }
  throw std::invalid_argument("loss_eval: unknown kind");
}

VirtualSample make_virtual_sample(const SamplePair& pair_j,
                                  const SamplePair& pair_k, double lam) {
  if (!(lam >= 0.0 && lam <= 1.0)) {
    throw std::invalid_argument("make_virtual_sample: lambda outside [0, 1]");
  }
  require_same_shape(pair_j.noisy, pair_k.noisy, "make_virtual_sample");
  return VirtualSample{lerp(pair_j.noisy, pair_k.noisy, lam), pair_j.clean,
                       pair_k.clean, lam};
}

double loss_mixup_objective(LossKind kind, const Tensor& prediction,
                            const Tensor& s_j, const Tensor& s_k, double lam) {
  if (!(lam >= 0.0 && lam <= 1.0)) {
    throw std::invalid_argument("loss_mixup_objective: lambda outside [0, 1]");
  }
  return lam * loss_eval(kind, prediction, s_j) +
         (1.0 - lam) * loss_eval(kind, prediction, s_k);
}

Value loss_mixup_objective(Tape& tape, LossKind kind,
                           std::span<const Value> prediction,
                           const Tensor& s_j, const Tensor& s_k, double lam,
                           std::size_t frames, std::size_t bins) {
  if (!(lam >= 0.0 && lam <= 1.0)) {
    throw std::invalid_argument("loss_mixup_objective: lambda outside [0, 1]");
  }
  const auto tj = stage_constants(tape, s_j);
  const auto tk = stage_constants(tape, s_k);
  const Value lj = loss_eval(tape, kind, prediction, tj, frames, bins);
  const Value lk = loss_eval(tape, kind, prediction, tk, frames, bins);
  return tape.add(tape.mul_const(lj, lam), tape.mul_const(lk, 1.0 - lam));
}

double label_mixup_objective(LossKind kind, const Tensor& prediction,
                             const Tensor& s_j, const Tensor& s_k,
                             double lam) {
  if (!(lam >= 0.0 && lam <= 1.0)) {
    throw std::invalid_argument(
        "label_mixup_objective: lambda outside [0, 1]");
  }
  return loss_eval(kind, prediction, lerp(s_j, s_k, lam));
}

Value label_mixup_objective(Tape& tape, LossKind kind,
                            std::span<const Value> prediction,
                            const Tensor& s_j, const Tensor& s_k, double lam,
                            std::size_t frames, std::size_t bins) {
  if (!(lam >= 0.0 && lam <= 1.0)) {
    throw std::invalid_argument(
        "label_mixup_objective: lambda outside [0, 1]");
  }
  const auto target = stage_constants(tape, lerp(s_j, s_k, lam));
  return loss_eval(tape, kind, prediction, target, frames, bins);
}

Value learnable_loss_mixup_objective(Tape& tape, LossKind kind,
                                     const TapedDenoiserOutput& out,
                                     const Tensor& s_j, const Tensor& s_k,
                                     double lam, const TapedNetwork& rho_mlp,
                                     double C) {
  if (out.embedding.empty()) {
    throw std::invalid_argument(
        "learnable_loss_mixup_objective: missing embedding");
  }
  const Value phi =
      phi_eval_differentiable(tape, rho_mlp, C, lam, out.embedding);
  const auto tj = stage_constants(tape, s_j);
  const auto tk = stage_constants(tape, s_k);
  const Value lj =
      loss_eval(tape, kind, out.prediction, tj, out.frames, out.bins);
  const Value lk =
      loss_eval(tape, kind, out.prediction, tk, out.frames, out.bins);
  const Value one_minus_phi = tape.sub(tape.constant(1.0), phi);
  return tape.add(tape.mul(phi, lj), tape.mul(one_minus_phi, lk));
}

Value learnable_label_mixup_objective(Tape& tape, LossKind kind,
                                      const TapedDenoiserOutput& out,
                                      const Tensor& s_j, const Tensor& s_k,
                                      double lam, const TapedNetwork& rho_mlp,
                                      double C) {
  if (out.embedding.empty()) {
    throw std::invalid_argument(
        "learnable_label_mixup_objective: missing embedding");
  }
  require_same_shape(s_j, s_k, "learnable_label_mixup_objective");
  const Value phi =
      phi_eval_differentiable(tape, rho_mlp, C, lam, out.embedding);
  const Value one_minus_phi = tape.sub(tape.constant(1.0), phi);
  std::vector<Value> target;
  target.reserve(s_j.size());
  for (std::size_t i = 0; i < s_j.size(); ++i) {
    target.push_back(tape.add(tape.mul_const(phi, s_j[i]),
                              tape.mul_const(one_minus_phi, s_k[i])));
  }
  return loss_eval(tape, kind, out.prediction, target, out.frames, out.bins);
}

namespace {

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

EquivalenceReport equivalence_report(LossKind kind, int n_trials, Rng& rng) {
  if (n_trials < 1) {
    throw std::invalid_argument("equivalence_report: n_trials must be >= 1");
  }
  EquivalenceReport report;
  report.kind = kind;
  report.trials = n_trials;
  report.gaps.reserve(static_cast<std::size_t>(n_trials));

  const bool ce = kind == LossKind::CrossEntropy;
  const std::size_t in_dim = ce ? 4 : 6;
  const std::size_t out_dim = ce ? 4 : 6;
  const std::size_t frames = kind == LossKind::Lsd ? 2 : 1;
  const std::size_t bins = out_dim / frames;

  for (int trial = 0; trial < n_trials; ++trial) {
    const std::uint64_t seed = Rng::derive(
        static_cast<std::uint64_t>(rng.uniform() * 9007199254740992.0), 0);
    Rng trial_rng(seed);
    Network net = Network::dense({in_dim, 5, out_dim},
                                 {Activation::LeakyRelu, Activation::Linear},
                                 trial_rng);
    std::vector<double> xj(in_dim), xk(in_dim);
    for (double& v : xj) v = trial_rng.normal();
    for (double& v : xk) v = trial_rng.normal();
    std::vector<double> tj(out_dim), tk(out_dim);
    if (ce) {
      // Soft label distributions: the target mixture must stay on the
      // simplex for the affine-gradient condition to apply.
      const auto fill_simplex = [&trial_rng](std::vector<double>& t) {
        double sum = 0.0;
        for (double& v : t) {
          v = trial_rng.uniform(0.05, 1.0);
          sum += v;
        }
        for (double& v : t) v /= sum;
      };
      fill_simplex(tj);
      fill_simplex(tk);
    } else {
      for (double& v : tj) v = trial_rng.normal();
      for (double& v : tk) v = trial_rng.normal();
    }
    const Tensor s_j({frames, bins}, tj);
    const Tensor s_k({frames, bins}, tk);
    const double lam = trial_rng.uniform();
    std::vector<double> mixed(in_dim);
    for (std::size_t i = 0; i < in_dim; ++i) {
      mixed[i] = lam * xj[i] + (1.0 - lam) * xk[i];
    }

    const auto grads_for = [&](bool label) {
      Tape tape;
      TapedNetwork staged = TapedNetwork::stage(tape, net);
      const std::vector<Value> pred = staged.forward_const(tape, mixed);
      const Value loss =
          label ? label_mixup_objective(tape, kind, pred, s_j, s_k, lam,
                                        frames, bins)
                : loss_mixup_objective(tape, kind, pred, s_j, s_k, lam,
                                       frames, bins);
      tape.backward(loss);
      return staged.gradients(tape);
    };

    const std::vector<double> g_label = grads_for(true);
    const std::vector<double> g_loss = grads_for(false);
    std::vector<double> diff(g_label.size());
    for (std::size_t i = 0; i < diff.size(); ++i) {
      diff[i] = g_label[i] - g_loss[i];
    }
    const double denom =
        std::max({1e-12, l2_norm(g_label), l2_norm(g_loss)});
    const double gap = l2_norm(diff) / denom;
    report.gaps.push_back(gap);
    if (gap > report.max_rel_gap) {
      report.max_rel_gap = gap;
      report.worst_seed = seed;
    }
  }
  return report;
}

std::string equivalence_report_json(const EquivalenceReport& report) {
  nlohmann::json j;
  j["kind"] = to_string(report.kind);
  j["trials"] = report.trials;
  j["max_rel_gap"] = report.max_rel_gap;
  j["worst_seed"] = report.worst_seed;
  return j.dump();
}

}  // namespace lossmix
