#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lossmix/mixing.hpp"
#include "lossmix/network.hpp"
#include "lossmix/rng.hpp"
#include "lossmix/sample.hpp"
#include "lossmix/tape.hpp"
#include "lossmix/tensor.hpp"

namespace lossmix {

/// Loss family. Mse works on any matching shapes; Lsd expects log-power
/// spectra (frames x bins); CrossEntropy expects raw logits against a
/// normalizable target vector (softmax and log-sum-exp are applied
/// internally, which is the form whose gradient is affine in the targets).
enum class LossKind { Mse, CrossEntropy, Lsd };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

/// Tape-free loss value.
double loss_eval(LossKind kind, const Tensor& prediction, const Tensor& target);

/// Taped loss over prediction nodes and target nodes. `frames`/`bins` give
/// the rank-2 layout (required for Lsd; Mse and CrossEntropy treat the data
/// as flat). Targets may be constants staged on the tape or computed nodes
/// (learnable label mixing).
Value loss_eval(Tape& tape, LossKind kind, std::span<const Value> prediction,
                std::span<const Value> target, std::size_t frames,
                std::size_t bins);

/// Stages a tensor as constant nodes.
std::vector<Value> stage_constants(Tape& tape, const Tensor& t);

/// Virtual sample construction: mixed = lam*x_j + (1-lam)*x_k, clean targets
/// retained. Shapes must match.
VirtualSample make_virtual_sample(const SamplePair& pair_j,
                                  const SamplePair& pair_k, double lam);

/// lam * l(pred, s_j) + (1 - lam) * l(pred, s_k).
double loss_mixup_objective(LossKind kind, const Tensor& prediction,
                            const Tensor& s_j, const Tensor& s_k, double lam);
Value loss_mixup_objective(Tape& tape, LossKind kind,
                           std::span<const Value> prediction,
                           const Tensor& s_j, const Tensor& s_k, double lam,
                           std::size_t frames, std::size_t bins);

/// l(pred, lam*s_j + (1-lam)*s_k).
double label_mixup_objective(LossKind kind, const Tensor& prediction,
                             const Tensor& s_j, const Tensor& s_k, double lam);
Value label_mixup_objective(Tape& tape, LossKind kind,
                            std::span<const Value> prediction,
                            const Tensor& s_j, const Tensor& s_k, double lam,
                            std::size_t frames, std::size_t bins);

/// phi(lam) * l(pred, s_j) + (1 - phi(lam)) * l(pred, s_k), with phi
/// conditioned on the denoiser embedding of the mixed input. Gradients flow
/// into the denoiser and the rho-MLP. Throws std::invalid_argument when the
/// embedding is missing.
Value learnable_loss_mixup_objective(Tape& tape, LossKind kind,
                                     const TapedDenoiserOutput& out,
                                     const Tensor& s_j, const Tensor& s_k,
                                     double lam, const TapedNetwork& rho_mlp,
                                     double C);

/// l(pred, phi*s_j + (1-phi)*s_k): the label-mixing analogue where the
/// learned phi(lam) replaces lam in the target mixture.
Value learnable_label_mixup_objective(Tape& tape, LossKind kind,
                                      const TapedDenoiserOutput& out,
                                      const Tensor& s_j, const Tensor& s_k,
                                      double lam, const TapedNetwork& rho_mlp,
                                      double C);

/// Randomized comparison of label-mixup vs loss-mixup parameter gradients on
/// tiny seeded instances. The gap is the relative L2 distance over the
/// concatenated parameter gradient vector, floored at 1e-12 against
/// near-zero norms. An affine-in-targets loss gradient (Mse, CrossEntropy)
/// makes the two coincide; Lsd does not.
struct EquivalenceReport {
  LossKind kind = LossKind::Mse;
  int trials = 0;
  double max_rel_gap = 0.0;
  std::uint64_t worst_seed = 0;
  /// Per-trial gaps, for distribution checks.
  std::vector<double> gaps;
};

EquivalenceReport equivalence_report(LossKind kind, int n_trials, Rng& rng);

/// {"kind": ..., "trials": ..., "max_rel_gap": ..., "worst_seed": ...}
std::string equivalence_report_json(const EquivalenceReport& report);

}  // namespace lossmix
