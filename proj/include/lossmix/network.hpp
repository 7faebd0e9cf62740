#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lossmix/rng.hpp"
#include "lossmix/tape.hpp"
#include "lossmix/tensor.hpp"

namespace lossmix {

enum class Activation { Linear, LeakyRelu, Sigmoid };

struct Layer {
  Tensor weight;  // (out x in)
  Tensor bias;    // (out)
  Activation act = Activation::Linear;
  double leaky_slope = 0.2;
};

/// Stack of dense layers with a named parameter registry. Parameters are
/// stored as tensors and flattened in registry order (layer0.weight row-major,
/// layer0.bias, layer1.weight, ...); the flat order is the contract shared by
/// the optimizer, gradient checks and checkpoints.
class Network {
 public:
  Network() = default;

  /// Dense stack: widths = {in, h1, ..., out}; acts has widths.size()-1
  /// entries. Weights are Glorot-uniform (+-sqrt(6/(fan_in+fan_out))),
  /// biases zero, drawn from the given source.
  static Network dense(const std::vector<std::size_t>& widths,
                       const std::vector<Activation>& acts, Rng& rng);

  void add_layer(Layer layer);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  std::size_t input_dim() const;
  std::size_t output_dim() const;

  std::size_t param_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> theta);
  /// "layer2.weight[3,7]" style name for a flat parameter index.
  std::string param_name(std::size_t flat_index) const;

  /// Tape-free forward pass of one input vector.
  std::vector<double> forward(std::span<const double> x) const;
  /// As forward(), also exposing the activations after layer
  /// `capture_layer` (0-based).
  std::vector<double> forward_capture(std::span<const double> x,
                                      std::size_t capture_layer,
                                      std::vector<double>& captured) const;

 private:
  std::vector<Layer> layers_;
};

/// Per-frame encoder-decoder denoiser. Every spectrogram frame passes
/// through the same dense stack; the embedding is the mean over frames of
/// the activations at `bottleneck_layer`.
struct Denoiser {
  Network net;
  std::size_t bottleneck_layer = 1;
};

/// Encoder bins->hidden->bottleneck, decoder bottleneck->hidden->bins,
/// LeakyReLU(0.2) everywhere except the linear output layer.
Denoiser make_denoiser(std::size_t bins, std::size_t hidden,
                       std::size_t bottleneck, Rng& rng);

/// One hidden LeakyReLU(0.2) layer of the given width, scalar linear output.
Network make_rho_mlp(std::size_t embedding_dim, std::size_t hidden, Rng& rng);

struct DenoiserOutput {
  Tensor prediction;              // same shape as the input (frames x bins)
  std::vector<double> embedding;  // bottleneck width
};

/// Tape-free denoiser pass. Throws std::invalid_argument when the frame
/// width does not match the network input, naming both shapes.
DenoiserOutput forward_denoiser(const Denoiser& d, const Tensor& x);

/// Tape-free scalar MLP pass; dimension-checked.
double forward_mlp(const Network& net, std::span<const double> e);

/// Network parameters staged as differentiable leaves on a tape, aligned
/// with Network::flatten order.
class TapedNetwork {
 public:
  static TapedNetwork stage(Tape& tape, const Network& net);

  const Network& net() const { return *net_; }
  std::span<const Value> params() const { return params_; }

  std::vector<Value> forward(Tape& tape, std::span<const Value> x) const;
  std::vector<Value> forward_const(Tape& tape, std::span<const double> x) const;

  /// Single layer on node inputs / on a constant input vector.
  std::vector<Value> apply_layer(Tape& tape, std::size_t l,
                                 std::span<const Value> h) const;
  std::vector<Value> apply_layer_const(Tape& tape, std::size_t l,
                                       std::span<const double> x) const;

  /// Gradient of the last backward() sweep, flat registry order.
  std::vector<double> gradients(const Tape& tape) const;

 private:
  const Network* net_ = nullptr;
  std::vector<Value> params_;
  // Per-layer offsets into params_ (weight begin, bias begin).
  std::vector<std::pair<std::size_t, std::size_t>> offsets_;

  static Value activate(Tape& tape, const Layer& layer, Value v);
};

struct TapedDenoiserOutput {
  std::vector<Value> prediction;  // frames*bins, row-major
  std::vector<Value> embedding;
  std::size_t frames = 0;
  std::size_t bins = 0;
};

/// Taped denoiser pass over a constant spectrogram input.
TapedDenoiserOutput forward_denoiser(Tape& tape, const TapedNetwork& net,
                                     std::size_t bottleneck_layer,
                                     const Tensor& x);

/// Taped scalar MLP pass over embedding nodes.
Value forward_mlp(Tape& tape, const TapedNetwork& net,
                  std::span<const Value> e);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Central-finite-difference check of an analytic gradient.
///
/// `f` evaluates the scalar objective at a parameter vector; `theta` is the
/// expansion point and `analytic` the gradient under test. Per-coordinate
/// error is |a - n| / max(|a|, |n|, 1): relative above unit scale, absolute
/// below, so finite-difference noise on near-zero coordinates does not
/// register as failure. `step` must lie in [1e-8, 1e-3].
GradCheckReport gradient_check(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> theta, std::span<const double> analytic,
    double step);

}  // namespace lossmix
