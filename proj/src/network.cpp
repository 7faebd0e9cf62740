#include "lossmix/network.hpp"

#include <cmath>
#include <stdexcept>

namespace lossmix {

namespace {

double apply_activation(Activation act, double v, double slope) {
  switch (act) {
    case Activation::Linear:
      return v;
    case Activation::LeakyRelu:
      return v >= 0.0 ? v : slope * v;
    case Activation::Sigmoid:
      return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  }
  return v;
}

}  // namespace

Network Network::dense(const std::vector<std::size_t>& widths,
                       const std::vector<Activation>& acts, Rng& rng) {
  if (widths.size() < 2 || acts.size() != widths.size() - 1) {
    throw std::invalid_argument("dense: widths/activations mismatch");
  }
  Network net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w({out, in});
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = rng.uniform(-bound, bound);
    }
    net.add_layer(Layer{std::move(w), Tensor({out}), acts[l], 0.2});
  }
  return net;
}

void Network::add_layer(Layer layer) {
  if (!layers_.empty() && layer.weight.cols() != output_dim()) {
    throw std::invalid_argument(
        "add_layer: input width " + std::to_string(layer.weight.cols()) +
        " does not compose with previous output width " +
        std::to_string(output_dim()));
  }
  if (layer.bias.size() != layer.weight.rows()) {
    throw std::invalid_argument("add_layer: bias/weight row mismatch");
  }
  layers_.push_back(std::move(layer));
}

std::size_t Network::input_dim() const {
  if (layers_.empty()) throw std::invalid_argument("empty network");
  return layers_.front().weight.cols();
}

std::size_t Network::output_dim() const {
  if (layers_.empty()) throw std::invalid_argument("empty network");
  return layers_.back().weight.rows();
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<double> Network::flatten() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const Layer& l : layers_) {
    out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
    out.insert(out.end(), l.bias.data().begin(), l.bias.data().end());
  }
  return out;
}

void Network::unflatten(std::span<const double> theta) {
  if (theta.size() != param_count()) {
    throw std::invalid_argument("unflatten: length mismatch");
  }
  std::size_t k = 0;
  for (Layer& l : layers_) {
    for (std::size_t i = 0; i < l.weight.size(); ++i) l.weight[i] = theta[k++];
    for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] = theta[k++];
  }
}

std::string Network::param_name(std::size_t flat_index) const {
  std::size_t k = flat_index;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (k < layer.weight.size()) {
      const std::size_t r = k / layer.weight.cols();
      const std::size_t c = k % layer.weight.cols();
      return "layer" + std::to_string(l) + ".weight[" + std::to_string(r) +
             "," + std::to_string(c) + "]";
    }
    k -= layer.weight.size();
    if (k < layer.bias.size()) {
      return "layer" + std::to_string(l) + ".bias[" + std::to_string(k) + "]";
    }
    k -= layer.bias.size();
  }
  throw std::invalid_argument("param_name: index out of range");
}

std::vector<double> Network::forward(std::span<const double> x) const {
  std::vector<double> ignored;
  return forward_capture(x, layers_.size(), ignored);
}

std::vector<double> Network::forward_capture(std::span<const double> x,
                                             std::size_t capture_layer,
                                             std::vector<double>& captured)
    const {
  if (x.size() != input_dim()) {
    throw std::invalid_argument("forward: input dimension " +
                                std::to_string(x.size()) +
                                " does not match network input " +
                                std::to_string(input_dim()));
  }
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const std::size_t out = layer.weight.rows(), in = layer.weight.cols();
    std::vector<double> next(out);
    for (std::size_t r = 0; r < out; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < in; ++c) acc += layer.weight.at(r, c) * h[c];
      next[r] = apply_activation(layer.act, acc + layer.bias[r],
                                 layer.leaky_slope);
    }
    h = std::move(next);
    if (l == capture_layer) captured = h;
  }
  return h;
}

Denoiser make_denoiser(std::size_t bins, std::size_t hidden,
                       std::size_t bottleneck, Rng& rng) {
  Network net = Network::dense(
      {bins, hidden, bottleneck, hidden, bins},
      {Activation::LeakyRelu, Activation::LeakyRelu, Activation::LeakyRelu,
       Activation::Linear},
      rng);
  return Denoiser{std::move(net), 1};
}

Network make_rho_mlp(std::size_t embedding_dim, std::size_t hidden, Rng& rng) {
  return Network::dense({embedding_dim, hidden, 1},
                        {Activation::LeakyRelu, Activation::Linear}, rng);
}

DenoiserOutput forward_denoiser(const Denoiser& d, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != d.net.input_dim()) {
    throw std::invalid_argument(
        "forward_denoiser: input " + x.shape_string() +
        " does not match expected (frames x " +
        std::to_string(d.net.input_dim()) + ")");
  }
  const std::size_t frames = x.rows(), bins = x.cols();
  const std::size_t bottleneck_dim =
      d.net.layers()[d.bottleneck_layer].weight.rows();
  Tensor prediction({frames, bins});
  std::vector<double> embedding(bottleneck_dim, 0.0);
  std::vector<double> captured;
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<double> out = d.net.forward_capture(
        x.data().subspan(t * bins, bins), d.bottleneck_layer, captured);
    for (std::size_t f = 0; f < bins; ++f) prediction.at(t, f) = out[f];
    for (std::size_t j = 0; j < bottleneck_dim; ++j) {
      embedding[j] += captured[j];
    }
  }
  const double inv_frames = 1.0 / static_cast<double>(frames);
  for (double& v : embedding) v *= inv_frames;
  return DenoiserOutput{std::move(prediction), std::move(embedding)};
}

double forward_mlp(const Network& net, std::span<const double> e) {
  if (net.output_dim() != 1) {
    throw std::invalid_argument("forward_mlp: network output is not scalar");
  }
  return net.forward(e)[0];
}

TapedNetwork TapedNetwork::stage(Tape& tape, const Network& net) {
  TapedNetwork staged;
  staged.net_ = &net;
  staged.params_.reserve(net.param_count());
  for (const Layer& l : net.layers()) {
    staged.offsets_.emplace_back(staged.params_.size(),
                                 staged.params_.size() + l.weight.size());
    for (double v : l.weight.data()) staged.params_.push_back(tape.leaf(v));
    for (double v : l.bias.data()) staged.params_.push_back(tape.leaf(v));
  }
  return staged;
}

Value TapedNetwork::activate(Tape& tape, const Layer& layer, Value v) {
  switch (layer.act) {
    case Activation::Linear:
      return v;
    case Activation::LeakyRelu:
      return tape.leaky_relu(v, layer.leaky_slope);
    case Activation::Sigmoid:
      return tape.sigmoid(v);
  }
  return v;
}

std::vector<Value> TapedNetwork::apply_layer(Tape& tape, std::size_t l,
                                             std::span<const Value> h) const {
  const Layer& layer = net_->layers()[l];
  const std::size_t out = layer.weight.rows(), in = layer.weight.cols();
  if (h.size() != in) {
    throw std::invalid_argument("taped forward: width mismatch at layer " +
                                std::to_string(l));
  }
  const auto [w_begin, b_begin] = offsets_[l];
  std::vector<Value> next(out);
  for (std::size_t r = 0; r < out; ++r) {
    Value acc = tape.dot(
        std::span<const Value>(params_.data() + w_begin + r * in, in), h);
    acc = tape.add(acc, params_[b_begin + r]);
    next[r] = activate(tape, layer, acc);
  }
  return next;
}

std::vector<Value> TapedNetwork::apply_layer_const(
    Tape& tape, std::size_t l, std::span<const double> x) const {
  const Layer& layer = net_->layers()[l];
  const std::size_t out = layer.weight.rows(), in = layer.weight.cols();
  if (x.size() != in) {
    throw std::invalid_argument("taped forward: input dimension " +
                                std::to_string(x.size()) +
                                " does not match network input " +
                                std::to_string(in));
  }
  const auto [w_begin, b_begin] = offsets_[l];
  std::vector<Value> next(out);
  for (std::size_t r = 0; r < out; ++r) {
    Value acc = tape.dot_const(
        std::span<const Value>(params_.data() + w_begin + r * in, in), x);
    acc = tape.add(acc, params_[b_begin + r]);
    next[r] = activate(tape, layer, acc);
  }
  return next;
}

std::vector<Value> TapedNetwork::forward(Tape& tape,
                                         std::span<const Value> x) const {
  std::vector<Value> h(x.begin(), x.end());
  for (std::size_t l = 0; l < net_->layers().size(); ++l) {
    h = apply_layer(tape, l, h);
  }
  return h;
}

std::vector<Value> TapedNetwork::forward_const(
    Tape& tape, std::span<const double> x) const {
  // The first layer contracts against the constant input directly; only
  // parameter nodes enter the tape.
  if (net_->layers().empty()) throw std::invalid_argument("empty network");
  std::vector<Value> h = apply_layer_const(tape, 0, x);
  for (std::size_t l = 1; l < net_->layers().size(); ++l) {
    h = apply_layer(tape, l, h);
  }
  return h;
}

std::vector<double> TapedNetwork::gradients(const Tape& tape) const {
  std::vector<double> g(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) g[i] = tape.grad(params_[i]);
  return g;
}

TapedDenoiserOutput forward_denoiser(Tape& tape, const TapedNetwork& net,
                                     std::size_t bottleneck_layer,
                                     const Tensor& x) {
  if (x.rank() != 2 || x.cols() != net.net().input_dim()) {
    throw std::invalid_argument(
        "forward_denoiser: input " + x.shape_string() +
        " does not match expected (frames x " +
        std::to_string(net.net().input_dim()) + ")");
  }
  const std::size_t frames = x.rows(), bins = x.cols();
  const auto& layers = net.net().layers();
  const std::size_t bottleneck_dim = layers[bottleneck_layer].weight.rows();

  TapedDenoiserOutput out;
  out.frames = frames;
  out.bins = bins;
  out.prediction.reserve(frames * bins);
  // bottleneck[j][t] = activation j of frame t, for mean-pooling.
  std::vector<std::vector<Value>> bottleneck(bottleneck_dim);
  for (auto& v : bottleneck) v.reserve(frames);

  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<Value> h =
        net.apply_layer_const(tape, 0, x.data().subspan(t * bins, bins));
    if (bottleneck_layer == 0) {
      for (std::size_t j = 0; j < bottleneck_dim; ++j)
        bottleneck[j].push_back(h[j]);
    }
    for (std::size_t l = 1; l < layers.size(); ++l) {
      h = net.apply_layer(tape, l, h);
      if (l == bottleneck_layer) {
        for (std::size_t j = 0; j < bottleneck_dim; ++j)
          bottleneck[j].push_back(h[j]);
      }
    }
    for (std::size_t f = 0; f < bins; ++f) out.prediction.push_back(h[f]);
  }
  out.embedding.reserve(bottleneck_dim);
  for (std::size_t j = 0; j < bottleneck_dim; ++j) {
    out.embedding.push_back(tape.mean(bottleneck[j]));
  }
  return out;
}

Value forward_mlp(Tape& tape, const TapedNetwork& net,
                  std::span<const Value> e) {
  if (net.net().output_dim() != 1) {
    throw std::invalid_argument("forward_mlp: network output is not scalar");
  }
  return net.forward(tape, e)[0];
}

GradCheckReport gradient_check(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> theta, std::span<const double> analytic,
    double step) {
  if (step < 1e-8 || step > 1e-3) {
    throw std::invalid_argument("gradient_check: step outside [1e-8, 1e-3]");
  }
  if (theta.size() != analytic.size()) {
    throw std::invalid_argument("gradient_check: gradient length mismatch");
  }
  std::vector<double> probe(theta.begin(), theta.end());
  GradCheckReport report;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = f(probe);
    probe[i] = saved - step;
    const double down = f(probe);
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1.0});
    const double err = std::fabs(a - numeric) / denom;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

}  // namespace lossmix
