#include "lossmix/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace lossmix {

Value Tape::make_node(double value, std::uint32_t arg_count) {
  const std::uint32_t id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{value, 0.0, static_cast<std::uint32_t>(parents_.size()),
                        arg_count});
  return Value{id};
}

void Tape::push_arg(Value parent, double partial) {
  parents_.push_back(parent.id);
  partials_.push_back(partial);
}

Value Tape::add(Value a, Value b) {
  Value out = make_node(value(a) + value(b), 2);
  push_arg(a, 1.0);
  push_arg(b, 1.0);
  return out;
}

Value Tape::sub(Value a, Value b) {
  Value out = make_node(value(a) - value(b), 2);
  push_arg(a, 1.0);
  push_arg(b, -1.0);
  return out;
}

Value Tape::mul(Value a, Value b) {
  const double va = value(a), vb = value(b);
  Value out = make_node(va * vb, 2);
  push_arg(a, vb);
  push_arg(b, va);
  return out;
}

Value Tape::div(Value a, Value b) {
  const double va = value(a), vb = value(b);
  Value out = make_node(va / vb, 2);
  push_arg(a, 1.0 / vb);
  push_arg(b, -va / (vb * vb));
  return out;
}

Value Tape::neg(Value a) {
  Value out = make_node(-value(a), 1);
  push_arg(a, -1.0);
  return out;
}

Value Tape::add_const(Value a, double c) {
  Value out = make_node(value(a) + c, 1);
  push_arg(a, 1.0);
  return out;
}

Value Tape::mul_const(Value a, double c) {
  Value out = make_node(value(a) * c, 1);
  push_arg(a, c);
  return out;
}

Value Tape::exp_(Value a) {
  const double v = std::exp(value(a));
  Value out = make_node(v, 1);
  push_arg(a, v);
  return out;
}

Value Tape::log_(Value a) {
  const double va = value(a);
  Value out = make_node(std::log(va), 1);
  push_arg(a, 1.0 / va);
  return out;
}

Value Tape::sqrt_(Value a) {
  const double v = std::sqrt(value(a));
  Value out = make_node(v, 1);
  // The partial blows up at 0; clamp so a zero-deviation frame yields a
  // finite (sub)gradient instead of poisoning the sweep with infinities.
  push_arg(a, v > 0.0 ? 0.5 / v : 0.0);
  return out;
}

Value Tape::square(Value a) {
  const double va = value(a);
  Value out = make_node(va * va, 1);
  push_arg(a, 2.0 * va);
  return out;
}

Value Tape::sigmoid(Value a) {
  const double va = value(a);
  const double s = va >= 0.0 ? 1.0 / (1.0 + std::exp(-va))
                             : std::exp(va) / (1.0 + std::exp(va));
  Value out = make_node(s, 1);
  push_arg(a, s * (1.0 - s));
  return out;
}

Value Tape::leaky_relu(Value a, double slope) {
  const double va = value(a);
  Value out = make_node(va >= 0.0 ? va : slope * va, 1);
  push_arg(a, va >= 0.0 ? 1.0 : slope);
  return out;
}

Value Tape::dot(std::span<const Value> a, std::span<const Value> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += value(a[i]) * value(b[i]);
  Value out = make_node(acc, static_cast<std::uint32_t>(2 * a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) push_arg(a[i], value(b[i]));
  for (std::size_t i = 0; i < b.size(); ++i) push_arg(b[i], value(a[i]));
  return out;
}

Value Tape::dot_const(std::span<const Value> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("dot_const: size mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += value(a[i]) * b[i];
  Value out = make_node(acc, static_cast<std::uint32_t>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) push_arg(a[i], b[i]);
  return out;
}

Value Tape::sum(std::span<const Value> xs) {
  double acc = 0.0;
  for (Value x : xs) acc += value(x);
  Value out = make_node(acc, static_cast<std::uint32_t>(xs.size()));
  for (Value x : xs) push_arg(x, 1.0);
  return out;
}

Value Tape::mean(std::span<const Value> xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty span");
  const double inv = 1.0 / static_cast<double>(xs.size());
  double acc = 0.0;
  for (Value x : xs) acc += value(x);
  Value out = make_node(acc * inv, static_cast<std::uint32_t>(xs.size()));
  for (Value x : xs) push_arg(x, inv);
  return out;
}

void Tape::backward(Value loss) {
  if (loss.id >= nodes_.size()) {
    throw std::invalid_argument("backward: node is not on this tape");
  }
  for (Node& n : nodes_) n.grad = 0.0;
  nodes_[loss.id].grad = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    const double g = n.grad;
    if (g == 0.0 || n.arg_count == 0) continue;
    for (std::uint32_t k = n.arg_begin; k < n.arg_begin + n.arg_count; ++k) {
      nodes_[parents_[k]].grad += g * partials_[k];
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  parents_.clear();
  partials_.clear();
}

}  // namespace lossmix
