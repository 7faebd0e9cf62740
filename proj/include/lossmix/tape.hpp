#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lossmix {

/// Handle to a scalar node on a Tape.
struct Value {
  std::uint32_t id = 0;
};

/// Reverse-mode differentiation tape over scalar nodes.
///
/// Each operation records its forward value together with the local partial
/// derivatives with respect to its parents, so the backward sweep is a single
/// reverse pass over the node list (creation order is topological by
/// construction; the graph is acyclic because operations can only reference
/// already-existing nodes). Variable-arity nodes (dot, sum) keep the node
/// count small for dense-layer arithmetic.
///
/// A tape is single-threaded; independent tapes on independent threads are
/// safe. reset() clears the recording but keeps allocated capacity so a
/// training loop can reuse one tape per update step.
class Tape {
 public:
  /// Node with no parents and no gradient of interest (inputs, targets).
  Value constant(double v) { return make_node(v, 0); }

  /// Differentiable input (network parameter, staged embedding).
  Value leaf(double v) { return make_node(v, 0); }

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value div(Value a, Value b);
  Value neg(Value a);
  Value add_const(Value a, double c);
  Value mul_const(Value a, double c);

  Value exp_(Value a);
  Value log_(Value a);
  Value sqrt_(Value a);
  Value square(Value a);
  Value sigmoid(Value a);
  Value leaky_relu(Value a, double slope);

  /// Inner product of two equally sized node spans.
  Value dot(std::span<const Value> a, std::span<const Value> b);
  /// Inner product of nodes with a constant vector (dense layer on a
  /// constant input frame).
  Value dot_const(std::span<const Value> a, std::span<const double> b);

  Value sum(std::span<const Value> xs);
  Value mean(std::span<const Value> xs);

  double value(Value v) const { return nodes_[v.id].value; }
  double grad(Value v) const { return nodes_[v.id].grad; }

  /// Reverse sweep from `loss` (seeded with 1). Gradients accumulate into
  /// every node; unreached nodes keep gradient zero. Idempotent per call:
  /// all gradients are cleared first.
  void backward(Value loss);

  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    double value;
    double grad;
    std::uint32_t arg_begin;
    std::uint32_t arg_count;
  };

  Value make_node(double value, std::uint32_t arg_count);
  void push_arg(Value parent, double partial);

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> parents_;
  std::vector<double> partials_;
};

}  // namespace lossmix
