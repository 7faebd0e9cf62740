#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lossmix/mixing.hpp"

namespace lossmix::cli {

/// Parsed rho spec string: "identity", "pow:<c>" or "neural:<seed>".
/// The neural form builds a seeded random-weight MLP and embedding; the
/// shared_ptr keeps the network alive for copies of the spec.
struct RhoSpec {
  enum class Kind { Identity, Power, Neural };
  Kind kind = Kind::Identity;
  double power = 1.0;
  std::shared_ptr<Network> mlp;
  std::vector<double> embedding;

  MixingFunction mixing() const;
};

/// Throws std::invalid_argument on a malformed spec.
RhoSpec parse_rho_spec(const std::string& spec);

/// Runs the command-line surface. `args` excludes the program name.
/// Exit codes: 0 success, 1 usage, 2 numeric failure, 3 I/O.
int run(std::vector<std::string> args);

}  // namespace lossmix::cli
