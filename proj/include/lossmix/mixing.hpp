#pragma once

#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "lossmix/network.hpp"
#include "lossmix/rng.hpp"
#include "lossmix/tape.hpp"

namespace lossmix {

/// Distribution the mixing weight lambda is drawn from.
struct MixingDistribution {
  enum class Kind { Uniform01, SymmetricBeta };
  Kind kind = Kind::Uniform01;
  double alpha = 1.0;  // Beta concentration; unused for Uniform01

  static MixingDistribution uniform();
  /// Throws std::invalid_argument unless alpha > 0.
  static MixingDistribution symmetric_beta(double alpha);
};

/// Regularized incomplete beta function I_x(a, a): the CDF of the symmetric
/// Beta(a, a) distribution. Continued-fraction evaluation, accurate to
/// machine precision for a > 0.
double beta_cdf(double alpha, double x);

/// Inverse CDF of Beta(alpha, alpha) by bisection on beta_cdf. Monotone in
/// u; |beta_cdf(result) - u| <= 1e-10. Throws NumericError (with alpha and u
/// in the message) if the bracket fails to converge within the iteration cap.
double beta_inverse_cdf(double alpha, double u);

/// Draws lambda in [0, 1] by inverse-CDF transform of one uniform draw, so
/// common-random-number reuse across parameter settings is possible.
double sample_lambda(const MixingDistribution& dist, Rng& rng);

/// gamma = C^(2*sigmoid(m) - 1), the per-sample exponent of the neural rho.
/// Lies in (1/C, C); m = 0 gives the identity boundary gamma = 1.
double neural_rho_exponent(double mlp_output, double C);

/// Monotone generator rho with rho(0) = 0. Three kinds:
///   Identity      rho(x) = x
///   Power(c)      rho(x) = x^c, c > 0
///   Neural        rho(x) = x^gamma with gamma = C^(2*sigmoid(MLP(e)) - 1);
///                 monotone by construction for every parameter setting.
class RhoFunction {
 public:
  enum class Kind { Identity, Power, Neural };

  static RhoFunction identity();
  static RhoFunction power(double exponent);
  static RhoFunction neural(const Network* mlp, double C);

  Kind kind() const { return kind_; }
  double power_exponent() const { return exponent_; }
  double capacity() const { return capacity_; }
  const Network* mlp() const { return mlp_; }

  /// Effective power exponent for an embedding (1 for Identity, c for
  /// Power, gamma for Neural).
  double exponent_for(std::span<const double> embedding) const;

 private:
  Kind kind_ = Kind::Identity;
  double exponent_ = 1.0;
  double capacity_ = 0.0;  // C, Neural only
  const Network* mlp_ = nullptr;
};

/// Mixing function phi(lam) = rho(lam) / (rho(lam) + rho(1 - lam)).
/// Satisfies phi(1) = 1, phi(1 - lam) = 1 - phi(lam) and monotonicity for
/// every admissible rho; endpoints are defined by their limits (phi(0) = 0,
/// phi(1) = 1) when the denominator underflows, so the value is never NaN.
class MixingFunction {
 public:
  explicit MixingFunction(RhoFunction rho) : rho_(std::move(rho)) {}
  const RhoFunction& rho() const { return rho_; }

 private:
  RhoFunction rho_;
};

/// Evaluates phi. `embedding` must be supplied iff rho is Neural.
double phi_eval(const MixingFunction& phi, double lam,
                std::span<const double> embedding = {});

/// Taped phi for a Neural rho: the forward value equals phi_eval bit for
/// bit, and backward deposits d(phi)/d(theta) into the MLP parameters and
/// d(phi)/d(e) into the embedding nodes. lam <= 0 and lam >= 1 return
/// constants (the degenerate mixtures carry no parameter gradient).
Value phi_eval_differentiable(Tape& tape, const TapedNetwork& mlp, double C,
                              double lam, std::span<const Value> embedding);

/// Evenly spaced (lambda, phi(lambda)) table including both endpoints;
/// n_points >= 2.
std::vector<std::pair<double, double>> phi_curve_table(
    const MixingFunction& phi, int n_points,
    std::span<const double> embedding = {});

/// Objective of the shaped mixing weight, with its derivative.
struct ScalarObjective {
  std::function<double(double)> value;
  std::function<double(double)> deriv;
};

/// Family of mixing functions parameterized by a real vector, exposing the
/// parameter gradient at fixed lambda (for pathwise estimation).
struct MixingFamily {
  std::size_t param_count = 0;
  std::function<double(double lam, std::span<const double> alpha)> phi;
  std::function<void(double lam, std::span<const double> alpha,
                     std::span<double> grad_out)>
      phi_grad;
};

/// Power-rho family: alpha = {exponent c}, phi_c(lam) as above.
MixingFamily power_mixing_family();

/// Pathwise (reparameterized) Monte Carlo estimate of
/// d/d(alpha) E_{lam ~ U(0,1)} objective(phi_alpha(lam)) using n_samples
/// uniform draws from rng. Deterministic under a fixed seed; throws
/// std::invalid_argument when n_samples == 0.
std::vector<double> reparam_gradient_estimate(const ScalarObjective& objective,
                                              const MixingFamily& family,
                                              std::span<const double> alpha,
                                              int n_samples, Rng& rng);

}  // namespace lossmix
