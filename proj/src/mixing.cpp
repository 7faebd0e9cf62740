#include "lossmix/mixing.hpp"

#include <cfloat>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "lossmix/errors.hpp"

namespace lossmix {

MixingDistribution MixingDistribution::uniform() {
  return MixingDistribution{Kind::Uniform01, 1.0};
}

MixingDistribution MixingDistribution::symmetric_beta(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("symmetric_beta: alpha must be positive");
  }
  return MixingDistribution{Kind::SymmetricBeta, alpha};
}

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  std::ostringstream os;
  os << "incomplete beta continued fraction did not converge (a=" << a
     << ", b=" << b << ", x=" << x << ")";
  throw NumericError(os.str());
}

double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) -
                             std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return bt * betacf(a, b, x) / a;
  }
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double beta_cdf(double alpha, double x) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("beta_cdf: alpha must be positive");
  }
  return ibeta(alpha, alpha, x);
}

double beta_inverse_cdf(double alpha, double u) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("beta_inverse_cdf: alpha must be positive");
  }
  if (!(u >= 0.0 && u <= 1.0)) {
    throw std::invalid_argument("beta_inverse_cdf: u outside [0, 1]");
  }
  if (u == 0.0) return 0.0;
  if (u == 1.0) return 1.0;
  if (u == 0.5) return 0.5;  // median of a symmetric distribution

  // Bisection to the 1e-12 interval tolerance and beyond when the local
  // density is steep (small alpha near the endpoints), until the CDF
  // residual itself is inside tolerance. 200 iterations reach
  // adjacent-double resolution from [0, 1].
  constexpr int kMaxIter = 200;
  constexpr double kIntervalTol = 1e-12;
  constexpr double kResidualTol = 1e-11;
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const double fmid = ibeta(alpha, alpha, mid) - u;
    if (fmid == 0.0) return mid;
    if (fmid < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= kIntervalTol && std::fabs(fmid) <= kResidualTol) break;
  }
  const double x = 0.5 * (lo + hi);
  if (std::fabs(ibeta(alpha, alpha, x) - u) > 1e-10) {
    std::ostringstream os;
    os << "beta_inverse_cdf did not converge (alpha=" << alpha << ", u=" << u
       << ")";
    throw NumericError(os.str());
  }
  return x;
}

double sample_lambda(const MixingDistribution& dist, Rng& rng) {
  const double u = rng.uniform();
  switch (dist.kind) {
    case MixingDistribution::Kind::Uniform01:
      return u;
    case MixingDistribution::Kind::SymmetricBeta:
      return beta_inverse_cdf(dist.alpha, u);
  }
  return u;
}

namespace {
double stable_sigmoid(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                  : std::exp(v) / (1.0 + std::exp(v));
}
}  // namespace

double neural_rho_exponent(double mlp_output, double C) {
  if (!(C > 1.0)) {
    throw std::invalid_argument("neural_rho_exponent: C must exceed 1");
  }
  // Written as exp(log(C) * (2s - 1)) so the plain and taped evaluations
  // produce bit-identical values.
  const double s = stable_sigmoid(mlp_output);
  return std::exp((s * 2.0 - 1.0) * std::log(C));
}

RhoFunction RhoFunction::identity() { return RhoFunction{}; }

RhoFunction RhoFunction::power(double exponent) {
  if (!(exponent > 0.0) || !std::isfinite(exponent)) {
    throw std::invalid_argument("RhoFunction::power: exponent must be > 0");
  }
  RhoFunction r;
  r.kind_ = Kind::Power;
  r.exponent_ = exponent;
  return r;
}

RhoFunction RhoFunction::neural(const Network* mlp, double C) {
  if (mlp == nullptr) {
    throw std::invalid_argument("RhoFunction::neural: null MLP");
  }
  if (!(C > 1.0)) {
    throw std::invalid_argument("RhoFunction::neural: C must exceed 1");
  }
  RhoFunction r;
  r.kind_ = Kind::Neural;
  r.capacity_ = C;
  r.mlp_ = mlp;
  return r;
}

double RhoFunction::exponent_for(std::span<const double> embedding) const {
  switch (kind_) {
    case Kind::Identity:
      return 1.0;
    case Kind::Power:
      return exponent_;
    case Kind::Neural:
      return neural_rho_exponent(forward_mlp(*mlp_, embedding), capacity_);
  }
  return 1.0;
}

namespace {

double endpoint_limit(double lam) {
  if (lam < 0.5) return 0.0;
  if (lam > 0.5) return 1.0;
  return 0.5;
}

// phi for the power family rho(x) = x^gamma, shared by Identity / Power /
// the plain Neural path.
double phi_power(double lam, double gamma) {
  if (lam <= 0.0) return 0.0;
  if (lam >= 1.0) return 1.0;
  const double a = std::pow(lam, gamma);
  const double b = std::pow(1.0 - lam, gamma);
  const double s = a + b;
  if (!(s >= DBL_MIN)) return endpoint_limit(lam);
  return a / s;
}

// Same family through exp(gamma * log(.)), mirroring the tape ops exactly.
double phi_power_explog(double lam, double gamma) {
  if (lam <= 0.0) return 0.0;
  if (lam >= 1.0) return 1.0;
  const double a = std::exp(gamma * std::log(lam));
  const double b = std::exp(gamma * std::log(1.0 - lam));
  const double s = a + b;
  if (!(s >= DBL_MIN)) return endpoint_limit(lam);
  return a / s;
}

}  // namespace

double phi_eval(const MixingFunction& phi, double lam,
                std::span<const double> embedding) {
  const RhoFunction& rho = phi.rho();
  const bool neural = rho.kind() == RhoFunction::Kind::Neural;
  if (neural && embedding.empty()) {
    throw std::invalid_argument("phi_eval: Neural rho requires an embedding");
  }
  if (!neural && !embedding.empty()) {
    throw std::invalid_argument(
        "phi_eval: embedding supplied for a non-neural rho");
  }
  if (neural) {
    return phi_power_explog(lam, rho.exponent_for(embedding));
  }
  return phi_power(lam, rho.exponent_for({}));
}

Value phi_eval_differentiable(Tape& tape, const TapedNetwork& mlp, double C,
                              double lam, std::span<const Value> embedding) {
  if (embedding.empty()) {
    throw std::invalid_argument(
        "phi_eval_differentiable: embedding node span is empty");
  }
  if (!(C > 1.0)) {
    throw std::invalid_argument("phi_eval_differentiable: C must exceed 1");
  }
  if (lam <= 0.0) return tape.constant(0.0);
  if (lam >= 1.0) return tape.constant(1.0);
  // phi(0.5) = 0.5 for every parameter setting, so the derivative at the
  // exact midpoint is identically zero.
  if (lam == 0.5) return tape.constant(0.5);

  const Value m = forward_mlp(tape, mlp, embedding);
  const Value swing =
      tape.add_const(tape.mul_const(tape.sigmoid(m), 2.0), -1.0);
  const Value gamma = tape.exp_(tape.mul_const(swing, std::log(C)));
  const Value a = tape.exp_(tape.mul_const(gamma, std::log(lam)));
  const Value b = tape.exp_(tape.mul_const(gamma, std::log(1.0 - lam)));
  const Value s = tape.add(a, b);
  if (!(tape.value(s) >= DBL_MIN)) {
    return tape.constant(endpoint_limit(lam));
  }
  return tape.div(a, s);
}

std::vector<std::pair<double, double>> phi_curve_table(
    const MixingFunction& phi, int n_points,
    std::span<const double> embedding) {
  if (n_points < 2) {
    throw std::invalid_argument("phi_curve_table: n_points must be >= 2");
  }
  std::vector<std::pair<double, double>> table;
  table.reserve(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    const double lam =
        static_cast<double>(i) / static_cast<double>(n_points - 1);
    table.emplace_back(lam, phi_eval(phi, lam, embedding));
  }
  return table;
}

MixingFamily power_mixing_family() {
  MixingFamily family;
  family.param_count = 1;
  family.phi = [](double lam, std::span<const double> alpha) {
    return phi_power(lam, alpha[0]);
  };
  family.phi_grad = [](double lam, std::span<const double> alpha,
                       std::span<double> grad_out) {
    if (lam <= 0.0 || lam >= 1.0) {
      grad_out[0] = 0.0;
      return;
    }
    const double c = alpha[0];
    const double a = std::pow(lam, c);
    const double b = std::pow(1.0 - lam, c);
    const double s = a + b;
    if (!(s >= DBL_MIN)) {
      grad_out[0] = 0.0;
      return;
    }
    // d/dc [a/(a+b)] with da/dc = a*log(lam), db/dc = b*log(1-lam).
    grad_out[0] = a * b * (std::log(lam) - std::log(1.0 - lam)) / (s * s);
  };
  return family;
}

std::vector<double> reparam_gradient_estimate(const ScalarObjective& objective,
                                              const MixingFamily& family,
                                              std::span<const double> alpha,
                                              int n_samples, Rng& rng) {
  if (n_samples <= 0) {
    throw std::invalid_argument(
        "reparam_gradient_estimate: n_samples must be positive");
  }
  if (alpha.size() != family.param_count) {
    throw std::invalid_argument(
        "reparam_gradient_estimate: alpha length mismatch");
  }
  std::vector<double> accum(family.param_count, 0.0);
  std::vector<double> local(family.param_count, 0.0);
  for (int i = 0; i < n_samples; ++i) {
    const double lam = rng.uniform();
    const double shaped = family.phi(lam, alpha);
    const double dval = objective.deriv(shaped);
    family.phi_grad(lam, alpha, local);
    for (std::size_t j = 0; j < accum.size(); ++j) {
      accum[j] += dval * local[j];
    }
  }
  for (double& g : accum) g /= static_cast<double>(n_samples);
  return accum;
}

}  // namespace lossmix
