#include "platehbm/distributions.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "platehbm/error.hpp"

namespace phbm {

namespace {

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw InvalidArgument(std::string(what) + " must be finite");
}

// Lanczos coefficients for g = 7, n = 9.
constexpr std::array<double, 9> kLanczos = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

}  // namespace

void NormalParams::validate() const {
  require_finite(mean, "normal mean");
  require_finite(std, "normal std");
  if (!(std > 0.0)) throw InvalidArgument("normal std must be positive");
}

void GammaParams::validate() const {
  require_finite(shape, "gamma shape");
  require_finite(rate, "gamma rate");
  if (!(shape > 0.0)) throw InvalidArgument("gamma shape must be positive");
  if (!(rate > 0.0)) throw InvalidArgument("gamma rate must be positive");
}

double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("log_gamma requires finite x > 0");
  if (x < 0.5) {
    // Reflection: Γ(x)Γ(1−x) = π / sin(πx).
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) - log_gamma(1.0 - x);
  }
  const double z = x - 1.0;
  double a = kLanczos[0];
  const double t = z + 7.5;
  for (std::size_t i = 1; i < kLanczos.size(); ++i) a += kLanczos[i] / (z + static_cast<double>(i));
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(a);
}

double normal_logpdf(double x, const NormalParams& p) {
  require_finite(x, "normal_logpdf x");
  p.validate();
  const double z = (x - p.mean) / p.std;
  return -kLogSqrtTwoPi - std::log(p.std) - 0.5 * z * z;
}

NormalGradient normal_logpdf_grad(double x, const NormalParams& p) {
  require_finite(x, "normal_logpdf x");
  p.validate();
  const double diff = x - p.mean;
  const double inv_var = 1.0 / (p.std * p.std);
  NormalGradient g;
  g.d_x = -diff * inv_var;
  g.d_mean = diff * inv_var;
  g.d_std = diff * diff * inv_var / p.std - 1.0 / p.std;
  return g;
}

double gamma_logpdf(double x, const GammaParams& p) {
  p.validate();
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("gamma_logpdf requires finite x > 0");
  return p.shape * std::log(p.rate) - log_gamma(p.shape) + (p.shape - 1.0) * std::log(x) - p.rate * x;
}

double gamma_logpdf_grad(double x, const GammaParams& p) {
  p.validate();
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("gamma_logpdf requires finite x > 0");
  return (p.shape - 1.0) / x - p.rate;
}

GammaMoments gamma_moments(const GammaParams& p) {
  p.validate();
  return {p.shape / p.rate, p.shape / (p.rate * p.rate)};
}

GammaParams gamma_from_moments(double mean, double variance) {
  if (!(mean > 0.0) || !(variance > 0.0) || !std::isfinite(mean) || !std::isfinite(variance)) {
    throw InvalidArgument("gamma_from_moments requires positive finite mean and variance");
  }
  return {mean * mean / variance, mean / variance};
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_normal_cdf(double z) {
  if (z > -35.0) return std::log(normal_cdf(z));
  // Asymptotic expansion of the Mills ratio.
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - kLogSqrtTwoPi - std::log(-z) + std::log(series);
}

double log_normal_cdf_grad(double z) {
  if (z > -35.0) {
    const double log_pdf = -0.5 * z * z - kLogSqrtTwoPi;
    return std::exp(log_pdf - log_normal_cdf(z));
  }
  const double z2 = z * z;
  // φ/Φ ≈ −z / (1 − 1/z² + 3/z⁴ − 15/z⁶)
  return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile requires p in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double sample_normal(const NormalParams& p, Rng& rng) {
  p.validate();
  return p.mean + p.std * rng.normal();
}

double sample_gamma(const GammaParams& p, Rng& rng) {
  p.validate();
  if (p.shape < 1.0) {
    const double boost = std::pow(rng.uniform_open(), 1.0 / p.shape);
    return sample_gamma({p.shape + 1.0, p.rate}, rng) * boost;
  }
  const double d = p.shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v / p.rate;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / p.rate;
  }
}

double sample_normal_truncated_below(const NormalParams& p, double lower, Rng& rng) {
  p.validate();
  const double alpha = (lower - p.mean) / p.std;
  if (alpha < 1.0) {
    // Acceptance probability is at least Φ(−1) ≈ 0.16.
    for (;;) {
      const double z = rng.normal();
      if (z >= alpha) return p.mean + p.std * z;
    }
  }
  // Robert (1995) exponential proposal for the far tail.
  const double rate = 0.5 * (alpha + std::sqrt(alpha * alpha + 4.0));
  for (;;) {
    const double z = alpha - std::log(rng.uniform_open()) / rate;
    const double rho = std::exp(-0.5 * (z - rate) * (z - rate));
    if (rng.uniform() <= rho) return p.mean + p.std * z;
  }
}

}  // namespace phbm
