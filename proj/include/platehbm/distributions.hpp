#pragma once

#include "platehbm/rng.hpp"

namespace phbm {

struct NormalParams {
  double mean = 0.0;
  double std = 1.0;  // > 0

  /// Throws InvalidArgument unless std > 0 and both fields are finite.
  void validate() const;
};

struct GammaParams {
  double shape = 1.0;  // > 0
  double rate = 1.0;   // > 0, inverse units of the variable

  void validate() const;
};

struct NormalGradient {
  double d_x = 0.0;
  double d_mean = 0.0;
  double d_std = 0.0;
};

struct GammaMoments {
  double mean = 0.0;
  double variance = 0.0;
};

inline constexpr double kLogSqrtTwoPi = 0.91893853320467274178;

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
double log_gamma(double x);

double normal_logpdf(double x, const NormalParams& p);
NormalGradient normal_logpdf_grad(double x, const NormalParams& p);

/// shape·ln(rate) − lnΓ(shape) + (shape−1)·ln x − rate·x. Throws DomainError for x ≤ 0.
double gamma_logpdf(double x, const GammaParams& p);
/// d/dx of gamma_logpdf.
double gamma_logpdf_grad(double x, const GammaParams& p);

GammaMoments gamma_moments(const GammaParams& p);
/// Inverse of gamma_moments: shape = mean²/var, rate = mean/var.
GammaParams gamma_from_moments(double mean, double variance);

/// Standard normal CDF and friends.
double normal_cdf(double z);
/// ln Φ(z), accurate in the far lower tail.
double log_normal_cdf(double z);
/// d/dz ln Φ(z) = φ(z)/Φ(z).
double log_normal_cdf_grad(double z);
/// Φ⁻¹(p) for p in (0, 1); Acklam's approximation refined by one Halley step.
double normal_quantile(double p);

double sample_normal(const NormalParams& p, Rng& rng);
/// Marsaglia–Tsang; shapes below 1 use the U^(1/shape) boost.
double sample_gamma(const GammaParams& p, Rng& rng);
/// Normal restricted to [lower, ∞).
double sample_normal_truncated_below(const NormalParams& p, double lower, Rng& rng);

}  // namespace phbm
