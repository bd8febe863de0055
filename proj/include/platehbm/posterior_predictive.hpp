#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "platehbm/nuts.hpp"
#include "platehbm/rng.hpp"
#include "platehbm/surrogate_gpr.hpp"

namespace phbm {

enum class PoolingSource { PartialPooling, NoPooling };

std::string to_string(PoolingSource source);

struct PredictiveSamples {
  int plate = 0;  // 1-based label
  PoolingSource source = PoolingSource::PartialPooling;
  std::vector<double> strains;  // με
};

/// Posterior draws of the parameters that drive one plate's predictions,
/// flattened chain-major.
struct PlateParameterDraws {
  std::vector<double> mean;   // μ_k, mm
  std::vector<double> std;    // σ_k, mm
  std::vector<double> noise;  // γ, με
};

/// Pull μ_k, σ_k and γ for plate `plate` out of a chain set. Looks up
/// "mu_w[k]", "sigma_w[k]" and either "gamma[k]" or "gamma". Throws
/// InvalidArgument when a column is missing.
PlateParameterDraws extract_plate_draws(const Chains& chains, int plate);

/// For each posterior draw: w ~ N(μ_k, σ_k²) truncated at 0, strain =
/// surrogate mean at w plus N(0, γ²) noise using the same draw's γ.
PredictiveSamples draw_predictive(const PlateParameterDraws& draws, int plate,
                                  PoolingSource source, const GprModel& surrogate, Rng& rng);

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
  bool degenerate = false;
};

/// Silverman's rule: 0.9·min(sd, IQR/1.34)·n^(−1/5).
double silverman_bandwidth(const std::vector<double>& samples);

/// Gaussian KDE on `points` grid nodes spanning data ± 4 bandwidths.
KdeCurve kde(const std::vector<double>& samples, std::optional<double> bandwidth = std::nullopt,
             int points = 512);

/// Trapezoid integral of a curve.
double integrate(const KdeCurve& curve);

struct ThresholdSet {
  std::vector<double> levels;        // mm, strictly increasing
  std::vector<double> strain_means;  // με
};

/// Each level is pushed through the surrogate once per γ draw with
/// likelihood noise added, and the results averaged.
ThresholdSet threshold_strains(const std::vector<double>& levels, const GprModel& surrogate,
                               const std::vector<double>& gamma_draws, Rng& rng);

double sample_std(const std::vector<double>& values);

/// Fraction of samples strictly above `threshold`.
double exceedance_probability(const std::vector<double>& samples, double threshold);

struct SourceDetection {
  PoolingSource source = PoolingSource::PartialPooling;
  KdeCurve curve;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> exceedance;  // one per threshold level
};

struct DetectionReport {
  int plate = 0;
  ThresholdSet thresholds;
  SourceDetection partial;
  SourceDetection none;
  /// no-pooling predictive std / partial-pooling predictive std.
  double variance_reduction_ratio = 1.0;
};

DetectionReport compare_pooling(const PredictiveSamples& partial, const PredictiveSamples& none,
                                const ThresholdSet& thresholds, int kde_points = 512);

}  // namespace phbm
