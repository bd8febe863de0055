#include "platehbm/posterior_predictive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "platehbm/diagnostics.hpp"
#include "platehbm/distributions.hpp"
#include "platehbm/error.hpp"

namespace phbm {

std::string to_string(PoolingSource source) {
  return source == PoolingSource::PartialPooling ? "partial_pooling" : "no_pooling";
}

namespace {

std::vector<double> flatten_column(const Chains& chains, const std::string& name) {
  const std::size_t idx = chains.find(name);
  if (idx == static_cast<std::size_t>(-1)) {
    throw InvalidArgument("chains have no column '" + name + "'");
  }
  std::vector<double> out;
  for (const auto& c : chains.param(idx)) out.insert(out.end(), c.begin(), c.end());
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

PlateParameterDraws extract_plate_draws(const Chains& chains, int plate) {
  const std::string k = std::to_string(plate);
  PlateParameterDraws d;
  d.mean = flatten_column(chains, "mu_w[" + k + "]");
  d.std = flatten_column(chains, "sigma_w[" + k + "]");
  const std::string indexed = "gamma[" + k + "]";
  d.noise = flatten_column(chains, chains.find(indexed) != static_cast<std::size_t>(-1) ? indexed
                                                                                        : "gamma");
  return d;
}

PredictiveSamples draw_predictive(const PlateParameterDraws& draws, int plate,
                                  PoolingSource source, const GprModel& surrogate, Rng& rng) {
  const std::size_t n = draws.mean.size();
  if (draws.std.size() != n || draws.noise.size() != n) {
    throw InvalidArgument("parameter draws differ in length");
  }
  PredictiveSamples out;
  out.plate = plate;
  out.source = source;
  out.strains.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = draws.mean[i];
    const double sd = draws.std[i];
    const double gamma = draws.noise[i];
    if (!std::isfinite(mu) || !(sd >= 0.0) || !(gamma >= 0.0)) {
      throw InvalidArgument("invalid posterior draw for predictive sampling");
    }
    const double w = sd > 0.0 ? sample_normal_truncated_below({mu, sd}, 0.0, rng) : std::max(mu, 0.0);
    const double noise = gamma > 0.0 ? gamma * rng.normal() : 0.0;
    out.strains.push_back(surrogate.mean(w) + noise);
  }
  return out;
}

double silverman_bandwidth(const std::vector<double>& samples) {
  if (samples.size() < 2) throw InvalidArgument("bandwidth needs at least two samples");
  const double sd = sample_std(samples);
  const double iqr = quantile(samples, 0.75) - quantile(samples, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;  // IQR collapses on heavily tied data
  return 0.9 * spread * std::pow(static_cast<double>(samples.size()), -0.2);
}

KdeCurve kde(const std::vector<double>& samples, std::optional<double> bandwidth, int points) {
  if (samples.size() < 2) throw InvalidArgument("kde needs at least two samples");
  if (points < 2) throw InvalidArgument("kde grid needs at least two points");
  KdeCurve curve;
  double h = bandwidth ? *bandwidth : silverman_bandwidth(samples);
  if (!(h > 0.0)) {
    const double scale = std::max(1.0, std::abs(samples.front()));
    h = 1e-6 * scale;
    curve.degenerate = true;
    warn("kde: zero-variance sample; density collapses to a spike");
  }
  curve.bandwidth = h;
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *mn - 4.0 * h;
  const double hi = *mx + 4.0 * h;
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  curve.grid.resize(static_cast<std::size_t>(points));
  curve.density.resize(static_cast<std::size_t>(points));
  for (int g = 0; g < points; ++g) {
    const double x = lo + (hi - lo) * g / (points - 1.0);
    double sum = 0.0;
    for (double s : samples) {
      const double z = (x - s) / h;
      sum += std::exp(-0.5 * z * z);
    }
    curve.grid[static_cast<std::size_t>(g)] = x;
    curve.density[static_cast<std::size_t>(g)] = sum * norm;
  }
  return curve;
}

double integrate(const KdeCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.grid.size(); ++i) {
    area += 0.5 * (curve.density[i] + curve.density[i - 1]) * (curve.grid[i] - curve.grid[i - 1]);
  }
  return area;
}

ThresholdSet threshold_strains(const std::vector<double>& levels, const GprModel& surrogate,
                               const std::vector<double>& gamma_draws, Rng& rng) {
  if (levels.empty()) throw InvalidArgument("threshold levels are empty");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0) || (i > 0 && !(levels[i] > levels[i - 1]))) {
      throw InvalidArgument("threshold levels must be positive and strictly increasing");
    }
  }
  if (gamma_draws.empty()) throw InvalidArgument("threshold strains need noise draws");
  ThresholdSet set;
  set.levels = levels;
  for (double level : levels) {
    const double m = surrogate.mean(level);
    double noise_sum = 0.0;
    for (double gamma : gamma_draws) noise_sum += gamma > 0.0 ? gamma * rng.normal() : 0.0;
    set.strain_means.push_back(m + noise_sum / static_cast<double>(gamma_draws.size()));
  }
  return set;
}

double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean_of(values);
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(values.size() - 1));
}

double exceedance_probability(const std::vector<double>& samples, double threshold) {
  if (samples.empty()) throw InvalidArgument("exceedance of an empty sample");
  const auto above = std::count_if(samples.begin(), samples.end(),
                                   [threshold](double s) { return s > threshold; });
  return static_cast<double>(above) / static_cast<double>(samples.size());
}

DetectionReport compare_pooling(const PredictiveSamples& partial, const PredictiveSamples& none,
                                const ThresholdSet& thresholds, int kde_points) {
  if (partial.plate != none.plate) throw InvalidArgument("predictive samples are for different plates");
  DetectionReport r;
  r.plate = partial.plate;
  r.thresholds = thresholds;
  auto fill = [&](const PredictiveSamples& s) {
    SourceDetection d;
    d.source = s.source;
    d.curve = kde(s.strains, std::nullopt, kde_points);
    d.mean = mean_of(s.strains);
    d.std = sample_std(s.strains);
    for (double t : thresholds.strain_means) d.exceedance.push_back(exceedance_probability(s.strains, t));
    return d;
  };
  r.partial = fill(partial);
  r.none = fill(none);
  if (r.partial.std > 0.0) {
    r.variance_reduction_ratio = r.none.std / r.partial.std;
  } else {
    r.variance_reduction_ratio = r.none.std > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  }
  return r;
}

}  // namespace phbm
