#include "platehbm/plate_synth.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "platehbm/distributions.hpp"
#include "platehbm/error.hpp"

namespace phbm {

void PlateGeometry::validate() const {
  if (!(b > 0.0) || !(a >= b) || !(t > 0.0) || !std::isfinite(a) || !std::isfinite(t)) {
    throw InvalidArgument("plate geometry requires a >= b > 0 and t > 0");
  }
}

void OracleConfig::validate() const {
  if (!std::isfinite(eps0) || !std::isfinite(kappa1) || !std::isfinite(kappa2)) {
    throw InvalidArgument("oracle constants must be finite");
  }
  if (!(kappa1 > 0.0)) throw InvalidArgument("oracle kappa1 must be positive");
}

void DatasetConfig::validate() const {
  if (obs_per_plate.empty()) throw ConfigError("dataset needs at least one plate");
  for (std::size_t k = 0; k < obs_per_plate.size(); ++k) {
    if (obs_per_plate[k] <= 0) {
      throw ConfigError("observation count for plate " + std::to_string(k + 1) +
                        " must be positive");
    }
  }
  if (!(sigma_mu > 0.0) || !(sigma_sigma > 0.0) || !(mu_sigma > 0.0) || !(mu_mu > 0.0)) {
    throw ConfigError("ground-truth hyperparameters must be positive");
  }
  if (!(noise_std >= 0.0)) throw ConfigError("noise std must be non-negative");
  try {
    oracle.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

std::size_t Dataset::total_observations() const {
  return std::accumulate(plates.begin(), plates.end(), std::size_t{0},
                         [](std::size_t acc, const PlateObservations& p) {
                           return acc + p.strain.size();
                         });
}

std::vector<int> Dataset::counts() const {
  std::vector<int> n;
  n.reserve(plates.size());
  for (const auto& p : plates) n.push_back(static_cast<int>(p.strain.size()));
  return n;
}

double deflection_field(double u, double v, const PlateGeometry& geom, double amp) {
  geom.validate();
  if (!(u >= 0.0 && u <= geom.a) || !(v >= 0.0 && v <= geom.b)) {
    throw InvalidArgument("deflection_field coordinates outside the plate");
  }
  if (!(amp >= 0.0)) throw InvalidArgument("deflection amplitude must be non-negative");
  return amp * std::sin(std::numbers::pi * u / geom.a) * std::sin(std::numbers::pi * v / geom.b);
}

double strain_oracle(double amp, const OracleConfig& cfg) {
  if (!(amp >= 0.0)) throw InvalidArgument("strain_oracle requires amp >= 0");
  return cfg.eps0 + cfg.kappa1 * amp + cfg.kappa2 * amp * amp;
}

GeneratedData generate_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t K = cfg.num_plates();

  GeneratedData out;
  GroundTruth& truth = out.truth;
  truth.mu_mu = cfg.mu_mu;
  truth.sigma_mu = cfg.sigma_mu;
  truth.mu_sigma = cfg.mu_sigma;
  truth.sigma_sigma = cfg.sigma_sigma;
  truth.noise_std = cfg.noise_std;

  const NormalParams mean_dist{cfg.mu_mu, cfg.sigma_mu};
  const NormalParams std_dist{cfg.mu_sigma, cfg.sigma_sigma};
  for (std::size_t k = 0; k < K; ++k) {
    double mu_k = 0.0;
    double sigma_k = 0.0;
    do {
      sigma_k = sample_normal(std_dist, rng);
      mu_k = sample_normal(mean_dist, rng);
    } while (!(sigma_k > 0.0) || mu_k < 3.0 * sigma_k);
    truth.plate_mean.push_back(mu_k);
    truth.plate_std.push_back(sigma_k);
  }

  out.dataset.plates.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto& plate = out.dataset.plates[k];
    const NormalParams local{truth.plate_mean[k], truth.plate_std[k]};
    for (int i = 0; i < cfg.obs_per_plate[k]; ++i) {
      plate.amplitude.push_back(sample_normal_truncated_below(local, 0.0, rng));
    }
  }
  for (auto& plate : out.dataset.plates) {
    for (double amp : plate.amplitude) {
      const double noise = cfg.noise_std > 0.0 ? cfg.noise_std * rng.normal() : 0.0;
      plate.strain.push_back(strain_oracle(amp, cfg.oracle) + noise);
    }
  }
  return out;
}

PlateObservations make_training_set(const OracleConfig& oracle, int points, double amp_min,
                                    double amp_max, double noise_std, Rng& rng) {
  if (points < 1) throw InvalidArgument("training set needs at least one point");
  if (!(amp_min >= 0.0) || !(amp_max > amp_min)) {
    throw InvalidArgument("training grid requires 0 <= amp_min < amp_max");
  }
  PlateObservations set;
  for (int i = 0; i < points; ++i) {
    const double amp = points == 1 ? amp_min
                                   : amp_min + (amp_max - amp_min) * i / (points - 1.0);
    const double noise = noise_std > 0.0 ? noise_std * rng.normal() : 0.0;
    set.amplitude.push_back(amp);
    set.strain.push_back(strain_oracle(amp, oracle) + noise);
  }
  return set;
}

}  // namespace phbm
