#pragma once

#include <cstdint>
#include <vector>

#include "platehbm/rng.hpp"

namespace phbm {

/// Plate of size a × b (a ≥ b) and thickness t, all in mm.
struct PlateGeometry {
  double a = 3200.0;
  double b = 800.0;
  double t = 15.0;

  void validate() const;
};

/// Polynomial stand-in for the finite-element deflection→strain map:
/// strain = eps0 + kappa1·amp + kappa2·amp² (με, amp in mm).
struct OracleConfig {
  double eps0 = -50.0;
  double kappa1 = 25.0;
  double kappa2 = 1.5;

  void validate() const;
};

struct GroundTruth {
  double mu_mu = 5.0;
  double sigma_mu = 1.2;
  double mu_sigma = 0.5;
  double sigma_sigma = 0.15;
  std::vector<double> plate_mean;  // μ_k, mm
  std::vector<double> plate_std;   // σ_k, mm
  double noise_std = 5.0;          // με
};

struct DatasetConfig {
  std::vector<int> obs_per_plate = {20, 20, 20, 20, 20, 2};
  double mu_mu = 5.0;
  double sigma_mu = 1.2;
  double mu_sigma = 0.5;
  double sigma_sigma = 0.15;
  double noise_std = 5.0;
  OracleConfig oracle;

  std::size_t num_plates() const { return obs_per_plate.size(); }
  void validate() const;
};

/// Observed (amplitude, strain) pairs for one plate.
struct PlateObservations {
  std::vector<double> amplitude;  // mm
  std::vector<double> strain;     // με
};

/// Observations for all plates. Generation ground truth is returned next to
/// the dataset by generate_dataset, never stored inside it.
struct Dataset {
  std::vector<PlateObservations> plates;

  std::size_t num_plates() const { return plates.size(); }
  std::size_t total_observations() const;
  std::vector<int> counts() const;
};

struct GeneratedData {
  Dataset dataset;
  GroundTruth truth;
};

/// amp·sin(πu/a)·sin(πv/b). Throws InvalidArgument outside the plate.
double deflection_field(double u, double v, const PlateGeometry& geom, double amp);

/// Throws InvalidArgument for negative amplitudes.
double strain_oracle(double amp, const OracleConfig& cfg);

/// Two-level draw: (μ_k, σ_k) from the global Normals, then N_k amplitudes per
/// plate, then strains through the oracle plus white noise. Negative scales and
/// amplitudes are resampled, as are plate means closer than 3σ_k to zero.
GeneratedData generate_dataset(const DatasetConfig& cfg, std::uint64_t seed);

/// Synthetic "FE runs" used to train a surrogate: a uniform amplitude grid
/// pushed through the oracle with additive noise.
PlateObservations make_training_set(const OracleConfig& oracle, int points, double amp_min,
                                    double amp_max, double noise_std, Rng& rng);

}  // namespace phbm
