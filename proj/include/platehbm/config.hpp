#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "platehbm/hier_model.hpp"
#include "platehbm/nuts.hpp"
#include "platehbm/plate_synth.hpp"
#include "platehbm/surrogate_gpr.hpp"

namespace phbm {

enum class TrainingSource {
  Grid,          // uniform amplitude grid through the oracle
  Observations,  // the plate's own observed pairs
};

struct SurrogateConfig {
  TrainingSource training_source = TrainingSource::Grid;
  int grid_points = 30;
  double grid_min = 0.0;    // mm
  double grid_max = 12.0;   // mm
  double training_noise_std = 5.0;  // με
  KernelConfig init;
  bool optimize = true;
  int restarts = 5;
};

struct DetectionConfig {
  std::vector<double> levels = {4.0, 6.0, 8.0};  // mm
  int kde_points = 512;
  /// Plate whose pooled/unpooled predictions are compared; 0 picks the plate
  /// with the fewest observations (last one on ties).
  int focus_plate = 0;
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  std::string output_dir = "phbm_out";
  DatasetConfig dataset;
  PlateGeometry geometry;
  SurrogateConfig surrogate;
  Hyperpriors priors;
  SamplerConfig sampler;
  DetectionConfig detection;
  double rhat_threshold = 1.01;

  void validate() const;
  int resolved_focus_plate() const;
};

/// Reads an INI-style file ([section] + key = value). Unknown keys are errors.
PipelineConfig load_config(const std::string& path);

/// Set one value by dotted key, e.g. "sampler.warmup" or "priors.noise_shape".
void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// Canonical INI text of every setting; load_config on it reproduces `cfg`.
std::string to_ini(const PipelineConfig& cfg);

/// SHA-256 (hex) of the canonical settings, excluding the output directory.
std::string config_hash(const PipelineConfig& cfg);

/// Per-stage seeds derived from the pipeline seed.
enum class SeedStream : std::uint64_t {
  Dataset = 1,
  Surrogate = 2,
  HierarchicalSampler = 3,
  Detection = 4,
  IndependentSampler = 100,  // + plate label
};
std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream, std::uint64_t offset = 0);

}  // namespace phbm
