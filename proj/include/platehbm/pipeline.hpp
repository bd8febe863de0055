#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "platehbm/config.hpp"
#include "platehbm/diagnostics.hpp"
#include "platehbm/posterior_predictive.hpp"

namespace phbm {

/// Artifact locations under one output directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path dataset_csv() const { return root / "dataset.csv"; }
  std::filesystem::path dataset_json() const { return root / "dataset.json"; }
  std::filesystem::path surrogate(int plate) const {
    return root / "surrogates" / ("plate" + std::to_string(plate) + ".json");
  }
  std::filesystem::path hier_chains() const { return root / "chains" / "hier"; }
  std::filesystem::path indep_chains(int plate) const {
    return root / "chains" / ("indep_plate" + std::to_string(plate));
  }
  std::filesystem::path detection_dir() const { return root / "detection"; }
  std::filesystem::path plot_dir() const { return root / "plot_data"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path timings() const { return root / "timings.json"; }
};

/// Convergence gate result for one sampled model.
struct GateOutcome {
  std::string run;  // "hier" or "indep_plate<k>"
  double max_rhat = 1.0;
  bool passed = true;
  std::size_t divergences = 0;
  double divergence_rate = 0.0;
};

void cmd_generate(const PipelineConfig& cfg);
void cmd_train_surrogate(const PipelineConfig& cfg);
/// `plate` selects one independent model; without it every plate is run.
/// Ignored for the hierarchical model.
std::vector<GateOutcome> cmd_infer(const PipelineConfig& cfg, ModelKind kind,
                                   std::optional<int> plate = std::nullopt);
/// Reports for the focus plate plus every other plate with independent chains,
/// ordered by plate label.
std::vector<DetectionReport> cmd_detect(const PipelineConfig& cfg);
/// Writes report.txt, report.json and the plot-data bundle; returns the text.
std::string cmd_report(const PipelineConfig& cfg);

struct RunAllResult {
  std::vector<GateOutcome> gates;
  bool gates_passed = true;
  std::string report;
};

/// Every stage in order. Gate failures are recorded and the remaining stages
/// still run.
RunAllResult cmd_run_all(const PipelineConfig& cfg);

}  // namespace phbm
