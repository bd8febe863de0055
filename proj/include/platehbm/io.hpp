#pragma once

#include <filesystem>
#include <string>

#include "platehbm/diagnostics.hpp"
#include "platehbm/hier_model.hpp"
#include "platehbm/nuts.hpp"
#include "platehbm/plate_synth.hpp"
#include "platehbm/posterior_predictive.hpp"
#include "platehbm/surrogate_gpr.hpp"

namespace phbm::io {

namespace fs = std::filesystem;

/// Whole-file read/write; failures raise IoError naming the path.
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// plate_index,obs_index,amplitude_mm,strain_microeps with 1-based indices.
std::string dataset_csv(const Dataset& data);
Dataset parse_dataset_csv(const std::string& text);
void write_dataset(const fs::path& path, const Dataset& data);
Dataset read_dataset(const fs::path& path);

/// Generation settings and the ground truth as JSON text.
std::string ground_truth_json(const DatasetConfig& cfg, const GroundTruth& truth, std::uint64_t seed);

std::string surrogate_json(const GprModel& model, int plate);
GprModel parse_surrogate_json(const std::string& text);

/// Chain directory layout: chain_<c>.csv (constrained draws), stats.json,
/// params.json (layout manifest), summary.json, summary.txt.
void write_chains(const fs::path& dir, const Chains& chains, const ParamLayout& layout,
                  const Summary& summary);
/// Loads draws and sampler statistics back (unconstrained copies are not stored).
Chains read_chains(const fs::path& dir);

std::string summary_json(const Summary& summary);
std::string layout_json(const ParamLayout& layout);

}  // namespace phbm::io
