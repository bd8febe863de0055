#pragma once

#include <string>
#include <vector>

#include "platehbm/nuts.hpp"

namespace phbm {

/// Draws of one parameter, one inner vector per chain (equal lengths).
using ChainDraws = std::vector<std::vector<double>>;

struct RhatResult {
  double value = 1.0;
  /// Zero within-chain variance somewhere, or a constant parameter.
  bool degenerate = false;
};

/// Rank-normalized split R̂: max of the bulk and folded-tail variants.
/// Needs ≥ 2 chains with ≥ 4 draws each. A constant parameter gives 1.0 with
/// the degenerate flag set.
RhatResult rank_normalized_rhat(const ChainDraws& chains);

/// Classic split R̂ on the given values (no rank normalization).
double split_rhat(const ChainDraws& chains);

enum class EssKind {
  Bulk,   // rank-normalized split chains
  Tail,   // min over the 5% and 95% quantile indicators
  Basic,  // raw split chains; used for the Monte Carlo standard error of the mean
};

struct EssResult {
  double value = 0.0;
  bool degenerate = false;
};

/// Multi-chain ESS using Geyer's initial monotone sequence.
EssResult ess(const ChainDraws& chains, EssKind kind);

/// Joint normal scores Φ⁻¹((r − 3/8)/(S + 1/4)) with average ranks for ties.
ChainDraws rank_normalize(const ChainDraws& chains);

/// Linear-interpolation (type 7) sample quantile.
double quantile(std::vector<double> values, double prob);

struct ParamSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double mcse_mean = 0.0;
  double rhat = 1.0;
  double ess_bulk = 0.0;
  double ess_tail = 0.0;
  bool degenerate = false;
};

struct Summary {
  std::vector<ParamSummary> params;
  double rhat_threshold = 1.01;
  double max_rhat = 1.0;
  bool gate_passed = true;
  std::size_t divergences = 0;
  double divergence_rate = 0.0;
  std::size_t n_chains = 0;
  std::size_t n_draws = 0;

  const ParamSummary* find(const std::string& name) const;
};

/// Per-parameter statistics plus the convergence gate (all R̂ < threshold).
Summary summarize(const Chains& chains, double rhat_threshold = 1.01);

/// Fixed-width text table.
std::string format_summary(const Summary& summary);

}  // namespace phbm
