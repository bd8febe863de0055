#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "platehbm/distributions.hpp"
#include "platehbm/log_density.hpp"
#include "platehbm/plate_synth.hpp"
#include "platehbm/surrogate_gpr.hpp"

namespace phbm {

enum class ModelKind { Hierarchical, Independent };

/// Gamma priors on the four higher-level parameters and on the noise std γ.
/// Units: mm for the first four, με for γ.
struct Hyperpriors {
  GammaParams mu_mu{3.0, 0.2};
  GammaParams sigma_mu{0.8, 0.35};
  GammaParams mu_sigma{3.6, 6.0};
  GammaParams sigma_sigma{4.8, 16.0};
  GammaParams noise{80.0, 16.0};
};

enum class Transform { Exp, Softplus };

struct ParamInfo {
  std::string name;
  std::size_t index = 0;
  Transform transform = Transform::Exp;
  std::string units;
};

/// Flattened unconstrained layout:
///   [ln μ_μ, ln σ_μ, ln μ_σ, ln σ_σ, {μ_k raw}, {ln σ_k}, {w_ik raw}, ln γ]
/// where "raw" coordinates map through softplus. Dimension 4 + 2K + ΣN_k + 1.
class ParamLayout {
 public:
  ParamLayout(ModelKind kind, std::vector<int> plate_labels, std::vector<int> counts);

  std::size_t dim() const { return dim_; }
  std::size_t num_plates() const { return counts_.size(); }
  int count(std::size_t j) const { return counts_[j]; }
  int label(std::size_t j) const { return labels_[j]; }
  ModelKind kind() const { return kind_; }

  static constexpr std::size_t mu_mu() { return 0; }
  static constexpr std::size_t sigma_mu() { return 1; }
  static constexpr std::size_t mu_sigma() { return 2; }
  static constexpr std::size_t sigma_sigma() { return 3; }
  std::size_t plate_mean(std::size_t j) const { return 4 + j; }
  std::size_t plate_std(std::size_t j) const { return 4 + num_plates() + j; }
  std::size_t amplitude(std::size_t j, std::size_t i) const { return amp_offset_[j] + i; }
  std::size_t noise() const { return dim_ - 1; }

  const std::vector<ParamInfo>& params() const { return params_; }
  std::vector<std::string> names() const;
  /// Position of a named parameter, or npos.
  std::size_t find(const std::string& name) const;

 private:
  ModelKind kind_;
  std::vector<int> labels_;
  std::vector<int> counts_;
  std::vector<std::size_t> amp_offset_;
  std::size_t dim_ = 0;
  std::vector<ParamInfo> params_;
};

/// One Bayesian model over a subset of plates. Hierarchical models cover all
/// plates with one shared γ; independent models cover a single plate with its
/// own γ and higher-level nodes informed by that plate alone.
struct ModelSpec {
  ModelKind kind = ModelKind::Hierarchical;
  std::vector<int> plate_labels;                 // 1-based
  Hyperpriors hyperpriors;
  std::vector<std::vector<double>> strains;      // per included plate, με
  std::vector<std::shared_ptr<const GprModel>> surrogates;
  bool include_likelihood = true;

  ParamLayout layout() const;
  void validate() const;
};

struct Constrained {
  Eigen::VectorXd values;
  double log_jacobian = 0.0;
};

struct LogDensityResult {
  double logp = 0.0;
  Eigen::VectorXd grad;
  bool divergent = false;
};

double softplus(double x);
double inverse_softplus(double y);
double log_sigmoid(double x);

Constrained transform(const Eigen::VectorXd& unconstrained, const ParamLayout& layout);
Eigen::VectorXd untransform(const Eigen::VectorXd& constrained, const ParamLayout& layout);

/// Joint log posterior (likelihood, amplitude priors, plate-parameter priors,
/// hyperpriors, noise prior, log-Jacobian) and its gradient in unconstrained
/// space. Throws InvalidArgument for non-finite θ; numerical breakdown gives
/// a divergent result with logp = −∞.
LogDensityResult log_posterior(const Eigen::VectorXd& theta, const ModelSpec& spec);
/// Same, with a precomputed layout (must equal spec.layout()).
LogDensityResult log_posterior(const Eigen::VectorXd& theta, const ModelSpec& spec,
                               const ParamLayout& layout);

ModelSpec build_hierarchical_spec(const Dataset& data,
                                  const std::vector<std::shared_ptr<const GprModel>>& surrogates,
                                  const Hyperpriors& hyperpriors = {});

std::vector<ModelSpec> build_independent_specs(
    const Dataset& data, const std::vector<std::shared_ptr<const GprModel>>& surrogates,
    const Hyperpriors& hyperpriors = {});

/// Sampler-facing adapter around a ModelSpec.
class ModelDensity final : public LogDensity {
 public:
  explicit ModelDensity(ModelSpec spec);

  std::size_t dim() const override { return layout_.dim(); }
  double log_density(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const override;
  Eigen::VectorXd constrain(const Eigen::VectorXd& q) const override;
  std::vector<std::string> param_names() const override { return layout_.names(); }

  const ModelSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return layout_; }

 private:
  ModelSpec spec_;
  ParamLayout layout_;
};

}  // namespace phbm
