#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace phbm {

/// Target distribution on an unconstrained space, as seen by the sampler.
class LogDensity {
 public:
  virtual ~LogDensity() = default;

  virtual std::size_t dim() const = 0;

  /// Returns ln p(q) up to a constant and writes its gradient into `grad`.
  /// Returns −∞ (with zeroed gradient) where the density cannot be evaluated.
  virtual double log_density(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const = 0;

  /// Map to the space reported in chain output. Identity by default.
  virtual Eigen::VectorXd constrain(const Eigen::VectorXd& q) const { return q; }

  virtual std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < dim(); ++i) names.push_back("theta[" + std::to_string(i + 1) + "]");
    return names;
  }
};

}  // namespace phbm
