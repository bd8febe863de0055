#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "platehbm/log_density.hpp"

namespace phbm::test {

/// Independent standard normals.
class StdNormal final : public LogDensity {
 public:
  explicit StdNormal(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  double log_density(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    g = -q;
    return -0.5 * q.squaredNorm();
  }

 private:
  std::size_t dim_;
};

/// Zero-mean Gaussian with a given covariance.
class Gaussian final : public LogDensity {
 public:
  explicit Gaussian(Eigen::MatrixXd cov) : precision_(cov.inverse()) {}
  std::size_t dim() const override { return static_cast<std::size_t>(precision_.rows()); }
  double log_density(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    g = -precision_ * q;
    return 0.5 * q.dot(g);
  }

 private:
  Eigen::MatrixXd precision_;
};

/// Unknown mean μ with prior N(prior_mean, prior_sd²) and data y_i ~ N(μ, noise_sd²).
class NormalNormal final : public LogDensity {
 public:
  NormalNormal(std::vector<double> y, double prior_mean, double prior_sd, double noise_sd)
      : y_(std::move(y)), m0_(prior_mean), s0_(prior_sd), s_(noise_sd) {}
  std::size_t dim() const override { return 1; }
  double log_density(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    const double mu = q[0];
    double lp = -0.5 * (mu - m0_) * (mu - m0_) / (s0_ * s0_);
    double d = -(mu - m0_) / (s0_ * s0_);
    for (double v : y_) {
      lp -= 0.5 * (v - mu) * (v - mu) / (s_ * s_);
      d += (v - mu) / (s_ * s_);
    }
    g = Eigen::VectorXd::Constant(1, d);
    return lp;
  }
  double posterior_mean() const {
    double sum = 0.0;
    for (double v : y_) sum += v;
    const double prec = 1.0 / (s0_ * s0_) + static_cast<double>(y_.size()) / (s_ * s_);
    return (m0_ / (s0_ * s0_) + sum / (s_ * s_)) / prec;
  }

 private:
  std::vector<double> y_;
  double m0_, s0_, s_;
};

/// Neal's funnel: v ~ N(0, 3²), x_i ~ N(0, e^v).
class Funnel final : public LogDensity {
 public:
  explicit Funnel(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  double log_density(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    const double v = q[0];
    const auto n = static_cast<double>(dim_ - 1);
    const Eigen::VectorXd x = q.tail(static_cast<Eigen::Index>(dim_ - 1));
    const double ev = std::exp(-v);
    g.resize(q.size());
    g[0] = -v / 9.0 - 0.5 * n + 0.5 * x.squaredNorm() * ev;
    g.tail(x.size()) = -x * ev;
    return -v * v / 18.0 - 0.5 * n * v - 0.5 * x.squaredNorm() * ev;
  }

 private:
  std::size_t dim_;
};

}  // namespace phbm::test
