#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

namespace phbm {

/// Squared-exponential kernel: signal_var·exp(−(x−x')²/(2·lengthscale²)) plus
/// noise_var on the diagonal.
struct KernelConfig {
  double signal_var = 1.0e4;  // με²
  double lengthscale = 3.0;   // mm
  double noise_var = 25.0;    // με²

  void validate() const;
};

struct FitOptions {
  bool optimize = true;
  int restarts = 5;  // random restarts on top of the supplied initial kernel
  std::uint64_t seed = 0;
};

struct GprPrediction {
  double mean = 0.0;      // με
  double variance = 0.0;  // με², latent function
};

struct MeanAndGradient {
  double mean = 0.0;
  double grad = 0.0;  // με/mm
};

/// Fitted zero-mean GP over one input dimension. Immutable once built.
class GprModel {
 public:
  /// Factorizes K + noise_var·I, escalating a diagonal jitter up to
  /// 1e-6·signal_var before giving up with NumericError.
  GprModel(std::vector<double> train_x, std::vector<double> train_y, KernelConfig kernel);

  const std::vector<double>& train_x() const { return train_x_; }
  const std::vector<double>& train_y() const { return train_y_; }
  const KernelConfig& kernel() const { return kernel_; }
  double jitter() const { return jitter_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  const Eigen::MatrixXd& chol() const { return chol_; }

  GprPrediction predict(double x) const;
  double mean(double x) const;
  /// Analytic d(mean)/dx.
  double mean_grad(double x) const;
  MeanAndGradient mean_and_grad(double x) const;
  double log_marginal_likelihood() const;

 private:
  std::vector<double> train_x_;
  std::vector<double> train_y_;
  KernelConfig kernel_;
  double jitter_ = 0.0;
  double inv_two_l2_ = 0.0;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  Eigen::VectorXd weights_;  // signal_var·alpha
};

/// Log marginal likelihood of (x, y) under `kernel`. When `grad` is given it
/// receives the gradient w.r.t. (ln signal_var, ln lengthscale, ln noise_var).
double log_marginal_likelihood(const std::vector<double>& x, const std::vector<double>& y,
                               const KernelConfig& kernel, Eigen::Vector3d* grad = nullptr);

/// Fit on one training set. With optimize set, maximizes the log marginal
/// likelihood in log-space from `init` plus `restarts` random starts.
GprModel gpr_fit(const std::vector<double>& x, const std::vector<double>& y,
                 const KernelConfig& init, const FitOptions& options);

/// One surrogate per plate. Plates with too few points to identify three
/// hyperparameters borrow them from a pooled fit over every plate's data.
std::vector<GprModel> fit_surrogates(const std::vector<std::vector<double>>& xs,
                                     const std::vector<std::vector<double>>& ys,
                                     const KernelConfig& init, const FitOptions& options);

inline constexpr std::size_t kMinPointsForHyperparameterFit = 4;

/// sqrt(var)/|mean| at x, or nullopt when |mean| is below `min_abs_mean`.
std::optional<double> coefficient_of_variation(const GprModel& model, double x,
                                               double min_abs_mean = 1e-9);

}  // namespace phbm
