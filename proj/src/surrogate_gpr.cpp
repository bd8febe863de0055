#include "platehbm/surrogate_gpr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "platehbm/error.hpp"
#include "platehbm/rng.hpp"

namespace phbm {

namespace {

constexpr double kMaxRelativeJitter = 1e-6;

Eigen::MatrixXd kernel_matrix(const std::vector<double>& x, const KernelConfig& k) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd K(n, n);
  const double inv = 1.0 / (2.0 * k.lengthscale * k.lengthscale);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = k.signal_var;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d = x[i] - x[j];
      K(i, j) = K(j, i) = k.signal_var * std::exp(-d * d * inv);
    }
  }
  return K;
}

struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

Factorization factorize(const Eigen::MatrixXd& K_noisy, double signal_var) {
  Factorization f;
  const auto n = K_noisy.rows();
  f.llt.compute(K_noisy);
  if (f.llt.info() == Eigen::Success) return f;
  for (double rel = 1e-12; rel <= kMaxRelativeJitter * (1 + 1e-9); rel *= 10.0) {
    f.jitter = rel * signal_var;
    f.llt.compute(K_noisy + f.jitter * Eigen::MatrixXd::Identity(n, n));
    if (f.llt.info() == Eigen::Success) return f;
  }
  throw NumericError("GPR covariance is not positive definite even with jitter " +
                     std::to_string(kMaxRelativeJitter) + "·signal_var");
}

bool has_duplicates(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  return std::adjacent_find(x.begin(), x.end()) != x.end();
}

void check_training_data(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("GPR inputs and targets differ in length");
  if (x.size() < 2) throw InvalidArgument("GPR needs at least two training points");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw InvalidArgument("GPR training data must be finite");
    }
  }
}

KernelConfig from_log(const Eigen::Vector3d& t) {
  return {std::exp(t[0]), std::exp(t[1]), std::exp(t[2])};
}

Eigen::Vector3d to_log(const KernelConfig& k) {
  return {std::log(k.signal_var), std::log(k.lengthscale), std::log(k.noise_var)};
}

struct Box {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
  Eigen::Vector3d clamp(const Eigen::Vector3d& t) const { return t.cwiseMax(lo).cwiseMin(hi); }
};

Box search_box(const std::vector<double>& x, const std::vector<double>& y) {
  double second_moment = 0.0;
  for (double v : y) second_moment += v * v;
  second_moment = std::max(second_moment / static_cast<double>(y.size()), 1e-12);
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  const double range = std::max(*mx - *mn, 1e-9);
  const double lv = std::log(second_moment);
  Box box;
  box.lo = {lv - std::log(1e6), std::log(range * 1e-2), lv - std::log(1e10)};
  box.hi = {lv + std::log(1e4), std::log(range * 1e2), lv};
  return box;
}

struct Optimum {
  Eigen::Vector3d theta;
  double value = -std::numeric_limits<double>::infinity();
};

// Quasi-Newton (BFGS) ascent with Armijo backtracking, projected onto `box`.
Optimum maximize_lml(const std::vector<double>& x, const std::vector<double>& y,
                     Eigen::Vector3d theta, const Box& box) {
  auto eval = [&](const Eigen::Vector3d& t, Eigen::Vector3d& g) {
    try {
      const double v = log_marginal_likelihood(x, y, from_log(t), &g);
      return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
    } catch (const NumericError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  theta = box.clamp(theta);
  Eigen::Vector3d grad;
  double value = eval(theta, grad);
  if (!std::isfinite(value)) return {theta, value};
  Eigen::Matrix3d H = Eigen::Matrix3d::Identity();
  for (int iter = 0; iter < 300; ++iter) {
    Eigen::Vector3d dir = H * grad;
    if (grad.dot(dir) <= 0.0) {
      H.setIdentity();
      dir = grad;
    }
    double step = 1.0;
    bool accepted = false;
    Eigen::Vector3d next, next_grad;
    double next_value = value;
    for (int ls = 0; ls < 50; ++ls) {
      next = box.clamp(theta + step * dir);
      next_value = eval(next, next_grad);
      if (next_value >= value + 1e-4 * grad.dot(next - theta) && std::isfinite(next_value)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Eigen::Vector3d s = next - theta;
    const Eigen::Vector3d yk = grad - next_grad;  // ascent: curvature of −LML
    const double sy = s.dot(yk);
    const double improvement = next_value - value;
    theta = next;
    value = next_value;
    grad = next_grad;
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
      H = (I - rho * s * yk.transpose()) * H * (I - rho * yk * s.transpose()) +
          rho * s * s.transpose();
    }
    if (improvement < 1e-10 * (1.0 + std::abs(value)) && s.lpNorm<Eigen::Infinity>() < 1e-7) {
      break;
    }
  }
  return {theta, value};
}

}  // namespace

void KernelConfig::validate() const {
  if (!(signal_var > 0.0) || !(lengthscale > 0.0) || !(noise_var > 0.0) ||
      !std::isfinite(signal_var) || !std::isfinite(lengthscale) || !std::isfinite(noise_var)) {
    throw InvalidArgument("kernel hyperparameters must be positive and finite");
  }
}

GprModel::GprModel(std::vector<double> train_x, std::vector<double> train_y, KernelConfig kernel)
    : train_x_(std::move(train_x)), train_y_(std::move(train_y)), kernel_(kernel) {
  check_training_data(train_x_, train_y_);
  kernel_.validate();
  const auto n = static_cast<Eigen::Index>(train_x_.size());
  Eigen::MatrixXd K = kernel_matrix(train_x_, kernel_);
  K.diagonal().array() += kernel_.noise_var;
  Factorization f = factorize(K, kernel_.signal_var);
  jitter_ = f.jitter;
  chol_ = f.llt.matrixL();
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(train_y_.data(), n);
  alpha_ = f.llt.solve(y);
  weights_ = kernel_.signal_var * alpha_;
  inv_two_l2_ = 1.0 / (2.0 * kernel_.lengthscale * kernel_.lengthscale);
}

double GprModel::mean(double x) const {
  double m = 0.0;
  for (std::size_t j = 0; j < train_x_.size(); ++j) {
    const double d = x - train_x_[j];
    m += weights_[static_cast<Eigen::Index>(j)] * std::exp(-d * d * inv_two_l2_);
  }
  return m;
}

MeanAndGradient GprModel::mean_and_grad(double x) const {
  MeanAndGradient out;
  const double inv_l2 = 2.0 * inv_two_l2_;
  for (std::size_t j = 0; j < train_x_.size(); ++j) {
    const double d = x - train_x_[j];
    const double term = weights_[static_cast<Eigen::Index>(j)] * std::exp(-d * d * inv_two_l2_);
    out.mean += term;
    out.grad -= term * d * inv_l2;
  }
  return out;
}

double GprModel::mean_grad(double x) const { return mean_and_grad(x).grad; }

GprPrediction GprModel::predict(double x) const {
  const auto n = static_cast<Eigen::Index>(train_x_.size());
  Eigen::VectorXd k_star(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d = x - train_x_[j];
    k_star[j] = kernel_.signal_var * std::exp(-d * d * inv_two_l2_);
  }
  GprPrediction p;
  p.mean = k_star.dot(alpha_);
  const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(k_star);
  p.variance = kernel_.signal_var - v.squaredNorm();
  if (p.variance < 0.0) {
    if (p.variance < -1e-8 * kernel_.signal_var) {
      warn("GPR predictive variance " + std::to_string(p.variance) + " clamped to 0");
    }
    p.variance = 0.0;
  }
  return p;
}

double GprModel::log_marginal_likelihood() const {
  const auto n = static_cast<double>(train_x_.size());
  const Eigen::VectorXd y =
      Eigen::Map<const Eigen::VectorXd>(train_y_.data(), static_cast<Eigen::Index>(n));
  return -0.5 * y.dot(alpha_) - chol_.diagonal().array().log().sum() -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

double log_marginal_likelihood(const std::vector<double>& x, const std::vector<double>& y,
                               const KernelConfig& kernel, Eigen::Vector3d* grad) {
  check_training_data(x, y);
  kernel.validate();
  const auto n = static_cast<Eigen::Index>(x.size());
  const Eigen::MatrixXd Kf = kernel_matrix(x, kernel);
  Eigen::MatrixXd K = Kf;
  K.diagonal().array() += kernel.noise_var;
  Factorization f = factorize(K, kernel.signal_var);
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  const Eigen::VectorXd alpha = f.llt.solve(yv);
  const Eigen::MatrixXd L = f.llt.matrixL();
  const double lml = -0.5 * yv.dot(alpha) - L.diagonal().array().log().sum() -
                     0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (grad != nullptr) {
    // ∂/∂θ = ½ tr((ααᵀ − K⁻¹) ∂K/∂θ)
    const Eigen::MatrixXd Kinv = f.llt.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd A = alpha * alpha.transpose() - Kinv;
    const double inv_l2 = 1.0 / (kernel.lengthscale * kernel.lengthscale);
    double g_signal = 0.0;
    double g_length = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double d = x[i] - x[j];
        g_signal += A(i, j) * Kf(i, j);
        g_length += A(i, j) * Kf(i, j) * d * d * inv_l2;
      }
    }
    (*grad)[0] = 0.5 * g_signal;
    (*grad)[1] = 0.5 * g_length;
    (*grad)[2] = 0.5 * kernel.noise_var * A.trace();
  }
  return lml;
}

GprModel gpr_fit(const std::vector<double>& x, const std::vector<double>& y,
                 const KernelConfig& init, const FitOptions& options) {
  check_training_data(x, y);
  init.validate();
  if (has_duplicates(x) && init.noise_var < 1e-8 * init.signal_var) {
    throw NumericError(
        "ill-conditioned GPR fit: duplicate training inputs with a vanishing noise variance");
  }
  if (!options.optimize) return GprModel(x, y, init);

  const Box box = search_box(x, y);
  Rng rng(options.seed);
  Optimum best = maximize_lml(x, y, to_log(init), box);
  for (int r = 0; r < options.restarts; ++r) {
    Eigen::Vector3d start;
    for (int d = 0; d < 3; ++d) start[d] = rng.uniform(box.lo[d], box.hi[d]);
    Optimum cand = maximize_lml(x, y, start, box);
    if (cand.value > best.value) best = cand;
  }
  if (!std::isfinite(best.value)) {
    throw NumericError("GPR hyperparameter optimization found no finite likelihood");
  }
  return GprModel(x, y, from_log(best.theta));
}

std::vector<GprModel> fit_surrogates(const std::vector<std::vector<double>>& xs,
                                     const std::vector<std::vector<double>>& ys,
                                     const KernelConfig& init, const FitOptions& options) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw InvalidArgument("fit_surrogates needs matching, non-empty per-plate training sets");
  }
  std::optional<KernelConfig> pooled;
  auto pooled_kernel = [&]() {
    if (!pooled) {
      std::vector<double> px, py;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        px.insert(px.end(), xs[k].begin(), xs[k].end());
        py.insert(py.end(), ys[k].begin(), ys[k].end());
      }
      FitOptions pooled_opts = options;
      pooled_opts.seed = options.seed ^ 0x9e3779b97f4a7c15ULL;
      pooled = gpr_fit(px, py, init, pooled_opts).kernel();
    }
    return *pooled;
  };

  std::vector<GprModel> models;
  models.reserve(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    FitOptions plate_opts = options;
    plate_opts.seed = options.seed + 1000003ULL * (k + 1);
    if (options.optimize && xs[k].size() < kMinPointsForHyperparameterFit) {
      models.emplace_back(xs[k], ys[k], pooled_kernel());
    } else {
      models.push_back(gpr_fit(xs[k], ys[k], init, plate_opts));
    }
  }
  return models;
}

std::optional<double> coefficient_of_variation(const GprModel& model, double x,
                                               double min_abs_mean) {
  const GprPrediction p = model.predict(x);
  if (!(std::abs(p.mean) > min_abs_mean)) return std::nullopt;
  return std::sqrt(p.variance) / std::abs(p.mean);
}

}  // namespace phbm
