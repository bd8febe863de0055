#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace phbm::test {

/// Mixed relative/absolute error: relative above magnitude 1, absolute below.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Central difference with step scaled to the coordinate.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-6) {
  const double step = h * std::max(1.0, std::abs(x));
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

/// Fourth-order central difference; used where the target has large curvature.
inline double central_diff4(const std::function<double(double)>& f, double x, double h = 1e-4) {
  const double s = h * std::max(1.0, std::abs(x));
  return (-f(x + 2 * s) + 8 * f(x + s) - 8 * f(x - s) + f(x - 2 * s)) / (12.0 * s);
}

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-4) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    g[i] = central_diff4(
        [&](double v) {
          Eigen::VectorXd y = x;
          y[i] = v;
          return f(y);
        },
        x[i], h);
  }
  return g;
}

/// Fresh, empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("platehbm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Standard normal CDF from the C library, independent of the code under test.
inline double phi_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace phbm::test
