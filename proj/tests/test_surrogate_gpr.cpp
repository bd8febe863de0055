#include <cmath>
#include <numbers>

#include "doctest.h"
#include "platehbm/error.hpp"
#include "platehbm/io.hpp"
#include "platehbm/plate_synth.hpp"
#include "platehbm/surrogate_gpr.hpp"
#include "support.hpp"

using namespace phbm;
using phbm::test::rel_err;

namespace {

double rbf(double a, double b, const KernelConfig& k) {
  return k.signal_var * std::exp(-(a - b) * (a - b) / (2 * k.lengthscale * k.lengthscale));
}

// Dense-inverse evaluation of the marginal likelihood; shares no code with the model.
double lml_oracle(const std::vector<double>& x, const std::vector<double>& y, const KernelConfig& k) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) K(i, j) = rbf(x[i], x[j], k) + (i == j ? k.noise_var : 0.0);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  return -0.5 * yv.dot(lu.solve(yv)) - 0.5 * std::log(lu.determinant()) -
         0.5 * static_cast<double>(n) * std::log(2 * std::numbers::pi);
}

std::vector<double> random_inputs(Rng& rng, int n, double lo, double hi) {
  std::vector<double> x;
  for (int i = 0; i < n; ++i) x.push_back(rng.uniform(lo, hi));
  return x;
}

}  // namespace

TEST_CASE("noise-free interpolation of two points") {
  const GprModel m({0.0, 1.0}, {0.0, 1.0}, {1.0, 1.0, 1e-9});
  CHECK(std::abs(m.predict(0.0).mean - 0.0) < 1e-6);
  CHECK(std::abs(m.predict(1.0).mean - 1.0) < 1e-6);
  CHECK(m.predict(1.0).variance <= 1e-6 * 1.0);
}

TEST_CASE("closed-form two-point system") {
  const KernelConfig k{1.0, 1.0, 0.01};
  const GprModel m({0.0, 2.0}, {0.0, 4.0}, k);
  // Direct 2×2 solve by Cramer's rule.
  const double a = 1.0 + 0.01, b = std::exp(-2.0);
  const double det = a * a - b * b;
  const double alpha0 = (a * 0.0 - b * 4.0) / det;
  const double alpha1 = (a * 4.0 - b * 0.0) / det;
  const double k0 = std::exp(-0.5), k1 = std::exp(-0.5);
  const double mean = k0 * alpha0 + k1 * alpha1;
  const double quad = (a * (k0 * k0 + k1 * k1) - 2 * b * k0 * k1) / det;
  const GprPrediction p = m.predict(1.0);
  CHECK(std::abs(p.mean - mean) < 1e-12);
  CHECK(std::abs(p.variance - (1.0 - quad)) < 1e-12);
}

TEST_CASE("factorization and solve invariants") {
  Rng rng(5);
  const auto x = random_inputs(rng, 15, 0, 12);
  std::vector<double> y;
  for (double v : x) y.push_back(strain_oracle(v, {}) + 5 * rng.normal());
  const KernelConfig k{1e4, 3.0, 25.0};
  const GprModel m(x, y, k);
  Eigen::MatrixXd K(15, 15);
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 15; ++j) K(i, j) = rbf(x[i], x[j], k) + (i == j ? k.noise_var + m.jitter() : 0.0);
  CHECK((m.chol() * m.chol().transpose() - K).cwiseAbs().maxCoeff() < 1e-8 * K.cwiseAbs().maxCoeff());
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), 15);
  CHECK((K * m.alpha() - yv).cwiseAbs().maxCoeff() < 1e-8 * yv.cwiseAbs().maxCoeff());
}

TEST_CASE("variance reverts to the prior far from data") {
  const GprModel m({0.0, 1.0, 2.0}, {1.0, 2.0, 3.0}, {4.0, 0.5, 0.01});
  CHECK(std::abs(m.predict(2.0 + 10.0 * 0.5 + 1.0).variance - 4.0) < 0.01 * 4.0);
  CHECK(std::abs(m.predict(-50.0).mean) < 1e-9);
}

TEST_CASE("mean is linear and variance independent of targets") {
  Rng rng(8);
  const auto x = random_inputs(rng, 12, 0, 10);
  std::vector<double> y1, y2, y12;
  for (int i = 0; i < 12; ++i) {
    y1.push_back(rng.normal() * 10);
    y2.push_back(rng.normal() * 10);
    y12.push_back(y1.back() + y2.back());
  }
  const KernelConfig k{50.0, 2.0, 0.5};
  const GprModel a(x, y1, k), b(x, y2, k), c(x, y12, k);
  for (double t = -1; t <= 11; t += 0.37) {
    CHECK(std::abs(c.mean(t) - (a.mean(t) + b.mean(t))) < 1e-9);
    CHECK(a.predict(t).variance == doctest::Approx(b.predict(t).variance).epsilon(1e-12));
  }
}

TEST_CASE("adding a training point never increases variance") {
  const KernelConfig k{1.0, 1.0, 1e-10};
  std::vector<double> x{0.0, 2.0, 5.0}, y{0.0, 1.0, -1.0};
  const GprModel before(x, y, k);
  x.push_back(3.3);
  y.push_back(0.4);
  const GprModel after(x, y, k);
  for (double t = -2; t <= 8; t += 0.1) CHECK(after.predict(t).variance <= before.predict(t).variance + 1e-8);
}

TEST_CASE("mean gradient") {
  Rng rng(21);
  const auto x = random_inputs(rng, 20, 0, 12);
  std::vector<double> y;
  for (double v : x) y.push_back(strain_oracle(v, {}) + 5 * rng.normal());
  const GprModel m(x, y, {1e4, 2.5, 25.0});
  for (int i = 0; i < 20; ++i) {
    const double t = rng.uniform(-1, 13);
    const double fd = phbm::test::central_diff([&](double v) { return m.mean(v); }, t, 1e-5);
    CHECK(rel_err(m.mean_grad(t), fd) < 1e-5);
    CHECK(m.mean_and_grad(t).mean == m.mean(t));
  }

  // Symmetric data about x0 = 3.
  const GprModel sym({1.0, 2.0, 4.0, 5.0}, {7.0, 2.0, 2.0, 7.0}, {10.0, 1.0, 0.1});
  CHECK(std::abs(sym.mean_grad(3.0)) < 1e-8);

  // Constant targets on a dense grid: flat inside the data.
  std::vector<double> gx, gy;
  for (double v = 0; v <= 10; v += 0.5) {
    gx.push_back(v);
    gy.push_back(3.0);
  }
  const GprModel flat(gx, gy, {1.0, 3.0, 1e-9});
  for (double t = 2; t <= 8; t += 0.25) CHECK(std::abs(flat.mean_grad(t)) < 1e-3);
}

TEST_CASE("marginal likelihood value and gradient") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_inputs(rng, 10, 0, 12);
    std::vector<double> y;
    for (double v : x) y.push_back(strain_oracle(v, {}) + 5 * rng.normal());
    const KernelConfig k{std::exp(rng.uniform(6, 10)), std::exp(rng.uniform(0, 2)), std::exp(rng.uniform(1, 4))};
    Eigen::Vector3d g;
    const double v = log_marginal_likelihood(x, y, k, &g);
    CHECK(rel_err(v, lml_oracle(x, y, k)) < 1e-10);
    CHECK(rel_err(v, GprModel(x, y, k).log_marginal_likelihood()) < 1e-12);
    const Eigen::Vector3d t{std::log(k.signal_var), std::log(k.lengthscale), std::log(k.noise_var)};
    for (int d = 0; d < 3; ++d) {
      const double fd = phbm::test::central_diff(
          [&](double s) {
            Eigen::Vector3d u = t;
            u[d] = s;
            return log_marginal_likelihood(x, y, {std::exp(u[0]), std::exp(u[1]), std::exp(u[2])});
          },
          t[d], 1e-6);
      CHECK(rel_err(g[d], fd) < 1e-4);
    }
  }
}

TEST_CASE("hyperparameter optimization improves the likelihood") {
  Rng rng(2);
  const auto t = make_training_set({}, 30, 0.0, 12.0, 5.0, rng);
  const KernelConfig init{};
  FitOptions opt;
  opt.seed = 4;
  const GprModel fitted = gpr_fit(t.amplitude, t.strain, init, opt);
  CHECK(fitted.log_marginal_likelihood() >= log_marginal_likelihood(t.amplitude, t.strain, init));
  // Noise estimate near the generating 25 με².
  CHECK(fitted.kernel().noise_var > 5.0);
  CHECK(fitted.kernel().noise_var < 80.0);
  const GprModel again = gpr_fit(t.amplitude, t.strain, init, opt);
  CHECK(again.kernel().lengthscale == fitted.kernel().lengthscale);
}

TEST_CASE("fit errors") {
  CHECK_THROWS_AS(gpr_fit({1.0, 1.0, 2.0}, {1.0, 1.0, 2.0}, {1.0, 1.0, 1e-12}, {}), NumericError);
  CHECK_THROWS_AS(GprModel({1.0}, {1.0}, {}), InvalidArgument);
  CHECK_THROWS_AS(GprModel({1.0, 2.0}, {1.0}, {}), InvalidArgument);
  CHECK_THROWS_AS(GprModel({1.0, 2.0}, {1.0, 2.0}, {1.0, -1.0, 1.0}), InvalidArgument);
}

TEST_CASE("scarce plates borrow pooled hyperparameters") {
  const GeneratedData gen = generate_dataset(DatasetConfig{}, 42);
  std::vector<std::vector<double>> xs, ys;
  for (const auto& p : gen.dataset.plates) {
    xs.push_back(p.amplitude);
    ys.push_back(p.strain);
  }
  FitOptions opt;
  opt.seed = 17;
  const auto models = fit_surrogates(xs, ys, {}, opt);
  REQUIRE(models.size() == 6);
  std::vector<double> px, py;
  for (std::size_t k = 0; k < 6; ++k) {
    px.insert(px.end(), xs[k].begin(), xs[k].end());
    py.insert(py.end(), ys[k].begin(), ys[k].end());
  }
  FitOptions pooled_opt = opt;
  pooled_opt.seed = opt.seed ^ 0x9e3779b97f4a7c15ULL;
  const KernelConfig pooled = gpr_fit(px, py, {}, pooled_opt).kernel();
  CHECK(models[5].kernel().signal_var == pooled.signal_var);
  CHECK(models[5].kernel().lengthscale == pooled.lengthscale);
  CHECK(models[5].kernel().noise_var == pooled.noise_var);
  CHECK(models[5].jitter() == 0.0);
  for (double a = 0; a <= 12; a += 0.5) CHECK(std::isfinite(models[5].predict(a).mean));
}

TEST_CASE("coefficient of variation") {
  // Second point far enough away that it has no influence at x = 0:
  // mean = sv/(sv+nv)·y = 100, var = sv·nv/(sv+nv) = 49.
  const GprModel m({0.0, 1000.0}, {200.0, 0.0}, {98.0, 1.0, 98.0});
  REQUIRE(coefficient_of_variation(m, 0.0).has_value());
  CHECK(*coefficient_of_variation(m, 0.0) == doctest::Approx(0.07).epsilon(1e-12));
  const GprModel exact({0.0, 1.0}, {50.0, 60.0}, {1e4, 1.0, 1e-8});
  CHECK(*coefficient_of_variation(exact, 0.0) < 1e-4);
  const GprModel zero({0.0, 1.0}, {0.0, 0.0}, {1.0, 1.0, 1.0});
  CHECK_FALSE(coefficient_of_variation(zero, 0.5).has_value());
}

TEST_CASE("surrogate JSON round-trip reproduces predictions exactly") {
  Rng rng(3);
  const auto t = make_training_set({}, 30, 0.0, 12.0, 5.0, rng);
  FitOptions opt;
  opt.seed = 1;
  const GprModel m = gpr_fit(t.amplitude, t.strain, {}, opt);
  const GprModel back = io::parse_surrogate_json(io::surrogate_json(m, 3));
  for (double a = 0; a <= 12; a += 0.3) {
    CHECK(back.predict(a).mean == m.predict(a).mean);
    CHECK(back.predict(a).variance == m.predict(a).variance);
    CHECK(back.mean_grad(a) == m.mean_grad(a));
  }
}
