#include <cmath>
#include <numeric>

#include "doctest.h"
#include "platehbm/error.hpp"
#include "platehbm/plate_synth.hpp"

using namespace phbm;

TEST_CASE("deflection field") {
  const PlateGeometry g;
  CHECK(deflection_field(g.a / 2, g.b / 2, g, 5.0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(std::abs(deflection_field(0.0, 123.0, g, 5.0)) < 1e-12);
  CHECK(deflection_field(g.a / 4, g.b / 2, g, 4.0) == doctest::Approx(2.8284271).epsilon(1e-8));
  CHECK_THROWS_AS(deflection_field(-1.0, 0.0, g, 1.0), InvalidArgument);
  CHECK_THROWS_AS(deflection_field(0.0, g.b + 1, g, 1.0), InvalidArgument);
  CHECK_THROWS_AS(deflection_field(1.0, 1.0, g, -1.0), InvalidArgument);
  CHECK_THROWS_AS(PlateGeometry({100.0, 200.0, 10.0}).validate(), InvalidArgument);
}

TEST_CASE("strain oracle") {
  const OracleConfig c;
  CHECK(strain_oracle(0.0, c) == c.eps0);
  CHECK(strain_oracle(4.0, c) == doctest::Approx(74.0));
  CHECK(strain_oracle(8.0, c) > strain_oracle(4.0, c));
  CHECK_THROWS_AS(strain_oracle(-0.1, c), InvalidArgument);
  double prev = strain_oracle(0.0, c);
  for (double a = 0.1; a <= 12.0; a += 0.1) {
    const double s = strain_oracle(a, c);
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("default dataset shape") {
  const GeneratedData gen = generate_dataset(DatasetConfig{}, 42);
  CHECK(gen.dataset.num_plates() == 6);
  CHECK(gen.dataset.total_observations() == 102);
  CHECK(gen.dataset.counts() == std::vector<int>{20, 20, 20, 20, 20, 2});
  CHECK(gen.truth.plate_mean.size() == 6);
  CHECK(gen.truth.plate_std.size() == 6);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(gen.truth.plate_std[k] > 0.0);
    CHECK(gen.truth.plate_mean[k] >= 3.0 * gen.truth.plate_std[k]);
    for (double a : gen.dataset.plates[k].amplitude) CHECK(a >= 0.0);
  }
}

TEST_CASE("generation is deterministic per seed") {
  const auto a = generate_dataset(DatasetConfig{}, 7);
  const auto b = generate_dataset(DatasetConfig{}, 7);
  const auto c = generate_dataset(DatasetConfig{}, 8);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(a.dataset.plates[k].amplitude == b.dataset.plates[k].amplitude);
    CHECK(a.dataset.plates[k].strain == b.dataset.plates[k].strain);
  }
  CHECK(a.dataset.plates[0].strain != c.dataset.plates[0].strain);
}

TEST_CASE("noise-free linear oracle gives exactly affine strains") {
  DatasetConfig cfg;
  cfg.noise_std = 0.0;
  cfg.oracle.kappa2 = 0.0;
  const auto gen = generate_dataset(cfg, 3);
  std::vector<double> x, y;
  for (const auto& p : gen.dataset.plates) {
    x.insert(x.end(), p.amplitude.begin(), p.amplitude.end());
    y.insert(y.end(), p.strain.begin(), p.strain.end());
  }
  // Least-squares line through all points.
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxy / sxx, icpt = my - slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - (icpt + slope * x[i])) < 1e-9);
}

TEST_CASE("large plates recover their generating mean") {
  DatasetConfig cfg;
  cfg.obs_per_plate = {10000, 10000};
  const auto gen = generate_dataset(cfg, 11);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& a = gen.dataset.plates[k].amplitude;
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    CHECK(std::abs(mean - gen.truth.plate_mean[k]) < 3.0 * gen.truth.plate_std[k] / std::sqrt(10000.0));
  }
}

TEST_CASE("invalid dataset configurations") {
  DatasetConfig cfg;
  cfg.obs_per_plate = {};
  CHECK_THROWS_AS(generate_dataset(cfg, 1), ConfigError);
  cfg.obs_per_plate = {5, 0};
  CHECK_THROWS_AS(generate_dataset(cfg, 1), ConfigError);
  cfg.obs_per_plate = {5};
  cfg.sigma_mu = -1.0;
  CHECK_THROWS_AS(generate_dataset(cfg, 1), ConfigError);
  cfg = DatasetConfig{};
  cfg.oracle.kappa1 = 0.0;
  CHECK_THROWS_AS(generate_dataset(cfg, 1), ConfigError);
}

TEST_CASE("single plate configuration") {
  DatasetConfig cfg;
  cfg.obs_per_plate = {5};
  const auto gen = generate_dataset(cfg, 1);
  CHECK(gen.dataset.total_observations() == 5);
}

TEST_CASE("surrogate training grid") {
  Rng rng(1);
  const auto t = make_training_set(OracleConfig{}, 30, 0.0, 12.0, 0.0, rng);
  REQUIRE(t.amplitude.size() == 30);
  CHECK(t.amplitude.front() == 0.0);
  CHECK(t.amplitude.back() == doctest::Approx(12.0));
  for (std::size_t i = 0; i < 30; ++i) CHECK(t.strain[i] == doctest::Approx(strain_oracle(t.amplitude[i], {})));
  CHECK_THROWS_AS(make_training_set(OracleConfig{}, 0, 0.0, 12.0, 5.0, rng), InvalidArgument);
}
