#include <cmath>
#include <memory>
#include <numbers>

#include "doctest.h"
#include "platehbm/distributions.hpp"
#include "platehbm/error.hpp"
#include "platehbm/hier_model.hpp"
#include "platehbm/plate_synth.hpp"
#include "support.hpp"

using namespace phbm;
using phbm::test::rel_err;

namespace {

using Surrogates = std::vector<std::shared_ptr<const GprModel>>;

Surrogates make_surrogates(std::size_t K, std::uint64_t seed = 1) {
  Surrogates out;
  for (std::size_t k = 0; k < K; ++k) {
    Rng rng = Rng::stream(seed, k);
    const auto t = make_training_set({}, 30, 0.0, 12.0, 5.0, rng);
    out.push_back(std::make_shared<const GprModel>(t.amplitude, t.strain, KernelConfig{1e4, 3.0, 25.0}));
  }
  return out;
}

// Independent evaluation of the joint log density from its definition.
double oracle_logp(const Eigen::VectorXd& u, const ModelSpec& spec) {
  const ParamLayout L = spec.layout();
  auto sp = [](double x) { return x > 30 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  auto npdf = [](double x, double m, double s) {
    return -0.5 * std::log(2 * std::numbers::pi) - std::log(s) - 0.5 * (x - m) * (x - m) / (s * s);
  };
  auto gpdf = [](double x, GammaParams p) {
    return p.shape * std::log(p.rate) - std::lgamma(p.shape) + (p.shape - 1) * std::log(x) - p.rate * x;
  };
  auto log_phi = [](double z) { return std::log(phbm::test::phi_cdf(z)); };

  const double mm = std::exp(u[0]), sm = std::exp(u[1]), ms = std::exp(u[2]), ss = std::exp(u[3]);
  const double g = std::exp(u[static_cast<Eigen::Index>(L.noise())]);
  const Hyperpriors& hp = spec.hyperpriors;
  double lp = gpdf(mm, hp.mu_mu) + gpdf(sm, hp.sigma_mu) + gpdf(ms, hp.mu_sigma) + gpdf(ss, hp.sigma_sigma) +
              gpdf(g, hp.noise);
  double jac = u[0] + u[1] + u[2] + u[3] + u[static_cast<Eigen::Index>(L.noise())];
  for (std::size_t j = 0; j < L.num_plates(); ++j) {
    const double ru = u[static_cast<Eigen::Index>(L.plate_mean(j))];
    const double su = u[static_cast<Eigen::Index>(L.plate_std(j))];
    const double mk = sp(ru), sk = std::exp(su);
    jac += -sp(-ru) + su;
    lp += npdf(mk, mm, sm) - log_phi(mm / sm);
    lp += npdf(sk, ms, ss) - log_phi(ms / ss);
    for (int i = 0; i < L.count(j); ++i) {
      const double wu = u[static_cast<Eigen::Index>(L.amplitude(j, static_cast<std::size_t>(i)))];
      const double w = sp(wu);
      jac += -sp(-wu);
      lp += npdf(w, mk, sk) - log_phi(mk / sk);
      if (spec.include_likelihood) {
        lp += npdf(spec.strains[j][static_cast<std::size_t>(i)], spec.surrogates[j]->mean(w), g);
      }
    }
  }
  return lp + jac;
}

// Unconstrained point near a plausible posterior state, jittered.
Eigen::VectorXd plausible_point(const ParamLayout& L, Rng& rng, double jitter) {
  Eigen::VectorXd c(static_cast<Eigen::Index>(L.dim()));
  c[0] = 5.0;
  c[1] = 1.0;
  c[2] = 0.5;
  c[3] = 0.15;
  for (std::size_t j = 0; j < L.num_plates(); ++j) {
    c[static_cast<Eigen::Index>(L.plate_mean(j))] = 5.0;
    c[static_cast<Eigen::Index>(L.plate_std(j))] = 0.5;
    for (int i = 0; i < L.count(j); ++i) c[static_cast<Eigen::Index>(L.amplitude(j, static_cast<std::size_t>(i)))] = 5.0;
  }
  c[static_cast<Eigen::Index>(L.noise())] = 5.0;
  Eigen::VectorXd u = untransform(c, L);
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] += jitter * rng.uniform(-1, 1);
  return u;
}

void check_gradient(const ModelSpec& spec, const Eigen::VectorXd& u) {
  const ParamLayout L = spec.layout();
  const LogDensityResult r = log_posterior(u, spec);
  REQUIRE_FALSE(r.divergent);
  const Eigen::VectorXd fd =
      phbm::test::fd_gradient([&](const Eigen::VectorXd& x) { return log_posterior(x, spec, L).logp; }, u);
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    INFO("coordinate " << L.params()[static_cast<std::size_t>(i)].name);
    CHECK(rel_err(r.grad[i], fd[i]) < 1e-5);
  }
}

}  // namespace

TEST_CASE("parameter layout") {
  const ParamLayout hier(ModelKind::Hierarchical, {1, 2, 3, 4, 5, 6}, {20, 20, 20, 20, 20, 2});
  CHECK(hier.dim() == 119);
  CHECK(hier.names().front() == "mu_mu");
  CHECK(hier.names()[4] == "mu_w[1]");
  CHECK(hier.names()[10] == "sigma_w[1]");
  CHECK(hier.names()[16] == "w[1][1]");
  CHECK(hier.names().back() == "gamma");
  CHECK(hier.find("w[2][6]") == 117);
  CHECK(hier.find("nope") == static_cast<std::size_t>(-1));
  const ParamLayout indep(ModelKind::Independent, {6}, {2});
  CHECK(indep.dim() == 9);
  CHECK(indep.names() == std::vector<std::string>{"mu_mu", "sigma_mu", "mu_sigma", "sigma_sigma", "mu_w[6]",
                                                  "sigma_w[6]", "w[1][6]", "w[2][6]", "gamma[6]"});
  for (const auto& p : hier.params()) {
    if (p.name.rfind("w[", 0) == 0 || p.name.rfind("mu_w", 0) == 0) {
      CHECK(p.transform == Transform::Softplus);
    } else {
      CHECK(p.transform == Transform::Exp);
    }
    CHECK(p.units == (p.name == "gamma" ? "microstrain" : "mm"));
  }
}

TEST_CASE("independent specs") {
  const GeneratedData gen = generate_dataset(DatasetConfig{}, 42);
  const auto specs = build_independent_specs(gen.dataset, make_surrogates(6));
  REQUIRE(specs.size() == 6);
  CHECK(specs[5].strains[0].size() == 2);
  CHECK(specs[5].layout().dim() == 9);
  std::size_t total = 0;
  for (const auto& s : specs) total += s.layout().dim();
  // Each independent model carries its own 4 hyper-, 2 plate-level and 1 noise coordinates.
  CHECK(total == 6 * 7 + 102);
  CHECK(build_hierarchical_spec(gen.dataset, make_surrogates(6)).layout().dim() == 4 + 2 * 6 + 102 + 1);
}

TEST_CASE("transforms") {
  CHECK(std::abs(softplus(0.0) - std::log(2.0)) < 1e-15);
  CHECK(std::abs(softplus(0.0) - 0.6931472) < 1e-7);
  CHECK(softplus(800.0) == 800.0);
  CHECK(std::isfinite(softplus(-800.0)));
  const ParamLayout L(ModelKind::Independent, {1}, {3});
  const Constrained z = transform(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.dim())), L);
  CHECK(z.values[0] == 1.0);
  CHECK(z.values[4] == doctest::Approx(std::log(2.0)));
  // Exp coordinates contribute 0 at the origin; softplus ones ln σ(0) = −ln 2.
  CHECK(z.log_jacobian == doctest::Approx(4 * -std::log(2.0)));

  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd u(static_cast<Eigen::Index>(L.dim()));
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.uniform(-5, 5);
    worst = std::max(worst, (untransform(transform(u, L).values, L) - u).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);
  CHECK_THROWS_AS(untransform(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.dim())), L), DomainError);
}

TEST_CASE("log posterior matches the independent oracle") {
  const GeneratedData gen = generate_dataset(DatasetConfig{}, 42);
  const ModelSpec hier = build_hierarchical_spec(gen.dataset, make_surrogates(6));
  const ModelSpec indep = build_independent_specs(gen.dataset, make_surrogates(6))[5];
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    for (const ModelSpec* spec : {&hier, &indep}) {
      const Eigen::VectorXd u = plausible_point(spec->layout(), rng, 0.5);
      CHECK(rel_err(log_posterior(u, *spec).logp, oracle_logp(u, *spec)) < 1e-10);
    }
  }
}

TEST_CASE("prior-only density without observations") {
  ModelSpec spec;
  spec.kind = ModelKind::Hierarchical;
  spec.plate_labels = {1, 2, 3};
  spec.strains = {{}, {}, {}};
  spec.include_likelihood = false;
  const ParamLayout L = spec.layout();
  CHECK(L.dim() == 4 + 6 + 1);
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd u(static_cast<Eigen::Index>(L.dim()));
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.uniform(-1, 1);
    CHECK(rel_err(log_posterior(u, spec).logp, oracle_logp(u, spec)) < 1e-12);
    check_gradient(spec, u);
  }
}

TEST_CASE("log posterior gradient on the default dataset") {
  const GeneratedData gen = generate_dataset(DatasetConfig{}, 42);
  const auto surrogates = make_surrogates(6);
  const ModelSpec hier = build_hierarchical_spec(gen.dataset, surrogates);
  const auto indep = build_independent_specs(gen.dataset, surrogates);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    check_gradient(hier, plausible_point(hier.layout(), rng, 1.0));
    check_gradient(indep[static_cast<std::size_t>(trial % 6)],
                   plausible_point(indep[static_cast<std::size_t>(trial % 6)].layout(), rng, 1.0));
  }
}

TEST_CASE("observation order within a plate does not matter") {
  const GeneratedData gen = generate_dataset(DatasetConfig{}, 5);
  const auto surrogates = make_surrogates(6);
  ModelSpec spec = build_hierarchical_spec(gen.dataset, surrogates);
  const ParamLayout L = spec.layout();
  Rng rng(6);
  const Eigen::VectorXd u = plausible_point(L, rng, 0.3);
  const double base = log_posterior(u, spec).logp;
  // Reverse plate 2's observations together with their amplitude coordinates.
  ModelSpec rev = spec;
  std::reverse(rev.strains[1].begin(), rev.strains[1].end());
  Eigen::VectorXd v = u;
  const int n = L.count(1);
  for (int i = 0; i < n; ++i) {
    v[static_cast<Eigen::Index>(L.amplitude(1, static_cast<std::size_t>(i)))] =
        u[static_cast<Eigen::Index>(L.amplitude(1, static_cast<std::size_t>(n - 1 - i)))];
  }
  CHECK(rel_err(log_posterior(v, rev).logp, base) < 1e-12);
}

TEST_CASE("plates with identical data are exchangeable") {
  Dataset data;
  Rng rng(7);
  PlateObservations p;
  for (int i = 0; i < 4; ++i) {
    p.amplitude.push_back(4 + rng.uniform());
    p.strain.push_back(strain_oracle(p.amplitude.back(), {}));
  }
  data.plates = {p, p, p};
  const auto one = make_surrogates(1);
  const ModelSpec spec = build_hierarchical_spec(data, {one[0], one[0], one[0]});
  const ParamLayout L = spec.layout();
  const Eigen::VectorXd u = plausible_point(L, rng, 0.5);
  Eigen::VectorXd v = u;
  std::swap(v[static_cast<Eigen::Index>(L.plate_mean(0))], v[static_cast<Eigen::Index>(L.plate_mean(2))]);
  std::swap(v[static_cast<Eigen::Index>(L.plate_std(0))], v[static_cast<Eigen::Index>(L.plate_std(2))]);
  for (std::size_t i = 0; i < 4; ++i) {
    std::swap(v[static_cast<Eigen::Index>(L.amplitude(0, i))], v[static_cast<Eigen::Index>(L.amplitude(2, i))]);
  }
  CHECK(rel_err(log_posterior(v, spec).logp, log_posterior(u, spec).logp) < 1e-12);
}

TEST_CASE("huge noise removes the likelihood pull on amplitudes") {
  const GeneratedData gen = generate_dataset(DatasetConfig{}, 42);
  ModelSpec with = build_hierarchical_spec(gen.dataset, make_surrogates(6));
  ModelSpec without = with;
  without.include_likelihood = false;
  const ParamLayout L = with.layout();
  Rng rng(3);
  Eigen::VectorXd u = plausible_point(L, rng, 0.2);
  u[static_cast<Eigen::Index>(L.noise())] = std::log(1e6);
  const auto a = log_posterior(u, with), b = log_posterior(u, without);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto idx = static_cast<Eigen::Index>(L.amplitude(0, i));
    CHECK(std::abs(a.grad[idx] - b.grad[idx]) < 1e-6);
  }
}

TEST_CASE("invalid parameter vectors") {
  const GeneratedData gen = generate_dataset(DatasetConfig{}, 42);
  const ModelSpec spec = build_hierarchical_spec(gen.dataset, make_surrogates(6));
  Eigen::VectorXd u = Eigen::VectorXd::Zero(119);
  u[3] = NAN;
  CHECK_THROWS_AS(log_posterior(u, spec), InvalidArgument);
  CHECK_THROWS_AS(log_posterior(Eigen::VectorXd::Zero(10), spec), InvalidArgument);
  // Overflowing scales flag a divergence rather than throwing.
  u[3] = 800.0;
  const auto r = log_posterior(u, spec);
  CHECK(r.divergent);
  CHECK(r.logp == -INFINITY);
  CHECK(r.grad.isZero());
}
