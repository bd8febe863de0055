#include "json.hpp"

#include "doctest.h"
#include "platehbm/config.hpp"
#include "platehbm/error.hpp"
#include "platehbm/io.hpp"
#include "platehbm/rng.hpp"
#include "support.hpp"

using namespace phbm;
using phbm::test::scratch_dir;

TEST_CASE("default configuration") {
  const PipelineConfig c;
  CHECK(c.seed == 42);
  CHECK(c.dataset.obs_per_plate == std::vector<int>{20, 20, 20, 20, 20, 2});
  CHECK(c.dataset.noise_std == 5.0);
  CHECK(c.priors.mu_mu.shape == 3.0);
  CHECK(c.priors.mu_mu.rate == 0.2);
  CHECK(c.priors.sigma_mu.shape == 0.8);
  CHECK(c.priors.sigma_mu.rate == 0.35);
  CHECK(c.priors.mu_sigma.shape == 3.6);
  CHECK(c.priors.mu_sigma.rate == 6.0);
  CHECK(c.priors.sigma_sigma.shape == 4.8);
  CHECK(c.priors.sigma_sigma.rate == 16.0);
  CHECK(c.priors.noise.shape == 80.0);
  CHECK(c.priors.noise.rate == 16.0);
  CHECK(c.sampler.n_warmup == 4000);
  CHECK(c.sampler.n_samples == 2000);
  CHECK(c.sampler.n_chains == 4);
  CHECK(c.detection.levels == std::vector<double>{4.0, 6.0, 8.0});
  CHECK(c.rhat_threshold == 1.01);
  CHECK(c.resolved_focus_plate() == 6);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("settings by dotted key") {
  PipelineConfig c;
  apply_setting(c, "sampler.warmup", "250");
  apply_setting(c, "dataset.obs_per_plate", "3, 4,5");
  apply_setting(c, "priors.noise_shape", "12.5");
  apply_setting(c, "surrogate.training_source", "observations");
  apply_setting(c, "surrogate.optimize", "false");
  apply_setting(c, "detection.focus_plate", "2");
  CHECK(c.sampler.n_warmup == 250);
  CHECK(c.dataset.obs_per_plate == std::vector<int>{3, 4, 5});
  CHECK(c.priors.noise.shape == 12.5);
  CHECK(c.surrogate.training_source == TrainingSource::Observations);
  CHECK_FALSE(c.surrogate.optimize);
  CHECK(c.resolved_focus_plate() == 2);
  CHECK_THROWS_AS(apply_setting(c, "sampler.bogus", "1"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "sampler.warmup", "many"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "sampler.warmup", "2.5"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "surrogate.optimize", "perhaps"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "surrogate.training_source", "fem"), ConfigError);
}

TEST_CASE("INI round trip") {
  PipelineConfig c;
  c.seed = 7;
  c.sampler.target_accept = 0.9;
  c.dataset.obs_per_plate = {5, 1};
  c.detection.levels = {1.5, 2.5};
  c.priors.mu_sigma = {2.25, 0.125};
  const auto dir = scratch_dir("config_roundtrip");
  io::write_text(dir / "run.ini", to_ini(c));
  const PipelineConfig back = load_config((dir / "run.ini").string());
  CHECK(to_ini(back) == to_ini(c));
  CHECK(config_hash(back) == config_hash(c));
  CHECK(back.detection.levels == c.detection.levels);
}

TEST_CASE("config files reject unknown keys and bad values") {
  const auto dir = scratch_dir("config_errors");
  io::write_text(dir / "unknown.ini", "[sampler]\nwarmpu = 10\n");
  CHECK_THROWS_AS(load_config((dir / "unknown.ini").string()), ConfigError);
  io::write_text(dir / "bad.ini", "[general]\nseed = -3\n");
  CHECK_THROWS_AS(load_config((dir / "bad.ini").string()), ConfigError);
  io::write_text(dir / "levels.ini", "[detection]\nlevels = 8, 4\n");
  CHECK_THROWS_AS(load_config((dir / "levels.ini").string()), ConfigError);
  io::write_text(dir / "partial.ini", "# comment\n[sampler]\nwarmup = 12\n");
  CHECK(load_config((dir / "partial.ini").string()).sampler.n_warmup == 12);
  CHECK_THROWS_AS(load_config((dir / "absent.ini").string()), ConfigError);
}

TEST_CASE("configuration hash") {
  const PipelineConfig a;
  PipelineConfig b;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 64);
  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.sampler.n_samples = 2001;
  CHECK(config_hash(a) != config_hash(b));
  PipelineConfig c;
  c.seed = 43;
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("derived seeds are distinct per stream") {
  const std::uint64_t d = derive_seed(42, SeedStream::Dataset);
  CHECK(d == Rng::stream(42, 1)());
  CHECK(d != derive_seed(42, SeedStream::Surrogate));
  CHECK(derive_seed(42, SeedStream::IndependentSampler, 6) == Rng::stream(42, 106)());
  CHECK(derive_seed(42, SeedStream::IndependentSampler, 1) != derive_seed(42, SeedStream::IndependentSampler, 2));
  CHECK(d != derive_seed(43, SeedStream::Dataset));
}

TEST_CASE("dataset CSV format and round trip") {
  Dataset d;
  d.plates = {{{1.25, 2.5}, {100.0, 150.125}}, {{3.0}, {210.5}}};
  const std::string text = io::dataset_csv(d);
  CHECK(text.rfind("plate_index,obs_index,amplitude_mm,strain_microeps\n", 0) == 0);
  CHECK(text.find("\n1,1,1.25,100\n") != std::string::npos);
  CHECK(text.find("\n2,1,3,210.5\n") != std::string::npos);
  const Dataset back = io::parse_dataset_csv(text);
  REQUIRE(back.plates.size() == 2);
  CHECK(back.plates[0].amplitude == d.plates[0].amplitude);
  CHECK(back.plates[0].strain == d.plates[0].strain);
  CHECK(back.plates[1].strain == d.plates[1].strain);
}

TEST_CASE("malformed dataset CSV") {
  const std::string header = "plate_index,obs_index,amplitude_mm,strain_microeps\n";
  CHECK_THROWS_AS(io::parse_dataset_csv(""), IoError);
  CHECK_THROWS_AS(io::parse_dataset_csv("a,b,c,d\n1,1,1,1\n"), IoError);
  CHECK_THROWS_AS(io::parse_dataset_csv(header), IoError);
  CHECK_THROWS_AS(io::parse_dataset_csv(header + "1,1,1\n"), IoError);
  CHECK_THROWS_AS(io::parse_dataset_csv(header + "1,1,x,2\n"), IoError);
  CHECK_THROWS_AS(io::parse_dataset_csv(header + "2,1,1,2\n"), IoError);
  CHECK_THROWS_AS(io::parse_dataset_csv(header + "1,2,1,2\n"), IoError);
  CHECK_THROWS_AS(io::read_dataset(scratch_dir("csv_missing") / "none.csv"), IoError);
}

TEST_CASE("chain directory round trip") {
  const ParamLayout layout(ModelKind::Independent, {2}, {1});
  Chains chains;
  chains.names = layout.names();
  Rng rng(3);
  for (int c = 0; c < 2; ++c) {
    Eigen::MatrixXd m(6, static_cast<Eigen::Index>(layout.dim()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::exp(rng.normal()) / 3.0;
    chains.draws.push_back(m);
    ChainStats s;
    s.seed = 11;
    s.step_size = 0.123456789012345;
    s.inv_metric = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(layout.dim()), 0.5);
    s.divergent = {0, 1, 0, 0, 0, 0};
    s.tree_depth = {1, 2, 3, 4, 5, 6};
    s.n_leapfrog = {1, 3, 7, 15, 31, 63};
    s.accept_stat = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    s.energy = {1, 2, 3, 4, 5, 6};
    chains.stats.push_back(s);
  }
  const Summary summary = summarize(chains);
  const auto dir = scratch_dir("chains_roundtrip");
  io::write_chains(dir, chains, layout, summary);
  const Chains back = io::read_chains(dir);
  CHECK(back.names == chains.names);
  REQUIRE(back.n_chains() == 2);
  CHECK(back.draws[1] == chains.draws[1]);
  CHECK(back.stats[0].step_size == chains.stats[0].step_size);
  CHECK(back.stats[1].tree_depth == chains.stats[1].tree_depth);
  CHECK(back.divergences() == 2);

  const auto params = nlohmann::json::parse(io::read_text(dir / "params.json"));
  CHECK(params["dim"] == layout.dim());
  CHECK(params["params"][0]["name"] == "mu_mu");
  CHECK(params["params"][0]["transform"] == "exp");
  CHECK(params["params"][4]["name"] == "mu_w[2]");
  CHECK(params["params"][4]["transform"] == "softplus");
  const auto sj = nlohmann::json::parse(io::read_text(dir / "summary.json"));
  CHECK(sj["params"].size() == layout.dim());
  CHECK_THROWS_AS(io::read_chains(scratch_dir("chains_empty")), IoError);
}

TEST_CASE("surrogate JSON round trip is exact") {
  const GprModel gp({0.0, 1.0, 2.5}, {3.0, 4.5, 1.0}, KernelConfig{10.0, 0.7, 0.01});
  const GprModel back = io::parse_surrogate_json(io::surrogate_json(gp, 3));
  CHECK(back.mean(1.7) == gp.mean(1.7));
  CHECK(back.kernel().lengthscale == gp.kernel().lengthscale);
  CHECK_THROWS_AS(io::parse_surrogate_json("{}"), IoError);
  CHECK_THROWS_AS(io::parse_surrogate_json("not json"), IoError);
}
