#include "platehbm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

#include "json.hpp"
#include "platehbm/distributions.hpp"
#include "platehbm/error.hpp"
#include "platehbm/hier_model.hpp"
#include "platehbm/io.hpp"

namespace phbm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json read_json_or_empty(const fs::path& path) {
  if (!fs::exists(path)) return json::object();
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception&) {
    return json::object();
  }
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing artifact '" + path.string() + "'");
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

std::string indep_run_name(int k) { return "indep_plate" + std::to_string(k); }

// Manifest entries accumulate across stages as long as the configuration is
// unchanged; a different configuration starts a fresh manifest.
void record_stage(const PipelineConfig& cfg, const std::string& stage, json details) {
  const RunPaths paths{cfg.output_dir};
  json m = read_json_or_empty(paths.manifest());
  const std::string hash = config_hash(cfg);
  if (!m.is_object() || m.value("config_hash", "") != hash) {
    m = json::object();
    m["config_hash"] = hash;
    m["version"] = PHBM_VERSION_STRING;
    m["compiler"] = __VERSION__;
    m["seed"] = cfg.seed;
    json seeds;
    seeds["dataset"] = derive_seed(cfg.seed, SeedStream::Dataset);
    seeds["surrogate"] = derive_seed(cfg.seed, SeedStream::Surrogate);
    seeds["hier"] = derive_seed(cfg.seed, SeedStream::HierarchicalSampler);
    for (std::size_t k = 1; k <= cfg.dataset.num_plates(); ++k) {
      seeds[indep_run_name(static_cast<int>(k))] = derive_seed(cfg.seed, SeedStream::IndependentSampler, k);
    }
    seeds["detection"] = derive_seed(cfg.seed, SeedStream::Detection);
    m["seeds"] = seeds;
    m["config"] = to_ini(PipelineConfig{cfg.seed, "-", cfg.dataset, cfg.geometry, cfg.surrogate,
                                        cfg.priors, cfg.sampler, cfg.detection, cfg.rhat_threshold});
    m["stages"] = json::object();
  }
  m["stages"][stage] = std::move(details);
  io::write_text(paths.manifest(), m.dump(2) + "\n");
}

// Wall-clock times live apart from the manifest so every other artifact stays
// byte-identical between runs.
void record_time(const PipelineConfig& cfg, const std::string& stage, double seconds) {
  const RunPaths paths{cfg.output_dir};
  json t = read_json_or_empty(paths.timings());
  if (!t.is_object()) t = json::object();
  t[stage] = seconds;
  io::write_text(paths.timings(), t.dump(2) + "\n");
}

class StageTimer {
 public:
  StageTimer(const PipelineConfig& cfg, std::string stage)
      : cfg_(cfg), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
  void finish() {
    const auto dt = std::chrono::steady_clock::now() - start_;
    record_time(cfg_, stage_, std::chrono::duration<double>(dt).count());
  }

 private:
  const PipelineConfig& cfg_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

Dataset load_dataset(const PipelineConfig& cfg) {
  const RunPaths paths{cfg.output_dir};
  if (!fs::exists(paths.dataset_csv())) {
    throw IoError("missing dataset '" + paths.dataset_csv().string() + "'; run generate first");
  }
  Dataset data = io::read_dataset(paths.dataset_csv());
  if (data.counts() != cfg.dataset.obs_per_plate) {
    throw IoError("dataset on disk does not match dataset.obs_per_plate; rerun generate");
  }
  return data;
}

std::vector<std::shared_ptr<const GprModel>> load_surrogates(const PipelineConfig& cfg) {
  const RunPaths paths{cfg.output_dir};
  std::vector<std::shared_ptr<const GprModel>> out;
  for (std::size_t k = 1; k <= cfg.dataset.num_plates(); ++k) {
    const fs::path path = paths.surrogate(static_cast<int>(k));
    if (!fs::exists(path)) {
      throw IoError("missing surrogate '" + path.string() + "'; run train-surrogate first");
    }
    out.push_back(std::make_shared<const GprModel>(io::parse_surrogate_json(io::read_text(path))));
  }
  return out;
}

GateOutcome sample_and_store(const PipelineConfig& cfg, const ModelSpec& spec, std::uint64_t seed,
                             const fs::path& dir, const std::string& run) {
  ModelDensity density(spec);
  SamplerConfig sampler = cfg.sampler;
  sampler.seed = seed;
  const Chains chains = run_chains(density, sampler);
  const Summary summary = summarize(chains, cfg.rhat_threshold);
  io::write_chains(dir, chains, density.layout(), summary);
  GateOutcome gate;
  gate.run = run;
  gate.max_rhat = summary.max_rhat;
  gate.passed = summary.gate_passed;
  gate.divergences = summary.divergences;
  gate.divergence_rate = summary.divergence_rate;
  return gate;
}

json gate_json(const GateOutcome& g) {
  return {{"max_rhat", number(g.max_rhat)},
          {"gate_passed", g.passed},
          {"divergences", g.divergences},
          {"divergence_rate", g.divergence_rate}};
}

json source_json(const SourceDetection& s) {
  return {{"source", to_string(s.source)},
          {"mean", number(s.mean)},
          {"std", number(s.std)},
          {"bandwidth", number(s.curve.bandwidth)},
          {"degenerate", s.curve.degenerate},
          {"exceedance", s.exceedance}};
}

std::vector<int> indep_plates_on_disk(const PipelineConfig& cfg) {
  const RunPaths paths{cfg.output_dir};
  std::vector<int> plates;
  for (std::size_t k = 1; k <= cfg.dataset.num_plates(); ++k) {
    if (fs::exists(paths.indep_chains(static_cast<int>(k)) / "chain_1.csv")) {
      plates.push_back(static_cast<int>(k));
    }
  }
  return plates;
}

}  // namespace

void cmd_generate(const PipelineConfig& cfg) {
  cfg.validate();
  StageTimer timer(cfg, "generate");
  const RunPaths paths{cfg.output_dir};
  const std::uint64_t seed = derive_seed(cfg.seed, SeedStream::Dataset);
  const GeneratedData gen = generate_dataset(cfg.dataset, seed);
  io::write_dataset(paths.dataset_csv(), gen.dataset);
  io::write_text(paths.dataset_json(), io::ground_truth_json(cfg.dataset, gen.truth, seed));
  record_stage(cfg, "generate",
               {{"rows", gen.dataset.total_observations()}, {"plates", gen.dataset.num_plates()}});
  timer.finish();
}

void cmd_train_surrogate(const PipelineConfig& cfg) {
  cfg.validate();
  StageTimer timer(cfg, "train-surrogate");
  const RunPaths paths{cfg.output_dir};
  const std::uint64_t seed = derive_seed(cfg.seed, SeedStream::Surrogate);
  const std::size_t K = cfg.dataset.num_plates();
  // The dataset must exist in either mode; its plate count fixes the surrogate count.
  const Dataset data = load_dataset(cfg);
  std::vector<std::vector<double>> xs(K), ys(K);
  if (cfg.surrogate.training_source == TrainingSource::Grid) {
    for (std::size_t k = 0; k < K; ++k) {
      Rng rng = Rng::stream(seed, k + 1);
      const PlateObservations t =
          make_training_set(cfg.dataset.oracle, cfg.surrogate.grid_points, cfg.surrogate.grid_min,
                            cfg.surrogate.grid_max, cfg.surrogate.training_noise_std, rng);
      xs[k] = t.amplitude;
      ys[k] = t.strain;
    }
  } else {
    for (std::size_t k = 0; k < K; ++k) {
      xs[k] = data.plates[k].amplitude;
      ys[k] = data.plates[k].strain;
    }
  }
  FitOptions options;
  options.optimize = cfg.surrogate.optimize;
  options.restarts = cfg.surrogate.restarts;
  options.seed = seed;
  const std::vector<GprModel> models = fit_surrogates(xs, ys, cfg.surrogate.init, options);
  json kernels = json::array();
  for (std::size_t k = 0; k < K; ++k) {
    io::write_text(paths.surrogate(static_cast<int>(k + 1)), io::surrogate_json(models[k], static_cast<int>(k + 1)));
    kernels.push_back({{"plate", k + 1},
                       {"signal_var", models[k].kernel().signal_var},
                       {"lengthscale", models[k].kernel().lengthscale},
                       {"noise_var", models[k].kernel().noise_var},
                       {"jitter", models[k].jitter()}});
  }
  record_stage(cfg, "train-surrogate", {{"kernels", kernels}});
  timer.finish();
}

std::vector<GateOutcome> cmd_infer(const PipelineConfig& cfg, ModelKind kind, std::optional<int> plate) {
  cfg.validate();
  const RunPaths paths{cfg.output_dir};
  const int K = static_cast<int>(cfg.dataset.num_plates());
  if (plate && (*plate < 1 || *plate > K)) {
    throw InvalidArgument("--plate must be in 1.." + std::to_string(K));
  }
  const Dataset data = load_dataset(cfg);
  const auto surrogates = load_surrogates(cfg);
  std::vector<GateOutcome> gates;
  if (kind == ModelKind::Hierarchical) {
    StageTimer timer(cfg, "infer-hier");
    const ModelSpec spec = build_hierarchical_spec(data, surrogates, cfg.priors);
    gates.push_back(sample_and_store(cfg, spec, derive_seed(cfg.seed, SeedStream::HierarchicalSampler),
                                     paths.hier_chains(), "hier"));
    record_stage(cfg, "infer-hier", gate_json(gates.back()));
    timer.finish();
    return gates;
  }
  const std::vector<ModelSpec> specs = build_independent_specs(data, surrogates, cfg.priors);
  for (int k = 1; k <= K; ++k) {
    if (plate && *plate != k) continue;
    const std::string run = indep_run_name(k);
    StageTimer timer(cfg, "infer-" + run);
    gates.push_back(sample_and_store(cfg, specs[static_cast<std::size_t>(k - 1)],
                                     derive_seed(cfg.seed, SeedStream::IndependentSampler,
                                                 static_cast<std::uint64_t>(k)),
                                     paths.indep_chains(k), run));
    record_stage(cfg, "infer-" + run, gate_json(gates.back()));
    timer.finish();
  }
  return gates;
}

std::vector<DetectionReport> cmd_detect(const PipelineConfig& cfg) {
  cfg.validate();
  StageTimer timer(cfg, "detect");
  const RunPaths paths{cfg.output_dir};
  const int focus = cfg.resolved_focus_plate();
  if (!fs::exists(paths.hier_chains() / "chain_1.csv")) {
    throw IoError("missing hierarchical chains in '" + paths.hier_chains().string() + "'; run infer --model hier");
  }
  if (!fs::exists(paths.indep_chains(focus) / "chain_1.csv")) {
    throw IoError("missing independent chains for plate " + std::to_string(focus) +
                  "; run infer --model indep --plate " + std::to_string(focus));
  }
  const auto surrogates = load_surrogates(cfg);
  const Chains hier = io::read_chains(paths.hier_chains());
  const std::uint64_t seed = derive_seed(cfg.seed, SeedStream::Detection);

  std::vector<DetectionReport> reports;
  json plates = json::array();
  std::string kde_csv = "grid,density,source,plate\n";
  for (int k : indep_plates_on_disk(cfg)) {
    const GprModel& surrogate = *surrogates[static_cast<std::size_t>(k - 1)];
    const Chains indep = io::read_chains(paths.indep_chains(k));
    const PlateParameterDraws pooled_draws = extract_plate_draws(hier, k);
    const PlateParameterDraws unpooled_draws = extract_plate_draws(indep, k);
    const auto base = static_cast<std::uint64_t>(k) * 4;
    Rng rng_thresholds = Rng::stream(seed, base);
    Rng rng_partial = Rng::stream(seed, base + 1);
    Rng rng_none = Rng::stream(seed, base + 2);
    const ThresholdSet thresholds =
        threshold_strains(cfg.detection.levels, surrogate, pooled_draws.noise, rng_thresholds);
    const PredictiveSamples partial =
        draw_predictive(pooled_draws, k, PoolingSource::PartialPooling, surrogate, rng_partial);
    const PredictiveSamples none =
        draw_predictive(unpooled_draws, k, PoolingSource::NoPooling, surrogate, rng_none);
    DetectionReport report = compare_pooling(partial, none, thresholds, cfg.detection.kde_points);

    plates.push_back({{"plate", k},
                      {"threshold_levels_mm", thresholds.levels},
                      {"threshold_strains", thresholds.strain_means},
                      {"partial_pooling", source_json(report.partial)},
                      {"no_pooling", source_json(report.none)},
                      {"variance_reduction_ratio", number(report.variance_reduction_ratio)}});
    for (const SourceDetection* s : {&report.partial, &report.none}) {
      const std::string tail = "," + to_string(s->source) + "," + std::to_string(k) + "\n";
      for (std::size_t i = 0; i < s->curve.grid.size(); ++i) {
        kde_csv += fmt("%.9g", s->curve.grid[i]) + "," + fmt("%.9g", s->curve.density[i]) + tail;
      }
    }
    reports.push_back(std::move(report));
  }

  double focus_ratio = 0.0;
  double other_max = 0.0;
  bool have_other = false;
  for (const auto& r : reports) {
    if (r.plate == focus) {
      focus_ratio = r.variance_reduction_ratio;
    } else {
      other_max = have_other ? std::max(other_max, r.variance_reduction_ratio) : r.variance_reduction_ratio;
      have_other = true;
    }
  }
  json out;
  out["focus_plate"] = focus;
  out["levels_mm"] = cfg.detection.levels;
  out["focus_variance_reduction_ratio"] = number(focus_ratio);
  out["focus_ratio_exceeds_others"] = have_other ? json(focus_ratio > other_max) : json(nullptr);
  out["plates"] = plates;
  io::write_text(paths.detection_dir() / "report.json", out.dump(2) + "\n");
  io::write_text(paths.detection_dir() / "kde.csv", kde_csv);
  record_stage(cfg, "detect",
               {{"focus_plate", focus},
                {"plates", plates.size()},
                {"focus_variance_reduction_ratio", number(focus_ratio)}});
  timer.finish();
  return reports;
}

std::string cmd_report(const PipelineConfig& cfg) {
  cfg.validate();
  StageTimer timer(cfg, "report");
  const RunPaths paths{cfg.output_dir};
  const int focus = cfg.resolved_focus_plate();
  const auto surrogates = load_surrogates(cfg);
  const json hier_summary = read_json(paths.hier_chains() / "summary.json");
  const json detection = read_json(paths.detection_dir() / "report.json");
  const json truth = read_json(paths.dataset_json());

  auto param_mean = [&](const std::string& name) -> double {
    for (const auto& p : hier_summary.at("params")) {
      if (p.at("name") == name) return p.at("mean").is_null() ? NAN : p.at("mean").get<double>();
    }
    throw IoError("summary lacks parameter '" + name + "'");
  };

  json out;
  std::string text;
  text += "Plate deflection inference report\n";
  text += "config hash: " + config_hash(cfg) + "\n";
  text += "seed: " + std::to_string(cfg.seed) + "\n\n";

  // Higher-level parameters: prior vs posterior vs generating value.
  const std::vector<std::pair<std::string, GammaParams>> hyper = {
      {"mu_mu", cfg.priors.mu_mu},          {"sigma_mu", cfg.priors.sigma_mu},
      {"mu_sigma", cfg.priors.mu_sigma},    {"sigma_sigma", cfg.priors.sigma_sigma},
      {"gamma", cfg.priors.noise}};
  const json& gt = truth.at("ground_truth");
  text += "Higher-level parameters (hierarchical model)\n";
  text += "  name          prior_mean  prior_sd   post_mean   post_sd     truth\n";
  json hyper_json = json::array();
  for (const auto& [name, prior] : hyper) {
    const GammaMoments pm = gamma_moments(prior);
    double post_mean = NAN, post_sd = NAN;
    for (const auto& p : hier_summary.at("params")) {
      if (p.at("name") == name) {
        post_mean = p.at("mean").is_null() ? NAN : p.at("mean").get<double>();
        post_sd = p.at("sd").is_null() ? NAN : p.at("sd").get<double>();
      }
    }
    const double truth_value = name == "gamma" ? gt.at("noise_std").get<double>() : gt.at(name).get<double>();
    char line[160];
    std::snprintf(line, sizeof line, "  %-12s %10.4f %10.4f %10.4f %10.4f %10.4f\n", name.c_str(), pm.mean,
                  std::sqrt(pm.variance), post_mean, post_sd, truth_value);
    text += line;
    hyper_json.push_back({{"name", name},
                          {"prior_mean", pm.mean},
                          {"prior_sd", std::sqrt(pm.variance)},
                          {"posterior_mean", number(post_mean)},
                          {"posterior_sd", number(post_sd)},
                          {"truth", truth_value}});
  }
  out["higher_level"] = hyper_json;

  // Surrogate uncertainty at each plate's posterior-mean amplitude.
  text += "\nSurrogate coefficient of variation at the posterior-mean amplitude\n";
  json cov_json = json::array();
  for (std::size_t k = 1; k <= cfg.dataset.num_plates(); ++k) {
    const double amp = param_mean("mu_w[" + std::to_string(k) + "]");
    const GprModel& gp = *surrogates[k - 1];
    const auto cov = coefficient_of_variation(gp, amp);
    char line[160];
    if (cov) {
      std::snprintf(line, sizeof line, "  plate %zu: amplitude %.4f mm, CoV %.4f%%\n", k, amp, 100.0 * *cov);
    } else {
      std::snprintf(line, sizeof line, "  plate %zu: amplitude %.4f mm, CoV undefined (mean near zero)\n", k, amp);
    }
    text += line;
    cov_json.push_back({{"plate", k}, {"amplitude_mm", number(amp)}, {"cov", cov ? json(*cov) : json(nullptr)}});
  }
  out["surrogate_cov"] = cov_json;

  // Convergence.
  text += "\nConvergence (threshold " + fmt("%.4g", cfg.rhat_threshold) + ")\n";
  json conv = json::array();
  std::vector<std::pair<std::string, fs::path>> runs = {{"hier", paths.hier_chains()}};
  for (int k : indep_plates_on_disk(cfg)) runs.emplace_back(indep_run_name(k), paths.indep_chains(k));
  for (const auto& [run, dir] : runs) {
    const json s = read_json(dir / "summary.json");
    char line[200];
    std::snprintf(line, sizeof line, "  %-14s params %3zu  max R-hat %.5f  divergences %zu (%.3f%%)  gate %s\n",
                  run.c_str(), s.at("params").size(), s.at("max_rhat").is_null() ? NAN : s.at("max_rhat").get<double>(),
                  s.at("divergences").get<std::size_t>(), 100.0 * s.at("divergence_rate").get<double>(),
                  s.at("gate_passed").get<bool>() ? "passed" : "FAILED");
    text += line;
    conv.push_back({{"run", run},
                    {"max_rhat", s.at("max_rhat")},
                    {"gate_passed", s.at("gate_passed")},
                    {"divergences", s.at("divergences")},
                    {"divergence_rate", s.at("divergence_rate")}});
  }
  out["convergence"] = conv;

  text += "\nHierarchical model R-hat table\n";
  text += io::read_text(paths.hier_chains() / "summary.txt");

  // Detection.
  text += "\nPosterior predictive detection (focus plate " + std::to_string(focus) + ")\n";
  for (const auto& p : detection.at("plates")) {
    const auto& part = p.at("partial_pooling");
    const auto& none = p.at("no_pooling");
    char line[240];
    std::snprintf(line, sizeof line,
                  "  plate %d: predictive sd partial %.4f, none %.4f, ratio %.4f\n", p.at("plate").get<int>(),
                  part.at("std").get<double>(), none.at("std").get<double>(),
                  p.at("variance_reduction_ratio").get<double>());
    text += line;
    const auto levels = p.at("threshold_levels_mm").get<std::vector<double>>();
    const auto strains = p.at("threshold_strains").get<std::vector<double>>();
    const auto ep = part.at("exceedance").get<std::vector<double>>();
    const auto en = none.at("exceedance").get<std::vector<double>>();
    for (std::size_t i = 0; i < levels.size(); ++i) {
      std::snprintf(line, sizeof line,
                    "    %5.2f mm -> %9.3f microstrain: P(exceed) partial %.4f, none %.4f\n", levels[i],
                    strains[i], ep[i], en[i]);
      text += line;
    }
  }
  out["detection"] = detection;

  // Plot data: per-chain posterior densities with the prior on a shared grid,
  // and each plate's surrogate mean with ±2 sd.
  const Chains hier = io::read_chains(paths.hier_chains());
  std::string posterior_csv = "parameter,curve,x,density\n";
  for (const auto& [name, prior] : hyper) {
    const std::size_t idx = hier.find(name);
    if (idx == static_cast<std::size_t>(-1)) continue;
    const auto per_chain = hier.param(idx);
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t c = 0; c < per_chain.size(); ++c) {
      const KdeCurve curve = kde(per_chain[c], std::nullopt, 256);
      for (std::size_t i = 0; i < curve.grid.size(); ++i) {
        posterior_csv += name + ",chain" + std::to_string(c + 1) + "," + fmt("%.9g", curve.grid[i]) + "," +
                         fmt("%.9g", curve.density[i]) + "\n";
      }
      lo = std::min(lo, curve.grid.front());
      hi = std::max(hi, curve.grid.back());
    }
    lo = std::max(lo, 0.0);
    for (int i = 0; i < 256; ++i) {
      const double x = lo + (hi - lo) * i / 255.0;
      const double d = x > 0.0 ? std::exp(gamma_logpdf(x, prior)) : 0.0;
      posterior_csv += name + ",prior," + fmt("%.9g", x) + "," + fmt("%.9g", d) + "\n";
    }
  }
  io::write_text(paths.plot_dir() / "posterior_kde.csv", posterior_csv);

  std::string surrogate_csv = "plate,amplitude_mm,mean_microeps,sd_microeps\n";
  for (std::size_t k = 1; k <= cfg.dataset.num_plates(); ++k) {
    const GprModel& gp = *surrogates[k - 1];
    for (int i = 0; i <= 120; ++i) {
      const double x = cfg.surrogate.grid_max * i / 120.0;
      const GprPrediction pr = gp.predict(x);
      surrogate_csv += std::to_string(k) + "," + fmt("%.9g", x) + "," + fmt("%.9g", pr.mean) + "," +
                       fmt("%.9g", std::sqrt(pr.variance)) + "\n";
    }
  }
  io::write_text(paths.plot_dir() / "surrogate_curves.csv", surrogate_csv);
  io::write_text(paths.plot_dir() / "predictive_kde.csv", io::read_text(paths.detection_dir() / "kde.csv"));

  io::write_text(paths.root / "report.txt", text);
  io::write_text(paths.root / "report.json", out.dump(2) + "\n");
  record_stage(cfg, "report", {{"files", {"report.txt", "report.json", "plot_data/posterior_kde.csv",
                                          "plot_data/surrogate_curves.csv", "plot_data/predictive_kde.csv"}}});
  timer.finish();
  return text;
}

RunAllResult cmd_run_all(const PipelineConfig& cfg) {
  cfg.validate();
  RunAllResult result;
  cmd_generate(cfg);
  cmd_train_surrogate(cfg);
  for (auto& g : cmd_infer(cfg, ModelKind::Hierarchical)) result.gates.push_back(g);
  for (auto& g : cmd_infer(cfg, ModelKind::Independent)) result.gates.push_back(g);
  cmd_detect(cfg);
  result.report = cmd_report(cfg);
  for (const auto& g : result.gates) result.gates_passed = result.gates_passed && g.passed;
  json gates = json::object();
  for (const auto& g : result.gates) gates[g.run] = gate_json(g);
  record_stage(cfg, "run-all", {{"gates_passed", result.gates_passed}, {"gates", gates}});
  return result;
}

}  // namespace phbm
