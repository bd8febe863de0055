#include "platehbm/config.hpp"

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "platehbm/error.hpp"
#include "platehbm/rng.hpp"

namespace phbm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError("'" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError("'" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("'" + key + "': expected true/false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!trim(item).empty()) items.push_back(trim(item));
  }
  return items;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const PipelineConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

#define PHBM_DOUBLE(path)                                                                   \
  Field {                                                                                   \
    [](PipelineConfig& c, const std::string& k, const std::string& v) { c.path = parse_double(k, v); }, \
        [](const PipelineConfig& c) { return fmt(c.path); }                                 \
  }
#define PHBM_INT(path)                                                                      \
  Field {                                                                                   \
    [](PipelineConfig& c, const std::string& k, const std::string& v) {                     \
      c.path = static_cast<decltype(c.path)>(parse_int(k, v));                              \
    },                                                                                      \
        [](const PipelineConfig& c) { return std::to_string(c.path); }                      \
  }
#define PHBM_BOOL(path)                                                                     \
  Field {                                                                                   \
    [](PipelineConfig& c, const std::string& k, const std::string& v) { c.path = parse_bool(k, v); }, \
        [](const PipelineConfig& c) { return std::string(c.path ? "true" : "false"); }      \
  }

// Ordered registry of every setting; order defines the canonical text.
const std::vector<std::pair<std::string, Field>>& registry() {
  static const std::vector<std::pair<std::string, Field>> fields = {
      {"general.seed",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) {
          const long long s = parse_int(k, v);
          if (s < 0) throw ConfigError("'general.seed' must be non-negative");
          c.seed = static_cast<std::uint64_t>(s);
        },
        [](const PipelineConfig& c) { return std::to_string(c.seed); }}},
      {"general.output_dir",
       {[](PipelineConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); },
        [](const PipelineConfig& c) { return c.output_dir; }}},
      {"general.rhat_threshold", PHBM_DOUBLE(rhat_threshold)},
      {"dataset.obs_per_plate",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) {
          c.dataset.obs_per_plate.clear();
          for (const auto& item : split_list(v)) {
            c.dataset.obs_per_plate.push_back(static_cast<int>(parse_int(k, item)));
          }
        },
        [](const PipelineConfig& c) { return join(c.dataset.obs_per_plate); }}},
      {"dataset.mu_mu", PHBM_DOUBLE(dataset.mu_mu)},
      {"dataset.sigma_mu", PHBM_DOUBLE(dataset.sigma_mu)},
      {"dataset.mu_sigma", PHBM_DOUBLE(dataset.mu_sigma)},
      {"dataset.sigma_sigma", PHBM_DOUBLE(dataset.sigma_sigma)},
      {"dataset.noise_std", PHBM_DOUBLE(dataset.noise_std)},
      {"oracle.eps0", PHBM_DOUBLE(dataset.oracle.eps0)},
      {"oracle.kappa1", PHBM_DOUBLE(dataset.oracle.kappa1)},
      {"oracle.kappa2", PHBM_DOUBLE(dataset.oracle.kappa2)},
      {"geometry.a", PHBM_DOUBLE(geometry.a)},
      {"geometry.b", PHBM_DOUBLE(geometry.b)},
      {"geometry.t", PHBM_DOUBLE(geometry.t)},
      {"surrogate.training_source",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) {
          const std::string t = trim(v);
          if (t == "grid") {
            c.surrogate.training_source = TrainingSource::Grid;
          } else if (t == "observations") {
            c.surrogate.training_source = TrainingSource::Observations;
          } else {
            throw ConfigError("'" + k + "': expected grid or observations");
          }
        },
        [](const PipelineConfig& c) {
          return std::string(c.surrogate.training_source == TrainingSource::Grid ? "grid"
                                                                                 : "observations");
        }}},
      {"surrogate.grid_points", PHBM_INT(surrogate.grid_points)},
      {"surrogate.grid_min", PHBM_DOUBLE(surrogate.grid_min)},
      {"surrogate.grid_max", PHBM_DOUBLE(surrogate.grid_max)},
      {"surrogate.training_noise_std", PHBM_DOUBLE(surrogate.training_noise_std)},
      {"surrogate.signal_var", PHBM_DOUBLE(surrogate.init.signal_var)},
      {"surrogate.lengthscale", PHBM_DOUBLE(surrogate.init.lengthscale)},
      {"surrogate.noise_var", PHBM_DOUBLE(surrogate.init.noise_var)},
      {"surrogate.optimize", PHBM_BOOL(surrogate.optimize)},
      {"surrogate.restarts", PHBM_INT(surrogate.restarts)},
      {"priors.mu_mu_shape", PHBM_DOUBLE(priors.mu_mu.shape)},
      {"priors.mu_mu_rate", PHBM_DOUBLE(priors.mu_mu.rate)},
      {"priors.sigma_mu_shape", PHBM_DOUBLE(priors.sigma_mu.shape)},
      {"priors.sigma_mu_rate", PHBM_DOUBLE(priors.sigma_mu.rate)},
      {"priors.mu_sigma_shape", PHBM_DOUBLE(priors.mu_sigma.shape)},
      {"priors.mu_sigma_rate", PHBM_DOUBLE(priors.mu_sigma.rate)},
      {"priors.sigma_sigma_shape", PHBM_DOUBLE(priors.sigma_sigma.shape)},
      {"priors.sigma_sigma_rate", PHBM_DOUBLE(priors.sigma_sigma.rate)},
      {"priors.noise_shape", PHBM_DOUBLE(priors.noise.shape)},
      {"priors.noise_rate", PHBM_DOUBLE(priors.noise.rate)},
      {"sampler.warmup", PHBM_INT(sampler.n_warmup)},
      {"sampler.samples", PHBM_INT(sampler.n_samples)},
      {"sampler.chains", PHBM_INT(sampler.n_chains)},
      {"sampler.target_accept", PHBM_DOUBLE(sampler.target_accept)},
      {"sampler.max_tree_depth", PHBM_INT(sampler.max_tree_depth)},
      {"sampler.init_radius", PHBM_DOUBLE(sampler.init_radius)},
      {"sampler.parallel", PHBM_BOOL(sampler.parallel)},
      {"detection.levels",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) {
          c.detection.levels.clear();
          for (const auto& item : split_list(v)) c.detection.levels.push_back(parse_double(k, item));
        },
        [](const PipelineConfig& c) { return join(c.detection.levels); }}},
      {"detection.kde_points", PHBM_INT(detection.kde_points)},
      {"detection.focus_plate", PHBM_INT(detection.focus_plate)},
  };
  return fields;
}

#undef PHBM_DOUBLE
#undef PHBM_INT
#undef PHBM_BOOL

}  // namespace

void PipelineConfig::validate() const {
  dataset.validate();
  geometry.validate();
  priors.mu_mu.validate();
  priors.sigma_mu.validate();
  priors.mu_sigma.validate();
  priors.sigma_sigma.validate();
  priors.noise.validate();
  sampler.validate();
  surrogate.init.validate();
  if (surrogate.grid_points < 2) throw ConfigError("surrogate.grid_points must be at least 2");
  if (!(surrogate.grid_min >= 0.0) || !(surrogate.grid_max > surrogate.grid_min)) {
    throw ConfigError("surrogate grid requires 0 <= grid_min < grid_max");
  }
  if (!(surrogate.training_noise_std >= 0.0)) throw ConfigError("training noise must be >= 0");
  if (surrogate.restarts < 0) throw ConfigError("surrogate.restarts must be >= 0");
  if (detection.levels.empty()) throw ConfigError("detection.levels is empty");
  for (std::size_t i = 0; i < detection.levels.size(); ++i) {
    if (!(detection.levels[i] > 0.0) || (i > 0 && !(detection.levels[i] > detection.levels[i - 1]))) {
      throw ConfigError("detection.levels must be positive and strictly increasing");
    }
  }
  if (detection.kde_points < 2) throw ConfigError("detection.kde_points must be at least 2");
  const int K = static_cast<int>(dataset.num_plates());
  if (detection.focus_plate < 0 || detection.focus_plate > K) {
    throw ConfigError("detection.focus_plate must be 0 or a plate label in 1.." + std::to_string(K));
  }
  if (!(rhat_threshold > 1.0)) throw ConfigError("general.rhat_threshold must exceed 1");
  if (output_dir.empty()) throw ConfigError("general.output_dir is empty");
}

int PipelineConfig::resolved_focus_plate() const {
  if (detection.focus_plate > 0) return detection.focus_plate;
  int best = 1;
  for (std::size_t k = 0; k < dataset.obs_per_plate.size(); ++k) {
    if (dataset.obs_per_plate[k] <= dataset.obs_per_plate[static_cast<std::size_t>(best - 1)]) {
      best = static_cast<int>(k + 1);
    }
  }
  return best;
}

void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : registry()) {
    if (name == key) {
      field.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

PipelineConfig load_config(const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("cannot read config '" + path + "': " + e.message());
  }
  PipelineConfig cfg;
  for (const auto& [section, entries] : tree) {
    if (entries.empty()) throw ConfigError("config key '" + section + "' is outside a section");
    for (const auto& [key, node] : entries) {
      apply_setting(cfg, section + "." + key, node.get_value<std::string>());
    }
  }
  cfg.validate();
  return cfg;
}

std::string to_ini(const PipelineConfig& cfg) {
  std::string out;
  std::string current;
  for (const auto& [name, field] : registry()) {
    const auto dot = name.find('.');
    const std::string section = name.substr(0, dot);
    if (section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + section + "]\n";
      current = section;
    }
    out += name.substr(dot + 1) + " = " + field.get(cfg) + "\n";
  }
  return out;
}

std::string config_hash(const PipelineConfig& cfg) {
  PipelineConfig canonical = cfg;
  canonical.output_dir = "-";
  const std::string text = to_ini(canonical);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream, std::uint64_t offset) {
  Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(stream) + offset);
  return rng();
}

}  // namespace phbm
