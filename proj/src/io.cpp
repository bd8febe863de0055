#include "platehbm/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "platehbm/error.hpp"

namespace phbm::io {

using nlohmann::json;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// JSON has no NaN/inf; those serialize as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double to_double(const std::string& field, const fs::path& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw IoError("malformed number '" + field + "' in " + where.string());
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + what + ": " + e.what());
  }
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string dataset_csv(const Dataset& data) {
  std::string out = "plate_index,obs_index,amplitude_mm,strain_microeps\n";
  for (std::size_t k = 0; k < data.plates.size(); ++k) {
    const auto& plate = data.plates[k];
    for (std::size_t i = 0; i < plate.amplitude.size(); ++i) {
      out += std::to_string(k + 1) + "," + std::to_string(i + 1) + "," + fmt("%.9g", plate.amplitude[i]) +
             "," + fmt("%.9g", plate.strain[i]) + "\n";
    }
  }
  return out;
}

Dataset parse_dataset_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "plate_index,obs_index,amplitude_mm,strain_microeps") {
    throw IoError("dataset CSV has an unexpected header: '" + line + "'");
  }
  Dataset data;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) throw IoError("dataset CSV line " + std::to_string(lineno) + ": expected 4 fields");
    const double plate = to_double(fields[0], "dataset CSV");
    const double obs = to_double(fields[1], "dataset CSV");
    const auto k = static_cast<std::size_t>(plate);
    if (plate < 1 || plate != std::floor(plate) || k > data.plates.size() + 1) {
      throw IoError("dataset CSV line " + std::to_string(lineno) + ": plates must be listed in order from 1");
    }
    if (k == data.plates.size() + 1) data.plates.emplace_back();
    auto& p = data.plates[k - 1];
    if (obs != static_cast<double>(p.amplitude.size() + 1)) {
      throw IoError("dataset CSV line " + std::to_string(lineno) + ": observation index out of order");
    }
    p.amplitude.push_back(to_double(fields[2], "dataset CSV"));
    p.strain.push_back(to_double(fields[3], "dataset CSV"));
  }
  if (data.plates.empty()) throw IoError("dataset CSV has no observations");
  return data;
}

void write_dataset(const fs::path& path, const Dataset& data) { write_text(path, dataset_csv(data)); }

Dataset read_dataset(const fs::path& path) { return parse_dataset_csv(read_text(path)); }

std::string ground_truth_json(const DatasetConfig& cfg, const GroundTruth& truth, std::uint64_t seed) {
  json j;
  j["seed"] = seed;
  j["config"] = {{"obs_per_plate", cfg.obs_per_plate},
                 {"mu_mu", cfg.mu_mu},
                 {"sigma_mu", cfg.sigma_mu},
                 {"mu_sigma", cfg.mu_sigma},
                 {"sigma_sigma", cfg.sigma_sigma},
                 {"noise_std", cfg.noise_std},
                 {"oracle", {{"eps0", cfg.oracle.eps0}, {"kappa1", cfg.oracle.kappa1}, {"kappa2", cfg.oracle.kappa2}}}};
  j["ground_truth"] = {{"mu_mu", truth.mu_mu},
                       {"sigma_mu", truth.sigma_mu},
                       {"mu_sigma", truth.mu_sigma},
                       {"sigma_sigma", truth.sigma_sigma},
                       {"plate_mean", truth.plate_mean},
                       {"plate_std", truth.plate_std},
                       {"noise_std", truth.noise_std}};
  return j.dump(2) + "\n";
}

std::string surrogate_json(const GprModel& model, int plate) {
  json j;
  j["plate"] = plate;
  j["kernel"] = {{"signal_var", model.kernel().signal_var},
                 {"lengthscale", model.kernel().lengthscale},
                 {"noise_var", model.kernel().noise_var}};
  j["jitter"] = model.jitter();
  j["log_marginal_likelihood"] = number(model.log_marginal_likelihood());
  j["train_x"] = model.train_x();
  j["train_y"] = model.train_y();
  return j.dump(2) + "\n";
}

GprModel parse_surrogate_json(const std::string& text) {
  const json j = parse_json(text, "surrogate file");
  try {
    KernelConfig kernel;
    kernel.signal_var = j.at("kernel").at("signal_var").get<double>();
    kernel.lengthscale = j.at("kernel").at("lengthscale").get<double>();
    kernel.noise_var = j.at("kernel").at("noise_var").get<double>();
    return GprModel(j.at("train_x").get<std::vector<double>>(), j.at("train_y").get<std::vector<double>>(),
                    kernel);
  } catch (const json::exception& e) {
    throw IoError(std::string("surrogate file is missing fields: ") + e.what());
  }
}

std::string layout_json(const ParamLayout& layout) {
  json arr = json::array();
  for (const auto& p : layout.params()) {
    arr.push_back({{"name", p.name},
                   {"index", p.index},
                   {"transform", p.transform == Transform::Exp ? "exp" : "softplus"},
                   {"units", p.units}});
  }
  json j;
  j["model"] = layout.kind() == ModelKind::Hierarchical ? "hierarchical" : "independent";
  j["dim"] = layout.dim();
  j["params"] = arr;
  return j.dump(2) + "\n";
}

std::string summary_json(const Summary& summary) {
  json params = json::array();
  for (const auto& p : summary.params) {
    params.push_back({{"name", p.name},
                      {"mean", number(p.mean)},
                      {"sd", number(p.sd)},
                      {"q2.5", number(p.q025)},
                      {"q50", number(p.q50)},
                      {"q97.5", number(p.q975)},
                      {"mcse_mean", number(p.mcse_mean)},
                      {"rhat", number(p.rhat)},
                      {"ess_bulk", number(p.ess_bulk)},
                      {"ess_tail", number(p.ess_tail)},
                      {"degenerate", p.degenerate}});
  }
  json j;
  j["n_chains"] = summary.n_chains;
  j["n_draws"] = summary.n_draws;
  j["rhat_threshold"] = summary.rhat_threshold;
  j["max_rhat"] = number(summary.max_rhat);
  j["gate_passed"] = summary.gate_passed;
  j["divergences"] = summary.divergences;
  j["divergence_rate"] = summary.divergence_rate;
  j["params"] = params;
  return j.dump(2) + "\n";
}

void write_chains(const fs::path& dir, const Chains& chains, const ParamLayout& layout,
                  const Summary& summary) {
  std::string header;
  for (std::size_t i = 0; i < chains.names.size(); ++i) {
    if (i) header += ",";
    header += chains.names[i];
  }
  header += "\n";
  json stats = json::array();
  for (std::size_t c = 0; c < chains.n_chains(); ++c) {
    const auto& m = chains.draws[c];
    std::string text = header;
    text.reserve(header.size() + static_cast<std::size_t>(m.size()) * 24);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) {
        if (col) text += ",";
        text += fmt("%.17g", m(r, col));
      }
      text += "\n";
    }
    write_text(dir / ("chain_" + std::to_string(c + 1) + ".csv"), text);

    const auto& s = chains.stats[c];
    std::vector<int> divergent(s.divergent.begin(), s.divergent.end());
    stats.push_back({{"chain", c + 1},
                     {"seed", s.seed},
                     {"step_size", s.step_size},
                     {"inv_metric", std::vector<double>(s.inv_metric.data(), s.inv_metric.data() + s.inv_metric.size())},
                     {"warmup_divergences", s.warmup_divergences},
                     {"divergent", divergent},
                     {"tree_depth", s.tree_depth},
                     {"n_leapfrog", s.n_leapfrog},
                     {"accept_stat", s.accept_stat},
                     {"energy", s.energy}});
  }
  write_text(dir / "stats.json", stats.dump() + "\n");
  write_text(dir / "params.json", layout_json(layout));
  write_text(dir / "summary.json", summary_json(summary));
  write_text(dir / "summary.txt", format_summary(summary));
}

Chains read_chains(const fs::path& dir) {
  Chains chains;
  for (std::size_t c = 1;; ++c) {
    const fs::path path = dir / ("chain_" + std::to_string(c) + ".csv");
    if (!fs::exists(path)) break;
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty chain file " + path.string());
    auto names = split_csv_line(line);
    if (chains.names.empty()) {
      chains.names = names;
    } else if (names != chains.names) {
      throw IoError("chain files in " + dir.string() + " disagree on columns");
    }
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto fields = split_csv_line(line);
      if (fields.size() != names.size()) throw IoError("ragged row in " + path.string());
      for (const auto& f : fields) values.push_back(to_double(f, path));
      ++rows;
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(names.size()));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t col = 0; col < names.size(); ++col) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) = values[r * names.size() + col];
      }
    }
    if (!chains.draws.empty() && chains.draws[0].rows() != m.rows()) {
      throw IoError("chain files in " + dir.string() + " have different lengths");
    }
    chains.draws.push_back(std::move(m));
  }
  if (chains.draws.empty()) throw IoError("no chain files found in '" + dir.string() + "'");

  const fs::path stats_path = dir / "stats.json";
  if (fs::exists(stats_path)) {
    const json stats = parse_json(read_text(stats_path), stats_path.string());
    try {
      for (const auto& s : stats) {
        ChainStats cs;
        cs.seed = s.at("seed").get<std::uint64_t>();
        cs.step_size = s.at("step_size").get<double>();
        const auto inv = s.at("inv_metric").get<std::vector<double>>();
        cs.inv_metric = Eigen::Map<const Eigen::VectorXd>(inv.data(), static_cast<Eigen::Index>(inv.size()));
        cs.warmup_divergences = s.at("warmup_divergences").get<int>();
        for (int d : s.at("divergent").get<std::vector<int>>()) cs.divergent.push_back(static_cast<std::uint8_t>(d));
        cs.tree_depth = s.at("tree_depth").get<std::vector<int>>();
        cs.n_leapfrog = s.at("n_leapfrog").get<std::vector<int>>();
        cs.accept_stat = s.at("accept_stat").get<std::vector<double>>();
        cs.energy = s.at("energy").get<std::vector<double>>();
        chains.stats.push_back(std::move(cs));
      }
    } catch (const json::exception& e) {
      throw IoError("malformed " + stats_path.string() + ": " + e.what());
    }
  }
  if (chains.stats.size() != chains.draws.size()) {
    chains.stats.assign(chains.draws.size(), ChainStats{});
    for (auto& s : chains.stats) s.divergent.assign(static_cast<std::size_t>(chains.draws[0].rows()), 0);
  }
  return chains;
}

}  // namespace phbm::io
