#include "platehbm/platehbm.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <string>

#include "platehbm/config.hpp"
#include "platehbm/diagnostics.hpp"
#include "platehbm/error.hpp"
#include "platehbm/io.hpp"
#include "platehbm/pipeline.hpp"

struct phbm_config {
  phbm::PipelineConfig cfg;
};
struct phbm_dataset {
  phbm::Dataset data;
};
struct phbm_gpr {
  phbm::GprModel model;
};

namespace {

thread_local std::string g_last_error;

void (*g_warning_handler)(const char*) = nullptr;

void forward_warning(const std::string& message) {
  if (g_warning_handler) g_warning_handler(message.c_str());
}

phbm_status fail(phbm_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Maps the library's exception types onto status codes.
template <typename F>
phbm_status guarded(F&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const phbm::InvalidArgument& e) {
    return fail(PHBM_ERR_INVALID_ARGUMENT, e.what());
  } catch (const phbm::DomainError& e) {
    return fail(PHBM_ERR_DOMAIN, e.what());
  } catch (const phbm::NumericError& e) {
    return fail(PHBM_ERR_NUMERIC, e.what());
  } catch (const phbm::IoError& e) {
    return fail(PHBM_ERR_IO, e.what());
  } catch (const phbm::ConfigError& e) {
    return fail(PHBM_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(PHBM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(PHBM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(PHBM_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define PHBM_REQUIRE(ptr)                                                  \
  do {                                                                     \
    if (!(ptr)) return fail(PHBM_ERR_INVALID_ARGUMENT, #ptr " is NULL");   \
  } while (0)

phbm_status gate_status(const std::vector<phbm::GateOutcome>& gates) {
  std::string failed;
  for (const auto& g : gates) {
    if (!g.passed) failed += (failed.empty() ? "" : ", ") + g.run + " (max R-hat " + std::to_string(g.max_rhat) + ")";
  }
  if (failed.empty()) return PHBM_OK;
  return fail(PHBM_GATE_FAILED, "convergence gate failed: " + failed);
}

phbm::ChainDraws to_chains(const double* draws, std::size_t n_chains, std::size_t n_draws) {
  phbm::ChainDraws chains(n_chains);
  for (std::size_t c = 0; c < n_chains; ++c) chains[c].assign(draws + c * n_draws, draws + (c + 1) * n_draws);
  return chains;
}

const phbm::PlateObservations& plate_of(const phbm_dataset* ds, int plate) {
  if (plate < 1 || static_cast<std::size_t>(plate) > ds->data.plates.size()) {
    throw phbm::InvalidArgument("plate " + std::to_string(plate) + " out of range");
  }
  return ds->data.plates[static_cast<std::size_t>(plate - 1)];
}

}  // namespace

extern "C" {

const char* phbm_version(void) { return PHBM_VERSION_STRING; }

const char* phbm_last_error(void) { return g_last_error.c_str(); }

void phbm_string_free(char* s) { std::free(s); }

void phbm_set_warning_handler(void (*handler)(const char* message)) {
  g_warning_handler = handler;
  phbm::set_warning_sink(handler ? &forward_warning : nullptr);
}

phbm_status phbm_config_create(phbm_config** out) {
  PHBM_REQUIRE(out);
  return guarded([&] {
    *out = new phbm_config{};
    return PHBM_OK;
  });
}

phbm_status phbm_config_load(const char* path, phbm_config** out) {
  PHBM_REQUIRE(path);
  PHBM_REQUIRE(out);
  return guarded([&] {
    *out = new phbm_config{phbm::load_config(path)};
    return PHBM_OK;
  });
}

phbm_status phbm_config_set(phbm_config* cfg, const char* key, const char* value) {
  PHBM_REQUIRE(cfg);
  PHBM_REQUIRE(key);
  PHBM_REQUIRE(value);
  return guarded([&] {
    phbm::PipelineConfig updated = cfg->cfg;
    phbm::apply_setting(updated, key, value);
    cfg->cfg = std::move(updated);
    return PHBM_OK;
  });
}

phbm_status phbm_config_to_ini(const phbm_config* cfg, char** out) {
  PHBM_REQUIRE(cfg);
  PHBM_REQUIRE(out);
  return guarded([&] {
    *out = dup_string(phbm::to_ini(cfg->cfg));
    return PHBM_OK;
  });
}

phbm_status phbm_config_hash(const phbm_config* cfg, char** out) {
  PHBM_REQUIRE(cfg);
  PHBM_REQUIRE(out);
  return guarded([&] {
    *out = dup_string(phbm::config_hash(cfg->cfg));
    return PHBM_OK;
  });
}

void phbm_config_free(phbm_config* cfg) { delete cfg; }

phbm_status phbm_generate(const phbm_config* cfg) {
  PHBM_REQUIRE(cfg);
  return guarded([&] {
    phbm::cmd_generate(cfg->cfg);
    return PHBM_OK;
  });
}

phbm_status phbm_train_surrogate(const phbm_config* cfg) {
  PHBM_REQUIRE(cfg);
  return guarded([&] {
    phbm::cmd_train_surrogate(cfg->cfg);
    return PHBM_OK;
  });
}

phbm_status phbm_infer(const phbm_config* cfg, phbm_model model, int plate) {
  PHBM_REQUIRE(cfg);
  return guarded([&] {
    if (model != PHBM_MODEL_HIER && model != PHBM_MODEL_INDEP) {
      throw phbm::InvalidArgument("unknown model kind");
    }
    if (plate < 0) throw phbm::InvalidArgument("plate must be 0 (all) or a 1-based label");
    const auto kind = model == PHBM_MODEL_HIER ? phbm::ModelKind::Hierarchical : phbm::ModelKind::Independent;
    const auto gates = phbm::cmd_infer(cfg->cfg, kind, plate > 0 ? std::optional<int>(plate) : std::nullopt);
    return gate_status(gates);
  });
}

phbm_status phbm_detect(const phbm_config* cfg, double* focus_ratio) {
  PHBM_REQUIRE(cfg);
  return guarded([&] {
    const auto reports = phbm::cmd_detect(cfg->cfg);
    if (focus_ratio) {
      const int focus = cfg->cfg.resolved_focus_plate();
      for (const auto& r : reports) {
        if (r.plate == focus) *focus_ratio = r.variance_reduction_ratio;
      }
    }
    return PHBM_OK;
  });
}

phbm_status phbm_report(const phbm_config* cfg, char** text) {
  PHBM_REQUIRE(cfg);
  return guarded([&] {
    const std::string report = phbm::cmd_report(cfg->cfg);
    if (text) *text = dup_string(report);
    return PHBM_OK;
  });
}

phbm_status phbm_run_all(const phbm_config* cfg, char** report_text) {
  PHBM_REQUIRE(cfg);
  return guarded([&] {
    const phbm::RunAllResult result = phbm::cmd_run_all(cfg->cfg);
    if (report_text) *report_text = dup_string(result.report);
    return gate_status(result.gates);
  });
}

phbm_status phbm_dataset_generate(const phbm_config* cfg, uint64_t seed, phbm_dataset** out) {
  PHBM_REQUIRE(cfg);
  PHBM_REQUIRE(out);
  return guarded([&] {
    *out = new phbm_dataset{phbm::generate_dataset(cfg->cfg.dataset, seed).dataset};
    return PHBM_OK;
  });
}

phbm_status phbm_dataset_load(const char* csv_path, phbm_dataset** out) {
  PHBM_REQUIRE(csv_path);
  PHBM_REQUIRE(out);
  return guarded([&] {
    *out = new phbm_dataset{phbm::io::read_dataset(csv_path)};
    return PHBM_OK;
  });
}

phbm_status phbm_dataset_num_plates(const phbm_dataset* ds, size_t* out) {
  PHBM_REQUIRE(ds);
  PHBM_REQUIRE(out);
  *out = ds->data.plates.size();
  return PHBM_OK;
}

phbm_status phbm_dataset_plate_size(const phbm_dataset* ds, int plate, size_t* out) {
  PHBM_REQUIRE(ds);
  PHBM_REQUIRE(out);
  return guarded([&] {
    *out = plate_of(ds, plate).amplitude.size();
    return PHBM_OK;
  });
}

phbm_status phbm_dataset_plate(const phbm_dataset* ds, int plate, double* amplitude, double* strain,
                               size_t capacity) {
  PHBM_REQUIRE(ds);
  return guarded([&] {
    const auto& p = plate_of(ds, plate);
    const std::size_t n = std::min(capacity, p.amplitude.size());
    if (amplitude) std::copy_n(p.amplitude.begin(), n, amplitude);
    if (strain) std::copy_n(p.strain.begin(), n, strain);
    return PHBM_OK;
  });
}

void phbm_dataset_free(phbm_dataset* ds) { delete ds; }

phbm_status phbm_gpr_fit(const double* x, const double* y, size_t n, double signal_var, double lengthscale,
                         double noise_var, int optimize, uint64_t seed, phbm_gpr** out) {
  PHBM_REQUIRE(x);
  PHBM_REQUIRE(y);
  PHBM_REQUIRE(out);
  return guarded([&] {
    phbm::KernelConfig kernel{signal_var, lengthscale, noise_var};
    phbm::FitOptions options;
    options.optimize = optimize != 0;
    options.seed = seed;
    *out = new phbm_gpr{phbm::gpr_fit(std::vector<double>(x, x + n), std::vector<double>(y, y + n), kernel, options)};
    return PHBM_OK;
  });
}

phbm_status phbm_gpr_predict(const phbm_gpr* gp, double x, double* mean, double* variance) {
  PHBM_REQUIRE(gp);
  return guarded([&] {
    const auto p = gp->model.predict(x);
    if (mean) *mean = p.mean;
    if (variance) *variance = p.variance;
    return PHBM_OK;
  });
}

phbm_status phbm_gpr_mean_grad(const phbm_gpr* gp, double x, double* grad) {
  PHBM_REQUIRE(gp);
  PHBM_REQUIRE(grad);
  return guarded([&] {
    *grad = gp->model.mean_grad(x);
    return PHBM_OK;
  });
}

phbm_status phbm_gpr_kernel(const phbm_gpr* gp, double* signal_var, double* lengthscale, double* noise_var) {
  PHBM_REQUIRE(gp);
  const auto& k = gp->model.kernel();
  if (signal_var) *signal_var = k.signal_var;
  if (lengthscale) *lengthscale = k.lengthscale;
  if (noise_var) *noise_var = k.noise_var;
  return PHBM_OK;
}

phbm_status phbm_gpr_log_marginal_likelihood(const phbm_gpr* gp, double* out) {
  PHBM_REQUIRE(gp);
  PHBM_REQUIRE(out);
  return guarded([&] {
    *out = gp->model.log_marginal_likelihood();
    return PHBM_OK;
  });
}

void phbm_gpr_free(phbm_gpr* gp) { delete gp; }

phbm_status phbm_rhat(const double* draws, size_t n_chains, size_t n_draws, double* out) {
  PHBM_REQUIRE(draws);
  PHBM_REQUIRE(out);
  return guarded([&] {
    *out = phbm::rank_normalized_rhat(to_chains(draws, n_chains, n_draws)).value;
    return PHBM_OK;
  });
}

phbm_status phbm_ess_bulk(const double* draws, size_t n_chains, size_t n_draws, double* out) {
  PHBM_REQUIRE(draws);
  PHBM_REQUIRE(out);
  return guarded([&] {
    *out = phbm::ess(to_chains(draws, n_chains, n_draws), phbm::EssKind::Bulk).value;
    return PHBM_OK;
  });
}

phbm_status phbm_ess_tail(const double* draws, size_t n_chains, size_t n_draws, double* out) {
  PHBM_REQUIRE(draws);
  PHBM_REQUIRE(out);
  return guarded([&] {
    *out = phbm::ess(to_chains(draws, n_chains, n_draws), phbm::EssKind::Tail).value;
    return PHBM_OK;
  });
}

}  // extern "C"
