// Command-line front end. Talks to the library only through the C interface.
#include <cstdio>
#include <cstdint>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "platehbm/platehbm.h"

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::string model = "hier";
  int plate = 0;
};

int exit_code(phbm_status status) {
  if (status == PHBM_OK) return 0;
  std::fprintf(stderr, "platehbm: %s\n", phbm_last_error());
  return status == PHBM_GATE_FAILED ? 2 : 1;
}

struct ConfigHandle {
  phbm_config* ptr = nullptr;
  ~ConfigHandle() { phbm_config_free(ptr); }
};

phbm_status build_config(const Options& opt, ConfigHandle& cfg) {
  phbm_status st = opt.config_path.empty() ? phbm_config_create(&cfg.ptr)
                                           : phbm_config_load(opt.config_path.c_str(), &cfg.ptr);
  if (st != PHBM_OK) return st;
  if (opt.seed) {
    st = phbm_config_set(cfg.ptr, "general.seed", std::to_string(*opt.seed).c_str());
    if (st != PHBM_OK) return st;
  }
  if (opt.out_dir) {
    st = phbm_config_set(cfg.ptr, "general.output_dir", opt.out_dir->c_str());
    if (st != PHBM_OK) return st;
  }
  return PHBM_OK;
}

void print_and_free(char* text) {
  if (text) {
    std::fputs(text, stdout);
    phbm_string_free(text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Bayesian detection of out-of-plane plate deflections"};
  app.set_version_flag("--version", std::string(phbm_version()));
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Pipeline seed (overrides the config)");
    sub->add_option("--out", opt.out_dir, "Output directory (overrides the config)");
  };

  auto* generate = app.add_subcommand("generate", "Draw the synthetic dataset");
  auto* train = app.add_subcommand("train-surrogate", "Fit one GP surrogate per plate");
  auto* infer = app.add_subcommand("infer", "Sample a posterior with NUTS");
  auto* detect = app.add_subcommand("detect", "Posterior predictive comparison of pooling regimes");
  auto* report = app.add_subcommand("report", "Consolidated report and plot data");
  auto* run_all = app.add_subcommand("run-all", "Every stage in order");
  auto* print_config = app.add_subcommand("print-config", "Show the effective configuration");
  for (auto* sub : {generate, train, infer, detect, report, run_all, print_config}) add_common(sub);
  infer->add_option("--model", opt.model, "hier or indep")->check(CLI::IsMember({"hier", "indep"}));
  infer->add_option("--plate", opt.plate, "Independent model for one plate (1-based)")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  ConfigHandle cfg;
  if (phbm_status st = build_config(opt, cfg); st != PHBM_OK) return exit_code(st);

  phbm_status st = PHBM_OK;
  if (generate->parsed()) {
    st = phbm_generate(cfg.ptr);
  } else if (train->parsed()) {
    st = phbm_train_surrogate(cfg.ptr);
  } else if (infer->parsed()) {
    if (opt.model == "hier" && opt.plate != 0) {
      std::fprintf(stderr, "platehbm: --plate applies to --model indep only\n");
      return 1;
    }
    st = phbm_infer(cfg.ptr, opt.model == "hier" ? PHBM_MODEL_HIER : PHBM_MODEL_INDEP, opt.plate);
  } else if (detect->parsed()) {
    double ratio = 0.0;
    st = phbm_detect(cfg.ptr, &ratio);
    if (st == PHBM_OK) std::printf("variance reduction ratio (focus plate): %.4f\n", ratio);
  } else if (report->parsed()) {
    char* text = nullptr;
    st = phbm_report(cfg.ptr, &text);
    print_and_free(text);
  } else if (run_all->parsed()) {
    char* text = nullptr;
    st = phbm_run_all(cfg.ptr, &text);
    print_and_free(text);
  } else if (print_config->parsed()) {
    char* text = nullptr;
    st = phbm_config_to_ini(cfg.ptr, &text);
    print_and_free(text);
  }
  return exit_code(st);
}
