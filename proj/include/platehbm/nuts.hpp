#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "platehbm/log_density.hpp"
#include "platehbm/rng.hpp"

namespace phbm {

struct SamplerConfig {
  int n_warmup = 4000;
  int n_samples = 2000;
  int n_chains = 4;
  double target_accept = 0.9;
  int max_tree_depth = 10;
  std::uint64_t seed = 42;
  bool parallel = true;
  /// Initial unconstrained coordinates are drawn from Uniform(−r, r).
  double init_radius = 1.0;
  double max_delta_energy = 1000.0;

  void validate() const;
};

/// Position, momentum and the cached log density/gradient at the position.
struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double logp = 0.0;
};

/// One velocity-Verlet step on H(q, p) = −ln π(q) + ½ pᵀ M⁻¹ p, where
/// `inv_metric` is the diagonal of M⁻¹. Returns false if the new position has a
/// non-finite log density or gradient.
bool leapfrog(PhasePoint& z, double step, const Eigen::VectorXd& inv_metric,
              const LogDensity& target);

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric);

struct TransitionStats {
  double accept_stat = 0.0;
  int tree_depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  bool max_depth_reached = false;
  double energy = 0.0;
};

/// One NUTS transition with multinomial sampling along the trajectory and the
/// generalized no-U-turn criterion. Updates `state` in place.
TransitionStats nuts_draw(PhasePoint& state, const LogDensity& target, double step,
                          const Eigen::VectorXd& inv_metric, int max_tree_depth, Rng& rng,
                          double max_delta_energy = 1000.0);

/// Nesterov dual averaging of ln(step size) toward a target acceptance rate.
class DualAveraging {
 public:
  explicit DualAveraging(double target_accept, double gamma = 0.05, double t0 = 10.0,
                         double kappa = 0.75);

  void restart(double initial_step);
  /// Feed one acceptance statistic; returns the next step size.
  double update(double accept_stat);
  double final_step() const;

 private:
  double delta_;
  double gamma_;
  double t0_;
  double kappa_;
  double mu_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
  double counter_ = 0.0;
};

/// Warmup schedule: initial fast buffer, doubling slow windows for the metric,
/// terminal fast buffer. A negative term_buffer means max(50, n_warmup/5).
class WindowedAdaptation {
 public:
  explicit WindowedAdaptation(int n_warmup, int init_buffer = 75, int term_buffer = -1,
                              int base_window = 25);

  /// Record one warmup position. Returns true when a window closes and
  /// `inv_metric` has been replaced by the regularized window variance.
  bool learn(const Eigen::VectorXd& q, Eigen::VectorXd& inv_metric);

 private:
  bool in_window() const;
  bool window_end() const;
  void next_window();

  int n_warmup_;
  int init_buffer_;
  int term_buffer_;
  int base_window_;
  int counter_ = 0;
  int window_size_ = 0;
  int window_end_ = 0;
  bool enabled_ = true;
  // Welford accumulators
  long n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

/// Doubling/halving search for a step size whose one-step acceptance crosses 0.8.
double find_initial_step(PhasePoint z, const LogDensity& target, const Eigen::VectorXd& inv_metric,
                         double step, Rng& rng);

struct ChainStats {
  std::uint64_t seed = 0;
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
  int warmup_divergences = 0;
  std::vector<std::uint8_t> divergent;
  std::vector<int> tree_depth;
  std::vector<int> n_leapfrog;
  std::vector<double> accept_stat;
  std::vector<double> energy;
};

/// Post-warmup draws. `draws[c]` is n_samples × dim in the target's reported
/// (constrained) space, `unconstrained[c]` holds the sampler-space copies.
struct Chains {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> draws;
  std::vector<Eigen::MatrixXd> unconstrained;
  std::vector<ChainStats> stats;

  std::size_t n_chains() const { return draws.size(); }
  std::size_t n_draws() const { return draws.empty() ? 0 : static_cast<std::size_t>(draws[0].rows()); }
  std::size_t dim() const { return names.size(); }
  std::size_t find(const std::string& name) const;
  /// Per-chain draws of one parameter.
  std::vector<std::vector<double>> param(std::size_t index) const;
  std::size_t divergences() const;
  double divergence_rate() const;
  double mean_accept_stat() const;
};

/// Runs n_chains independent chains (threads when cfg.parallel). Chain c uses
/// the RNG stream (cfg.seed, c), so results do not depend on scheduling.
/// Throws NumericError if a chain diverges on every warmup iteration.
Chains run_chains(const LogDensity& target, const SamplerConfig& cfg);

}  // namespace phbm
