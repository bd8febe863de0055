#include "platehbm/nuts.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "platehbm/error.hpp"

namespace phbm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void sample_momentum(PhasePoint& z, const Eigen::VectorXd& inv_metric, Rng& rng) {
  z.p.resize(z.q.size());
  for (Eigen::Index i = 0; i < z.p.size(); ++i) z.p[i] = rng.normal() / std::sqrt(inv_metric[i]);
}

bool evaluate(PhasePoint& z, const LogDensity& target) {
  z.logp = target.log_density(z.q, z.grad);
  return std::isfinite(z.logp) && z.grad.allFinite();
}

bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
               const Eigen::VectorXd& rho) {
  return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
}

// Recursive trajectory builder. `z` is the integrator state at the growing
// edge; the other references accumulate into the caller's subtree summaries.
class TreeBuilder {
 public:
  TreeBuilder(const LogDensity& target, const Eigen::VectorXd& inv_metric, double step,
              double h0, double max_delta_energy, Rng& rng)
      : target_(target), inv_metric_(inv_metric), step_(step), h0_(h0),
        max_delta_energy_(max_delta_energy), rng_(rng) {}

  bool build(int depth, PhasePoint& z, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg,
             Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
             Eigen::VectorXd& p_end, double direction, double& log_sum_weight) {
    if (depth == 0) {
      const bool ok = leapfrog(z, direction * step_, inv_metric_, target_);
      ++n_leapfrog;
      double h = ok ? hamiltonian(z, inv_metric_) : std::numeric_limits<double>::infinity();
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      if (h - h0_ > max_delta_energy_) divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0_ - h);
      sum_metro_prob += h0_ - h > 0.0 ? 1.0 : std::exp(h0_ - h);
      z_propose = z;
      p_sharp_beg = inv_metric_.cwiseProduct(z.p);
      p_sharp_end = p_sharp_beg;
      rho += z.p;
      p_beg = z.p;
      p_end = p_beg;
      return !divergent;
    }

    // Initial subtree
    const auto n = z.q.size();
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd p_init_end(n), p_sharp_init_end(n);
    double log_sum_weight_init = kNegInf;
    if (!build(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
               p_init_end, direction, log_sum_weight_init)) {
      return false;
    }

    // Final subtree
    PhasePoint z_propose_final = z;
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd p_final_beg(n), p_sharp_final_beg(n);
    double log_sum_weight_final = kNegInf;
    if (!build(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
               p_final_beg, p_end, direction, log_sum_weight_final)) {
      return false;
    }

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (rng_.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
    persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
    return persist;
  }

  int n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  bool divergent = false;

 private:
  const LogDensity& target_;
  const Eigen::VectorXd& inv_metric_;
  double step_;
  double h0_;
  double max_delta_energy_;
  Rng& rng_;
};

PhasePoint initial_point(const LogDensity& target, double radius, Rng& rng) {
  PhasePoint z;
  z.q.resize(static_cast<Eigen::Index>(target.dim()));
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (Eigen::Index i = 0; i < z.q.size(); ++i) z.q[i] = rng.uniform(-radius, radius);
    if (evaluate(z, target)) return z;
  }
  throw NumericError("could not find an initial point with finite log density in 100 attempts");
}

}  // namespace

void SamplerConfig::validate() const {
  if (n_warmup < 0 || n_samples <= 0 || n_chains <= 0) {
    throw InvalidArgument("sampler counts must be positive (warmup may be zero)");
  }
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw InvalidArgument("target_accept must lie in (0, 1)");
  }
  if (max_tree_depth <= 0) throw InvalidArgument("max_tree_depth must be positive");
  if (!(init_radius > 0.0)) throw InvalidArgument("init_radius must be positive");
  if (!(max_delta_energy > 0.0)) throw InvalidArgument("max_delta_energy must be positive");
}

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric) {
  return -z.logp + 0.5 * z.p.cwiseProduct(inv_metric).dot(z.p);
}

bool leapfrog(PhasePoint& z, double step, const Eigen::VectorXd& inv_metric,
              const LogDensity& target) {
  z.p += 0.5 * step * z.grad;
  z.q += step * inv_metric.cwiseProduct(z.p);
  if (!evaluate(z, target)) return false;
  z.p += 0.5 * step * z.grad;
  return true;
}

TransitionStats nuts_draw(PhasePoint& state, const LogDensity& target, double step,
                          const Eigen::VectorXd& inv_metric, int max_tree_depth, Rng& rng,
                          double max_delta_energy) {
  sample_momentum(state, inv_metric, rng);
  const double h0 = hamiltonian(state, inv_metric);
  const auto n = state.q.size();

  PhasePoint z_fwd = state;
  PhasePoint z_bck = state;
  PhasePoint z_sample = state;
  PhasePoint z_propose = state;

  Eigen::VectorXd p_fwd_fwd = state.p, p_fwd_bck = state.p;
  Eigen::VectorXd p_bck_fwd = state.p, p_bck_bck = state.p;
  Eigen::VectorXd p_sharp_fwd_fwd = inv_metric.cwiseProduct(state.p);
  Eigen::VectorXd p_sharp_fwd_bck = p_sharp_fwd_fwd;
  Eigen::VectorXd p_sharp_bck_fwd = p_sharp_fwd_fwd;
  Eigen::VectorXd p_sharp_bck_bck = p_sharp_fwd_fwd;
  Eigen::VectorXd rho = state.p;
  double log_sum_weight = 0.0;

  TreeBuilder builder(target, inv_metric, step, h0, max_delta_energy, rng);
  TransitionStats stats;
  int depth = 0;
  while (depth < max_tree_depth) {
    Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(n);
    bool valid_subtree = false;
    double log_sum_weight_subtree = kNegInf;

    if (rng.uniform() > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      valid_subtree = builder.build(depth, z_fwd, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd,
                                    rho_fwd, p_fwd_bck, p_fwd_fwd, 1.0, log_sum_weight_subtree);
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      valid_subtree = builder.build(depth, z_bck, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck,
                                    rho_bck, p_bck_fwd, p_bck_bck, -1.0, log_sum_weight_subtree);
    }
    if (!valid_subtree) break;
    ++depth;

    if (log_sum_weight_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (rng.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    rho = rho_bck + rho_fwd;
    bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
    persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
    if (!persist) break;
  }

  state = z_sample;
  stats.tree_depth = depth;
  stats.max_depth_reached = depth >= max_tree_depth;
  stats.n_leapfrog = builder.n_leapfrog;
  stats.divergent = builder.divergent;
  stats.accept_stat =
      builder.n_leapfrog > 0 ? builder.sum_metro_prob / static_cast<double>(builder.n_leapfrog) : 0.0;
  stats.energy = hamiltonian(state, inv_metric);
  return stats;
}

DualAveraging::DualAveraging(double target_accept, double gamma, double t0, double kappa)
    : delta_(target_accept), gamma_(gamma), t0_(t0), kappa_(kappa) {}

void DualAveraging::restart(double initial_step) {
  mu_ = std::log(10.0 * initial_step);
  s_bar_ = 0.0;
  x_bar_ = 0.0;
  counter_ = 0.0;
}

double DualAveraging::update(double accept_stat) {
  counter_ += 1.0;
  accept_stat = std::min(1.0, accept_stat);
  const double eta = 1.0 / (counter_ + t0_);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
  const double x_eta = std::pow(counter_, -kappa_);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

double DualAveraging::final_step() const { return std::exp(x_bar_); }

WindowedAdaptation::WindowedAdaptation(int n_warmup, int init_buffer, int term_buffer,
                                       int base_window)
    : n_warmup_(n_warmup), init_buffer_(init_buffer),
      term_buffer_(term_buffer < 0 ? std::max(50, n_warmup / 5) : term_buffer),
      base_window_(base_window) {
  if (n_warmup_ < 20) {
    enabled_ = false;
    return;
  }
  if (init_buffer_ + base_window_ + term_buffer_ > n_warmup_) {
    init_buffer_ = static_cast<int>(0.15 * n_warmup_);
    term_buffer_ = static_cast<int>(0.1 * n_warmup_);
    base_window_ = n_warmup_ - (init_buffer_ + term_buffer_);
  }
  window_size_ = base_window_;
  window_end_ = init_buffer_ + window_size_ - 1;
}

bool WindowedAdaptation::in_window() const {
  return counter_ >= init_buffer_ && counter_ < n_warmup_ - term_buffer_ && counter_ != n_warmup_;
}

bool WindowedAdaptation::window_end() const {
  return counter_ == window_end_ && counter_ != n_warmup_;
}

void WindowedAdaptation::next_window() {
  if (window_end_ == n_warmup_ - term_buffer_ - 1) return;
  window_size_ *= 2;
  window_end_ = counter_ + window_size_;
  if (window_end_ != n_warmup_ - term_buffer_ - 1) {
    const int next_boundary = window_end_ + 2 * window_size_;
    if (next_boundary >= n_warmup_ - term_buffer_) window_end_ = n_warmup_ - term_buffer_ - 1;
  }
}

bool WindowedAdaptation::learn(const Eigen::VectorXd& q, Eigen::VectorXd& inv_metric) {
  if (!enabled_) return false;
  if (in_window()) {
    if (n_ == 0) {
      mean_ = Eigen::VectorXd::Zero(q.size());
      m2_ = Eigen::VectorXd::Zero(q.size());
    }
    ++n_;
    const Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(q - mean_);
  }
  if (window_end()) {
    next_window();
    if (n_ > 1) {
      const double n = static_cast<double>(n_);
      const Eigen::VectorXd var = m2_ / (n - 1.0);
      // Shrink toward a small constant for short windows.
      inv_metric = (n / (n + 5.0)) * var +
                   5e-3 * (5.0 / (n + 5.0)) * Eigen::VectorXd::Ones(var.size());
    }
    n_ = 0;
    ++counter_;
    return true;
  }
  ++counter_;
  return false;
}

double find_initial_step(PhasePoint z, const LogDensity& target, const Eigen::VectorXd& inv_metric,
                         double step, Rng& rng) {
  const PhasePoint start = z;
  int direction = 0;
  for (int iter = 0; iter < 100; ++iter) {
    z = start;
    sample_momentum(z, inv_metric, rng);
    const double h0 = hamiltonian(z, inv_metric);
    const bool ok = leapfrog(z, step, inv_metric, target);
    double h = ok ? hamiltonian(z, inv_metric) : std::numeric_limits<double>::infinity();
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    const double delta_h = h0 - h;
    const int want = delta_h > std::log(0.8) ? 1 : -1;
    if (direction == 0) direction = want;
    if (direction == 1 && !(delta_h > std::log(0.8))) break;
    if (direction == -1 && !(delta_h < std::log(0.8))) break;
    step = direction == 1 ? 2.0 * step : 0.5 * step;
    if (step > 1e7) throw NumericError("step size search diverged; the posterior may be improper");
    if (step == 0.0) throw NumericError("step size search collapsed to zero");
  }
  return step;
}

std::size_t Chains::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  return static_cast<std::size_t>(-1);
}

std::vector<std::vector<double>> Chains::param(std::size_t index) const {
  if (index >= dim()) throw InvalidArgument("parameter index out of range");
  std::vector<std::vector<double>> out;
  for (const auto& d : draws) {
    const Eigen::VectorXd col = d.col(static_cast<Eigen::Index>(index));
    out.emplace_back(col.data(), col.data() + col.size());
  }
  return out;
}

std::size_t Chains::divergences() const {
  std::size_t total = 0;
  for (const auto& s : stats) {
    for (auto d : s.divergent) total += d;
  }
  return total;
}

double Chains::divergence_rate() const {
  const double total = static_cast<double>(n_chains() * n_draws());
  return total > 0 ? static_cast<double>(divergences()) / total : 0.0;
}

double Chains::mean_accept_stat() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : stats) {
    for (double a : s.accept_stat) sum += a;
    count += s.accept_stat.size();
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

namespace {

struct ChainOutput {
  Eigen::MatrixXd draws;
  Eigen::MatrixXd unconstrained;
  ChainStats stats;
};

ChainOutput run_one_chain(const LogDensity& target, const SamplerConfig& cfg, std::size_t chain) {
  ChainOutput out;
  Rng rng = Rng::stream(cfg.seed, chain);
  out.stats.seed = cfg.seed;
  const auto dim = static_cast<Eigen::Index>(target.dim());

  PhasePoint z = initial_point(target, cfg.init_radius, rng);
  Eigen::VectorXd inv_metric = Eigen::VectorXd::Ones(dim);
  double step = find_initial_step(z, target, inv_metric, 1.0, rng);
  DualAveraging dual(cfg.target_accept);
  dual.restart(step);
  WindowedAdaptation windows(cfg.n_warmup);

  for (int it = 0; it < cfg.n_warmup; ++it) {
    const TransitionStats s = nuts_draw(z, target, step, inv_metric, cfg.max_tree_depth, rng,
                                        cfg.max_delta_energy);
    if (s.divergent) ++out.stats.warmup_divergences;
    step = dual.update(s.accept_stat);
    if (windows.learn(z.q, inv_metric)) {
      step = find_initial_step(z, target, inv_metric, step, rng);
      dual.restart(step);
    }
  }
  if (cfg.n_warmup > 0) {
    if (out.stats.warmup_divergences == cfg.n_warmup) {
      throw NumericError("chain " + std::to_string(chain + 1) +
                         ": every warmup transition diverged; check the model or initial values");
    }
    step = dual.final_step();
  }
  out.stats.step_size = step;
  out.stats.inv_metric = inv_metric;

  const std::size_t n = static_cast<std::size_t>(cfg.n_samples);
  out.draws.resize(static_cast<Eigen::Index>(n), dim);
  out.unconstrained.resize(static_cast<Eigen::Index>(n), dim);
  out.stats.divergent.reserve(n);
  for (std::size_t it = 0; it < n; ++it) {
    const TransitionStats s = nuts_draw(z, target, step, inv_metric, cfg.max_tree_depth, rng,
                                        cfg.max_delta_energy);
    const auto row = static_cast<Eigen::Index>(it);
    out.unconstrained.row(row) = z.q.transpose();
    out.draws.row(row) = target.constrain(z.q).transpose();
    out.stats.divergent.push_back(s.divergent ? 1 : 0);
    out.stats.tree_depth.push_back(s.tree_depth);
    out.stats.n_leapfrog.push_back(s.n_leapfrog);
    out.stats.accept_stat.push_back(s.accept_stat);
    out.stats.energy.push_back(s.energy);
  }
  return out;
}

}  // namespace

Chains run_chains(const LogDensity& target, const SamplerConfig& cfg) {
  cfg.validate();
  if (target.dim() == 0) throw InvalidArgument("target has zero dimension");
  const auto n_chains = static_cast<std::size_t>(cfg.n_chains);
  std::vector<ChainOutput> outputs(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);

  auto work = [&](std::size_t c) {
    try {
      outputs[c] = run_one_chain(target, cfg, c);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (cfg.parallel && n_chains > 1) {
    std::vector<std::jthread> threads;
    for (std::size_t c = 0; c < n_chains; ++c) threads.emplace_back(work, c);
  } else {
    for (std::size_t c = 0; c < n_chains; ++c) work(c);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  Chains chains;
  chains.names = target.param_names();
  for (auto& o : outputs) {
    chains.draws.push_back(std::move(o.draws));
    chains.unconstrained.push_back(std::move(o.unconstrained));
    chains.stats.push_back(std::move(o.stats));
  }
  return chains;
}

}  // namespace phbm
