#include "platehbm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "platehbm/distributions.hpp"
#include "platehbm/error.hpp"

namespace phbm {

namespace {

void check_shape(const ChainDraws& chains, std::size_t min_chains, std::size_t min_draws) {
  if (chains.size() < min_chains) {
    throw InvalidArgument("diagnostic needs at least " + std::to_string(min_chains) + " chains");
  }
  const std::size_t n = chains.front().size();
  if (n < min_draws) {
    throw InvalidArgument("diagnostic needs at least " + std::to_string(min_draws) +
                          " draws per chain");
  }
  for (const auto& c : chains) {
    if (c.size() != n) throw InvalidArgument("chains must have equal lengths");
    for (double v : c) {
      if (!std::isfinite(v)) throw InvalidArgument("diagnostic input must be finite");
    }
  }
}

ChainDraws split_chains(const ChainDraws& chains) {
  ChainDraws out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

bool all_constant(const ChainDraws& chains) {
  const double first = chains.front().front();
  for (const auto& c : chains) {
    for (double v : c) {
      if (v != first) return false;
    }
  }
  return true;
}

// R̂ on already split chains; `degenerate` set when W vanishes.
double rhat_core(const ChainDraws& chains, bool& degenerate) {
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean_of(c));
    vars.push_back(var_of(c));
  }
  const double B = n * var_of(means);
  double W = mean_of(vars);
  if (!(W > 0.0)) {
    degenerate = true;
    W = std::numeric_limits<double>::min();
  }
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

// Autocovariance of one chain at `lag`, biased (divide by n).
double autocov(const std::vector<double>& c, double mean, std::size_t lag) {
  double s = 0.0;
  for (std::size_t i = 0; i + lag < c.size(); ++i) s += (c[i] - mean) * (c[i + lag] - mean);
  return s / static_cast<double>(c.size());
}

// Geyer initial monotone sequence over ≥ 1 chains.
EssResult ess_core(const ChainDraws& chains) {
  EssResult res;
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);

  std::vector<double> means(m), acov0(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(chains[c]);
    acov0[c] = autocov(chains[c], means[c], 0);
  }
  double mean_var = 0.0;
  for (std::size_t c = 0; c < m; ++c) mean_var += acov0[c] * dn / (dn - 1.0);
  mean_var /= dm;
  double var_plus = mean_var * (dn - 1.0) / dn;
  if (m > 1) var_plus += var_of(means);
  if (!(var_plus > 0.0) || !(mean_var > 0.0)) {
    res.degenerate = true;
    res.value = std::numeric_limits<double>::quiet_NaN();
    return res;
  }

  auto rho_at = [&](std::size_t lag) {
    double mean_acov = 0.0;
    for (std::size_t c = 0; c < m; ++c) mean_acov += autocov(chains[c], means[c], lag);
    mean_acov /= dm;
    return 1.0 - (mean_var - mean_acov) / var_plus;
  };

  std::vector<double> rho(n + 3, 0.0);
  double rho_even = 1.0;
  double rho_odd = rho_at(1);
  rho[0] = rho_even;
  rho[1] = rho_odd;
  std::size_t s = 1;
  while (s + 4 < n && rho_even + rho_odd > 0.0) {
    rho_even = rho_at(s + 1);
    rho_odd = rho_at(s + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho[s + 1] = rho_even;
      rho[s + 2] = rho_odd;
    }
    s += 2;
  }
  const std::size_t max_s = s;
  // Improved estimate for antithetic chains.
  if (rho_even > 0.0) rho[max_s + 1] = rho_even;

  // Initial monotone sequence
  for (std::size_t t = 1; t + 3 <= max_s; t += 2) {
    if (rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]) {
      rho[t + 1] = 0.5 * (rho[t - 1] + rho[t]);
      rho[t + 2] = rho[t + 1];
    }
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < max_s; ++k) sum += rho[k];
  const double total = dn * dm;
  // τ ≥ 1/log10(total), so ESS stays positive for antithetic chains.
  const double tau = std::max(-1.0 + 2.0 * sum + rho[max_s + 1], 1.0 / std::log10(total));
  res.value = std::min(total / tau, 1.5 * total);
  return res;
}

ChainDraws indicator(const ChainDraws& chains, double threshold, bool below) {
  ChainDraws out = chains;
  for (auto& c : out) {
    for (double& v : c) v = below ? (v <= threshold ? 1.0 : 0.0) : (v >= threshold ? 1.0 : 0.0);
  }
  return out;
}

std::vector<double> pooled(const ChainDraws& chains) {
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
  return all;
}

}  // namespace

ChainDraws rank_normalize(const ChainDraws& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (double v : chains[c]) all.emplace_back(v, all.size());
  }
  const std::size_t S = all.size();
  std::vector<double> ranks(S);
  std::vector<std::size_t> order(S);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return all[a].first < all[b].first; });
  for (std::size_t i = 0; i < S;) {
    std::size_t j = i;
    while (j + 1 < S && all[order[j + 1]].first == all[order[i]].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  ChainDraws out = chains;
  std::size_t idx = 0;
  const double dS = static_cast<double>(S);
  for (auto& c : out) {
    for (double& v : c) v = normal_quantile((ranks[idx++] - 0.375) / (dS + 0.25));
  }
  return out;
}

double split_rhat(const ChainDraws& chains) {
  check_shape(chains, 1, 4);
  bool degenerate = false;
  return rhat_core(split_chains(chains), degenerate);
}

RhatResult rank_normalized_rhat(const ChainDraws& chains) {
  check_shape(chains, 2, 4);
  RhatResult res;
  if (all_constant(chains)) {
    res.degenerate = true;
    return res;
  }
  const ChainDraws split = split_chains(chains);
  const double bulk = rhat_core(rank_normalize(split), res.degenerate);

  const double med = quantile(pooled(split), 0.5);
  ChainDraws folded = split;
  for (auto& c : folded) {
    for (double& v : c) v = std::abs(v - med);
  }
  const double tail = rhat_core(rank_normalize(folded), res.degenerate);
  res.value = std::max(bulk, tail);
  return res;
}

EssResult ess(const ChainDraws& chains, EssKind kind) {
  check_shape(chains, 1, 4);
  if (all_constant(chains)) return {std::numeric_limits<double>::quiet_NaN(), true};
  const ChainDraws split = split_chains(chains);
  switch (kind) {
    case EssKind::Bulk:
      return ess_core(rank_normalize(split));
    case EssKind::Basic:
      return ess_core(split);
    case EssKind::Tail: {
      const std::vector<double> all = pooled(split);
      const double q05 = quantile(all, 0.05);
      const double q95 = quantile(all, 0.95);
      const EssResult lo = ess_core(indicator(split, q05, true));
      const EssResult hi = ess_core(indicator(split, q95, false));
      if (lo.degenerate || hi.degenerate) {
        return {std::numeric_limits<double>::quiet_NaN(), true};
      }
      return {std::min(lo.value, hi.value), false};
    }
  }
  return {};
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw InvalidArgument("quantile probability outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

const ParamSummary* Summary::find(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Summary summarize(const Chains& chains, double rhat_threshold) {
  if (chains.n_chains() == 0 || chains.n_draws() == 0) {
    throw InvalidArgument("summarize needs non-empty chains");
  }
  Summary s;
  s.rhat_threshold = rhat_threshold;
  s.n_chains = chains.n_chains();
  s.n_draws = chains.n_draws();
  s.divergences = chains.divergences();
  s.divergence_rate = chains.divergence_rate();
  const bool diagnosable = chains.n_chains() >= 2 && chains.n_draws() >= 4;
  for (std::size_t p = 0; p < chains.dim(); ++p) {
    const ChainDraws draws = chains.param(p);
    const std::vector<double> all = pooled(draws);
    ParamSummary ps;
    ps.name = chains.names[p];
    ps.mean = mean_of(all);
    ps.sd = all.size() > 1 ? std::sqrt(var_of(all)) : 0.0;
    ps.q025 = quantile(all, 0.025);
    ps.q50 = quantile(all, 0.5);
    ps.q975 = quantile(all, 0.975);
    if (diagnosable) {
      const RhatResult r = rank_normalized_rhat(draws);
      ps.rhat = r.value;
      const EssResult bulk = ess(draws, EssKind::Bulk);
      const EssResult tail = ess(draws, EssKind::Tail);
      const EssResult basic = ess(draws, EssKind::Basic);
      ps.ess_bulk = bulk.value;
      ps.ess_tail = tail.value;
      ps.mcse_mean = basic.degenerate ? 0.0 : ps.sd / std::sqrt(basic.value);
      ps.degenerate = r.degenerate || bulk.degenerate;
    } else {
      ps.rhat = std::numeric_limits<double>::quiet_NaN();
    }
    if (!(ps.rhat < rhat_threshold)) s.gate_passed = false;
    if (std::isfinite(ps.rhat)) s.max_rhat = std::max(s.max_rhat, ps.rhat);
    s.params.push_back(std::move(ps));
  }
  return s;
}

std::string format_summary(const Summary& summary) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %12s %11s %11s %11s %11s %8s %9s %9s\n", "parameter",
                "mean", "sd", "2.5%", "50%", "97.5%", "rhat", "ess_bulk", "ess_tail");
  out += line;
  for (const auto& p : summary.params) {
    std::snprintf(line, sizeof line, "%-16s %12.5g %11.4g %11.4g %11.4g %11.4g %8.4f %9.0f %9.0f\n",
                  p.name.c_str(), p.mean, p.sd, p.q025, p.q50, p.q975, p.rhat, p.ess_bulk,
                  p.ess_tail);
    out += line;
  }
  std::snprintf(line, sizeof line,
                "chains=%zu draws=%zu divergences=%zu (%.3f%%) max_rhat=%.4f gate(<%.2f)=%s\n",
                summary.n_chains, summary.n_draws, summary.divergences,
                100.0 * summary.divergence_rate, summary.max_rhat, summary.rhat_threshold,
                summary.gate_passed ? "PASS" : "FAIL");
  out += line;
  return out;
}

}  // namespace phbm
