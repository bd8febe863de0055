#include "platehbm/hier_model.hpp"

#include <cmath>
#include <limits>

#include "platehbm/error.hpp"

namespace phbm {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ln N(x; m, s) with its partials. No validation: the caller owns the domain.
struct NormalTerm {
  double value;
  double d_x;
  double d_m;
  double d_s;
};

NormalTerm normal_term(double x, double m, double s) {
  const double diff = x - m;
  const double inv_s = 1.0 / s;
  const double z = diff * inv_s;
  return {-kLogSqrtTwoPi - std::log(s) - 0.5 * z * z, -z * inv_s, z * inv_s,
          z * z * inv_s - inv_s};
}

// −ln Φ(m/s): normalizer of a Normal(m, s) truncated to [0, ∞).
struct TruncationTerm {
  double value;
  double d_m;
  double d_s;
};

TruncationTerm truncation_term(double m, double s) {
  const double z = m / s;
  const double r = log_normal_cdf_grad(z);
  return {-log_normal_cdf(z), -r / s, r * m / (s * s)};
}

void add_gamma(double x, const GammaParams& p, double& lp, double& grad) {
  lp += p.shape * std::log(p.rate) - log_gamma(p.shape) + (p.shape - 1.0) * std::log(x) - p.rate * x;
  grad += (p.shape - 1.0) / x - p.rate;
}

}  // namespace

double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw DomainError("inverse_softplus requires y > 0");
  if (y > 30.0) return y + std::log(-std::expm1(-y));
  return std::log(std::expm1(y));
}

double log_sigmoid(double x) { return -softplus(-x); }

ParamLayout::ParamLayout(ModelKind kind, std::vector<int> plate_labels, std::vector<int> counts)
    : kind_(kind), labels_(std::move(plate_labels)), counts_(std::move(counts)) {
  if (labels_.size() != counts_.size() || labels_.empty()) {
    throw InvalidArgument("layout needs one observation count per plate label");
  }
  if (kind_ == ModelKind::Independent && labels_.size() != 1) {
    throw InvalidArgument("an independent model covers exactly one plate");
  }
  const std::size_t K = counts_.size();
  std::size_t next = 4 + 2 * K;
  for (int n : counts_) {
    if (n < 0) throw InvalidArgument("observation counts must be non-negative");
    amp_offset_.push_back(next);
    next += static_cast<std::size_t>(n);
  }
  dim_ = next + 1;

  auto label = [&](std::size_t j) { return std::to_string(labels_[j]); };
  params_.push_back({"mu_mu", 0, Transform::Exp, "mm"});
  params_.push_back({"sigma_mu", 1, Transform::Exp, "mm"});
  params_.push_back({"mu_sigma", 2, Transform::Exp, "mm"});
  params_.push_back({"sigma_sigma", 3, Transform::Exp, "mm"});
  for (std::size_t j = 0; j < K; ++j) {
    params_.push_back({"mu_w[" + label(j) + "]", plate_mean(j), Transform::Softplus, "mm"});
  }
  for (std::size_t j = 0; j < K; ++j) {
    params_.push_back({"sigma_w[" + label(j) + "]", plate_std(j), Transform::Exp, "mm"});
  }
  for (std::size_t j = 0; j < K; ++j) {
    for (int i = 0; i < counts_[j]; ++i) {
      params_.push_back({"w[" + std::to_string(i + 1) + "][" + label(j) + "]",
                         amplitude(j, static_cast<std::size_t>(i)), Transform::Softplus, "mm"});
    }
  }
  const std::string noise_name = kind_ == ModelKind::Independent ? "gamma[" + label(0) + "]" : "gamma";
  params_.push_back({noise_name, dim_ - 1, Transform::Exp, "microstrain"});
}

std::vector<std::string> ParamLayout::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

std::size_t ParamLayout::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.index;
  }
  return static_cast<std::size_t>(-1);
}

ParamLayout ModelSpec::layout() const {
  std::vector<int> counts;
  for (const auto& s : strains) counts.push_back(static_cast<int>(s.size()));
  return ParamLayout(kind, plate_labels, counts);
}

void ModelSpec::validate() const {
  if (plate_labels.empty()) throw InvalidArgument("model has no plates");
  if (strains.size() != plate_labels.size()) {
    throw InvalidArgument("model needs one strain vector per plate");
  }
  if (include_likelihood) {
    if (surrogates.size() != plate_labels.size()) {
      throw InvalidArgument("model needs one surrogate per plate");
    }
    for (std::size_t j = 0; j < strains.size(); ++j) {
      if (!strains[j].empty() && !surrogates[j]) {
        throw InvalidArgument("plate " + std::to_string(plate_labels[j]) + " has no surrogate");
      }
    }
  }
  for (const auto& s : strains) {
    for (double v : s) {
      if (!std::isfinite(v)) throw InvalidArgument("strain observations must be finite");
    }
  }
  hyperpriors.mu_mu.validate();
  hyperpriors.sigma_mu.validate();
  hyperpriors.mu_sigma.validate();
  hyperpriors.sigma_sigma.validate();
  hyperpriors.noise.validate();
}

Constrained transform(const Eigen::VectorXd& u, const ParamLayout& layout) {
  if (static_cast<std::size_t>(u.size()) != layout.dim()) {
    throw InvalidArgument("parameter vector does not match the layout dimension");
  }
  Constrained out;
  out.values.resize(u.size());
  for (const auto& p : layout.params()) {
    const auto i = static_cast<Eigen::Index>(p.index);
    if (p.transform == Transform::Exp) {
      out.values[i] = std::exp(u[i]);
      out.log_jacobian += u[i];
    } else {
      out.values[i] = softplus(u[i]);
      out.log_jacobian += log_sigmoid(u[i]);
    }
  }
  return out;
}

Eigen::VectorXd untransform(const Eigen::VectorXd& c, const ParamLayout& layout) {
  if (static_cast<std::size_t>(c.size()) != layout.dim()) {
    throw InvalidArgument("parameter vector does not match the layout dimension");
  }
  Eigen::VectorXd u(c.size());
  for (const auto& p : layout.params()) {
    const auto i = static_cast<Eigen::Index>(p.index);
    if (!(c[i] > 0.0)) throw DomainError("constrained value for " + p.name + " must be positive");
    u[i] = p.transform == Transform::Exp ? std::log(c[i]) : inverse_softplus(c[i]);
  }
  return u;
}

LogDensityResult log_posterior(const Eigen::VectorXd& theta, const ModelSpec& spec) {
  return log_posterior(theta, spec, spec.layout());
}

LogDensityResult log_posterior(const Eigen::VectorXd& theta, const ModelSpec& spec,
                               const ParamLayout& layout) {
  if (static_cast<std::size_t>(theta.size()) != layout.dim()) {
    throw InvalidArgument("parameter vector does not match the model layout");
  }
  if (!theta.allFinite()) throw InvalidArgument("log_posterior requires a finite parameter vector");

  LogDensityResult res;
  const auto dim = theta.size();
  const Constrained c = transform(theta, layout);
  const Eigen::VectorXd& v = c.values;
  Eigen::VectorXd gc = Eigen::VectorXd::Zero(dim);
  double lp = 0.0;

  const auto mm = static_cast<Eigen::Index>(ParamLayout::mu_mu());
  const auto sm = static_cast<Eigen::Index>(ParamLayout::sigma_mu());
  const auto ms = static_cast<Eigen::Index>(ParamLayout::mu_sigma());
  const auto ss = static_cast<Eigen::Index>(ParamLayout::sigma_sigma());
  const auto ng = static_cast<Eigen::Index>(layout.noise());
  const Hyperpriors& hp = spec.hyperpriors;

  // Higher-level parameters and noise: Gamma.
  add_gamma(v[mm], hp.mu_mu, lp, gc[mm]);
  add_gamma(v[sm], hp.sigma_mu, lp, gc[sm]);
  add_gamma(v[ms], hp.mu_sigma, lp, gc[ms]);
  add_gamma(v[ss], hp.sigma_sigma, lp, gc[ss]);
  add_gamma(v[ng], hp.noise, lp, gc[ng]);

  const double gamma = v[ng];
  for (std::size_t j = 0; j < layout.num_plates(); ++j) {
    const auto pm = static_cast<Eigen::Index>(layout.plate_mean(j));
    const auto ps = static_cast<Eigen::Index>(layout.plate_std(j));

    // μ_k ~ N(μ_μ, σ_μ) on [0, ∞)
    NormalTerm t = normal_term(v[pm], v[mm], v[sm]);
    TruncationTerm tr = truncation_term(v[mm], v[sm]);
    lp += t.value + tr.value;
    gc[pm] += t.d_x;
    gc[mm] += t.d_m + tr.d_m;
    gc[sm] += t.d_s + tr.d_s;

    // σ_k ~ N(μ_σ, σ_σ) on [0, ∞)
    t = normal_term(v[ps], v[ms], v[ss]);
    tr = truncation_term(v[ms], v[ss]);
    lp += t.value + tr.value;
    gc[ps] += t.d_x;
    gc[ms] += t.d_m + tr.d_m;
    gc[ss] += t.d_s + tr.d_s;

    const int n = layout.count(j);
    if (n == 0) continue;
    // w_ik ~ N(μ_k, σ_k) on [0, ∞)
    tr = truncation_term(v[pm], v[ps]);
    lp += n * tr.value;
    gc[pm] += n * tr.d_m;
    gc[ps] += n * tr.d_s;
    const std::vector<double>& strains = spec.strains[j];
    const GprModel* gpr = spec.include_likelihood ? spec.surrogates[j].get() : nullptr;
    for (int i = 0; i < n; ++i) {
      const auto wi = static_cast<Eigen::Index>(layout.amplitude(j, static_cast<std::size_t>(i)));
      t = normal_term(v[wi], v[pm], v[ps]);
      lp += t.value;
      gc[wi] += t.d_x;
      gc[pm] += t.d_m;
      gc[ps] += t.d_s;
      if (gpr != nullptr) {
        // ε_ik ~ N(M_k(w_ik), γ)
        const MeanAndGradient mg = gpr->mean_and_grad(v[wi]);
        t = normal_term(strains[static_cast<std::size_t>(i)], mg.mean, gamma);
        lp += t.value;
        gc[wi] += t.d_m * mg.grad;
        gc[ng] += t.d_s;
      }
    }
  }

  lp += c.log_jacobian;
  res.grad.resize(dim);
  for (const auto& p : layout.params()) {
    const auto i = static_cast<Eigen::Index>(p.index);
    if (p.transform == Transform::Exp) {
      res.grad[i] = gc[i] * v[i] + 1.0;
    } else {
      res.grad[i] = gc[i] * sigmoid(theta[i]) + sigmoid(-theta[i]);
    }
  }
  res.logp = lp;
  if (!std::isfinite(lp) || !res.grad.allFinite()) {
    res.logp = -std::numeric_limits<double>::infinity();
    res.grad.setZero();
    res.divergent = true;
  }
  return res;
}

ModelSpec build_hierarchical_spec(const Dataset& data,
                                  const std::vector<std::shared_ptr<const GprModel>>& surrogates,
                                  const Hyperpriors& hyperpriors) {
  if (surrogates.size() != data.num_plates()) {
    throw InvalidArgument("need one surrogate per plate");
  }
  ModelSpec spec;
  spec.kind = ModelKind::Hierarchical;
  spec.hyperpriors = hyperpriors;
  for (std::size_t k = 0; k < data.num_plates(); ++k) {
    spec.plate_labels.push_back(static_cast<int>(k + 1));
    spec.strains.push_back(data.plates[k].strain);
    spec.surrogates.push_back(surrogates[k]);
  }
  spec.validate();
  return spec;
}

std::vector<ModelSpec> build_independent_specs(
    const Dataset& data, const std::vector<std::shared_ptr<const GprModel>>& surrogates,
    const Hyperpriors& hyperpriors) {
  if (surrogates.size() != data.num_plates()) {
    throw InvalidArgument("need one surrogate per plate");
  }
  std::vector<ModelSpec> specs;
  for (std::size_t k = 0; k < data.num_plates(); ++k) {
    ModelSpec spec;
    spec.kind = ModelKind::Independent;
    spec.hyperpriors = hyperpriors;
    spec.plate_labels = {static_cast<int>(k + 1)};
    spec.strains = {data.plates[k].strain};
    spec.surrogates = {surrogates[k]};
    spec.validate();
    specs.push_back(std::move(spec));
  }
  return specs;
}

ModelDensity::ModelDensity(ModelSpec spec) : spec_(std::move(spec)), layout_(spec_.layout()) {
  spec_.validate();
}

double ModelDensity::log_density(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const {
  if (!q.allFinite()) {
    grad = Eigen::VectorXd::Zero(q.size());
    return -std::numeric_limits<double>::infinity();
  }
  LogDensityResult r = log_posterior(q, spec_, layout_);
  grad = std::move(r.grad);
  return r.logp;
}

Eigen::VectorXd ModelDensity::constrain(const Eigen::VectorXd& q) const {
  return transform(q, layout_).values;
}

}  // namespace phbm
