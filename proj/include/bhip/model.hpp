#pragma once

#include "bhip/data.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace bhip {

enum class Likelihood { gaussian, bernoulli_logit };
enum class PriorFamily { hier_normal_noncentered, horseshoe, spike_and_slab };

inline const char* to_string(Likelihood l) { return l == Likelihood::gaussian ? "gaussian" : "bernoulli-logit"; }
inline const char* to_string(PriorFamily f) {
  switch (f) {
    case PriorFamily::hier_normal_noncentered: return "noncentered";
    case PriorFamily::horseshoe: return "horseshoe";
    case PriorFamily::spike_and_slab: return "spikeslab";
  }
  return "?";
}

inline PriorFamily parse_prior_family(const std::string& s) {
  if (s == "noncentered" || s == "hier-normal-noncentered") return PriorFamily::hier_normal_noncentered;
  if (s == "horseshoe") return PriorFamily::horseshoe;
  if (s == "spikeslab" || s == "spike-and-slab") return PriorFamily::spike_and_slab;
  throw std::invalid_argument("unknown model family '" + s + "'");
}

inline Likelihood parse_likelihood(const std::string& s) {
  if (s == "gaussian") return Likelihood::gaussian;
  if (s == "bernoulli-logit" || s == "bernoulli") return Likelihood::bernoulli_logit;
  throw std::invalid_argument("unknown likelihood '" + s + "'");
}

struct Hyperparams {
  double mu0 = 0.0;
  double mu_sd = 5.0;
  double tau_scale = 1.0;          // half-Cauchy scale of tau (non-centered) and tau_global (horseshoe)
  double sigma_obs_scale = 1.0;    // half-Cauchy scale of sigma_obs
  double slab_sd_scale = 1.0;      // half-Cauchy scale of the slab tau (spike-and-slab)
  double spike_scale_scale = 0.1;  // half-Cauchy scale of spike_scale
};

struct ModelSpec {
  Likelihood likelihood = Likelihood::gaussian;
  PriorFamily prior_family = PriorFamily::hier_normal_noncentered;
  Hyperparams hyper;

  void validate() const {
    const auto& h = hyper;
    for (double s : {h.mu_sd, h.tau_scale, h.sigma_obs_scale, h.slab_sd_scale, h.spike_scale_scale})
      if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("ModelSpec: all scales must be positive");
    if (!std::isfinite(h.mu0)) throw std::invalid_argument("ModelSpec: mu0 must be finite");
  }
};

inline nlohmann::json to_json(const ModelSpec& m) {
  return {{"likelihood", to_string(m.likelihood)},
          {"prior_family", to_string(m.prior_family)},
          {"hyperparams",
           {{"mu0", m.hyper.mu0},
            {"mu_sd", m.hyper.mu_sd},
            {"tau_scale", m.hyper.tau_scale},
            {"sigma_obs_scale", m.hyper.sigma_obs_scale},
            {"slab_sd_scale", m.hyper.slab_sd_scale},
            {"spike_scale_scale", m.hyper.spike_scale_scale}}}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec m;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "likelihood") m.likelihood = parse_likelihood(it.value().get<std::string>());
    else if (it.key() == "prior_family") m.prior_family = parse_prior_family(it.value().get<std::string>());
    else if (it.key() == "hyperparams") {
      for (auto h = it.value().begin(); h != it.value().end(); ++h) {
        const double v = h.value().get<double>();
        if (h.key() == "mu0") m.hyper.mu0 = v;
        else if (h.key() == "mu_sd") m.hyper.mu_sd = v;
        else if (h.key() == "tau_scale") m.hyper.tau_scale = v;
        else if (h.key() == "sigma_obs_scale") m.hyper.sigma_obs_scale = v;
        else if (h.key() == "slab_sd_scale") m.hyper.slab_sd_scale = v;
        else if (h.key() == "spike_scale_scale") m.hyper.spike_scale_scale = v;
        else throw std::invalid_argument("unknown hyperparameter '" + h.key() + "'");
      }
    } else {
      throw std::invalid_argument("unknown model key '" + it.key() + "'");
    }
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Parameter layout

enum class Transform { identity, log, logit };

struct ParamBlock {
  std::string name;
  std::size_t rows = 0;  // 0: vector or scalar
  std::size_t cols = 1;
  std::size_t offset = 0;
  Transform transform = Transform::identity;

  std::size_t size() const { return (rows == 0 ? 1 : rows) * cols; }
};

/// Named blocks of the unconstrained parameter vector, in storage order.
class ParamLayout {
 public:
  /// rows = 0 with cols = 1 is a scalar, rows = 0 with cols = D is a vector,
  /// rows = E with cols = D is an [e,d] matrix stored e-major.
  std::size_t add(std::string name, std::size_t rows, std::size_t cols, Transform t) {
    blocks_.push_back({std::move(name), rows, cols, dim_, t});
    dim_ += blocks_.back().size();
    return blocks_.size() - 1;
  }

  std::size_t dimension() const { return dim_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  const ParamBlock& block(const std::string& name) const {
    for (const auto& b : blocks_)
      if (b.name == name) return b;
    throw std::invalid_argument("ParamLayout: no block '" + name + "'");
  }
  bool has_block(const std::string& name) const {
    for (const auto& b : blocks_)
      if (b.name == name) return true;
    return false;
  }

  /// Element names, e.g. "mu[2]", "beta_decentered[1,3]", "sigma_obs".
  static std::vector<std::string> element_names(const ParamBlock& b) {
    std::vector<std::string> out;
    if (b.rows == 0 && b.cols == 1 && !b.name.empty() && b.name.back() != ']') {
      out.push_back(b.name);
    } else if (b.rows == 0) {
      for (std::size_t d = 0; d < b.cols; ++d) out.push_back(b.name + "[" + std::to_string(d) + "]");
    } else {
      for (std::size_t e = 0; e < b.rows; ++e)
        for (std::size_t d = 0; d < b.cols; ++d)
          out.push_back(b.name + "[" + std::to_string(e) + "," + std::to_string(d) + "]");
    }
    return out;
  }

  std::vector<std::string> element_names() const {
    std::vector<std::string> out;
    for (const auto& b : blocks_)
      for (auto& n : element_names(b)) out.push_back(std::move(n));
    return out;
  }

  /// Splits v into per-block unconstrained values.
  std::vector<std::vector<double>> unpack(const Eigen::VectorXd& v) const {
    if (static_cast<std::size_t>(v.size()) != dim_) throw std::invalid_argument("ParamLayout: wrong vector size");
    std::vector<std::vector<double>> out;
    for (const auto& b : blocks_) out.emplace_back(v.data() + b.offset, v.data() + b.offset + b.size());
    return out;
  }

  Eigen::VectorXd pack(const std::vector<std::vector<double>>& parts) const {
    if (parts.size() != blocks_.size()) throw std::invalid_argument("ParamLayout: wrong number of blocks");
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (parts[i].size() != blocks_[i].size()) throw std::invalid_argument("ParamLayout: wrong block size");
      for (std::size_t k = 0; k < parts[i].size(); ++k) v(static_cast<Eigen::Index>(blocks_[i].offset + k)) = parts[i][k];
    }
    return v;
  }

  static double constrain(Transform t, double u) {
    switch (t) {
      case Transform::identity: return u;
      case Transform::log: return std::exp(u);
      case Transform::logit: return 1.0 / (1.0 + std::exp(-u));
    }
    return u;
  }
  static double unconstrain(Transform t, double x) {
    switch (t) {
      case Transform::identity: return x;
      case Transform::log: return std::log(x);
      case Transform::logit: return std::log(x) - std::log1p(-x);
    }
    return x;
  }

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Density interface

/// Binary inclusion indicators (spike-and-slab); empty for other models.
using DiscreteState = std::vector<std::uint8_t>;

/// Differentiable log density over an unconstrained real vector. Instances
/// are immutable; any chain-local discrete state is passed in explicitly.
class PosteriorDensity {
 public:
  virtual ~PosteriorDensity() = default;

  virtual std::size_t dimension() const = 0;
  virtual double log_density_gradient(const Eigen::VectorXd& v, const DiscreteState& z,
                                      Eigen::VectorXd& grad) const = 0;
  virtual double log_density(const Eigen::VectorXd& v, const DiscreteState& z) const {
    Eigen::VectorXd g;
    return log_density_gradient(v, z, g);
  }
  double log_density(const Eigen::VectorXd& v) const { return log_density(v, DiscreteState{}); }

  virtual std::size_t n_discrete() const { return 0; }
  /// P(z_d = 1 | everything else).
  virtual double gibbs_z_conditional(const Eigen::VectorXd&, const DiscreteState&, std::size_t) const {
    throw std::logic_error("density has no discrete state");
  }

  /// Names of the recorded quantities (constrained parameters and derived
  /// values) and their values at v.
  virtual const std::vector<std::string>& output_names() const = 0;
  virtual void outputs(const Eigen::VectorXd& v, const DiscreteState& z, double* out) const = 0;
};

/// Density from a callable; records the raw coordinates as theta[i].
class FunctionDensity final : public PosteriorDensity {
 public:
  using Fn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

  FunctionDensity(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {
    for (std::size_t i = 0; i < dim; ++i) names_.push_back("theta[" + std::to_string(i) + "]");
  }
  std::size_t dimension() const override { return dim_; }
  double log_density_gradient(const Eigen::VectorXd& v, const DiscreteState&, Eigen::VectorXd& g) const override {
    g.resize(static_cast<Eigen::Index>(dim_));
    return fn_(v, g);
  }
  const std::vector<std::string>& output_names() const override { return names_; }
  void outputs(const Eigen::VectorXd& v, const DiscreteState&, double* out) const override {
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v(i);
  }

 private:
  std::size_t dim_;
  Fn fn_;
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// Scalar log densities

namespace lpdf {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

inline double normal(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -kHalfLog2Pi - std::log(sd) - 0.5 * z * z;
}

inline double half_cauchy(double x, double scale) {
  const double r = x / scale;
  return std::log(2.0 / std::numbers::pi) - std::log(scale) - std::log1p(r * r);
}

/// log(1 + exp(x)) without overflow.
inline double log1p_exp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double inv_logit(double u) { return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)); }

/// Half-Cauchy prior on x = exp(u), including the log-Jacobian u.
/// Returns the value and adds d/du to *grad.
inline double half_cauchy_log_scale(double u, double scale, double* grad) {
  const double x = std::exp(u);
  const double r2 = (x / scale) * (x / scale);
  if (grad) *grad += 1.0 - 2.0 * r2 / (1.0 + r2);
  return half_cauchy(x, scale) + u;
}

/// U(0,1) prior on p = inv_logit(u), including the log-Jacobian.
inline double uniform_logit_scale(double u, double* grad) {
  if (grad) *grad += 1.0 - 2.0 * inv_logit(u);
  return -log1p_exp(-u) - log1p_exp(u);
}

}  // namespace lpdf

// ---------------------------------------------------------------------------
// Likelihood over environments

/// Per-environment linear-predictor likelihood. Gaussian blocks are reduced
/// to sufficient statistics (X'X, X'y, y'y, n), so evaluation cost does not
/// depend on the number of rows.
class EnvLikelihood {
 public:
  EnvLikelihood(const EnvironmentDataset& ds, Likelihood kind) : kind_(kind) {
    ds.validate();
    d_ = ds.n_predictors();
    if (kind == Likelihood::gaussian) {
      if (ds.target_kind != TargetKind::continuous)
        throw std::invalid_argument("gaussian likelihood requires a continuous target");
    } else {
      if (ds.target_kind != TargetKind::binary)
        throw std::invalid_argument("bernoulli-logit likelihood requires a binary target");
    }
    for (const auto& b : ds.environments) {
      Env e;
      e.n = static_cast<double>(b.y.size());
      if (kind == Likelihood::gaussian) {
        e.xtx = b.X.transpose() * b.X;
        e.xty = b.X.transpose() * b.y;
        e.yty = b.y.squaredNorm();
      } else {
        e.X = b.X;
        e.y = b.y;
      }
      envs_.push_back(std::move(e));
    }
  }

  Likelihood kind() const { return kind_; }
  std::size_t n_envs() const { return envs_.size(); }
  std::size_t n_predictors() const { return d_; }
  bool has_sigma() const { return kind_ == Likelihood::gaussian; }

  /// Log likelihood of environment e with coefficients beta (length D).
  double env_log_lik(std::size_t e, const Eigen::VectorXd& beta, double log_sigma,
                     Eigen::VectorXd* grad_beta = nullptr, double* grad_log_sigma = nullptr) const {
    const Env& env = envs_[e];
    if (kind_ == Likelihood::gaussian) {
      const Eigen::VectorXd xtxb = env.xtx * beta;
      const double rss = env.yty - 2.0 * beta.dot(env.xty) + beta.dot(xtxb);
      const double inv_var = std::exp(-2.0 * log_sigma);
      if (grad_beta) *grad_beta = (env.xty - xtxb) * inv_var;
      if (grad_log_sigma) *grad_log_sigma += -env.n + rss * inv_var;
      return -env.n * (log_sigma + lpdf::kHalfLog2Pi) - 0.5 * rss * inv_var;
    }
    const Eigen::VectorXd eta = env.X * beta;
    double ll = 0.0;
    Eigen::VectorXd resid(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      ll += env.y(i) * eta(i) - lpdf::log1p_exp(eta(i));
      resid(i) = env.y(i) - lpdf::inv_logit(eta(i));
    }
    if (grad_beta) *grad_beta = env.X.transpose() * resid;
    return ll;
  }

  /// Sum over environments; beta is E x D with row e the coefficients of e.
  double log_lik(const Eigen::MatrixXd& beta, double log_sigma, Eigen::MatrixXd* grad_beta,
                 double* grad_log_sigma) const {
    double ll = 0.0;
    if (grad_beta) grad_beta->resize(beta.rows(), beta.cols());
    Eigen::VectorXd g;
    for (std::size_t e = 0; e < envs_.size(); ++e) {
      const auto ei = static_cast<Eigen::Index>(e);
      ll += env_log_lik(e, beta.row(ei).transpose(), log_sigma, grad_beta ? &g : nullptr, grad_log_sigma);
      if (grad_beta) grad_beta->row(ei) = g.transpose();
    }
    return ll;
  }

 private:
  struct Env {
    double n = 0.0;
    Eigen::MatrixXd xtx;
    Eigen::VectorXd xty;
    double yty = 0.0;
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
  };
  Likelihood kind_;
  std::size_t d_ = 0;
  std::vector<Env> envs_;
};

// ---------------------------------------------------------------------------
// BHIP model families

/// Common base for the three BHIP model families.
class BhipDensity : public PosteriorDensity {
 public:
  BhipDensity(const ModelSpec& spec, const EnvironmentDataset& ds) : spec_(spec), lik_(ds, spec.likelihood) {
    spec.validate();
    if (ds.n_predictors() == 0) throw std::invalid_argument("dataset has no predictors");
    d_ = ds.n_predictors();
    e_ = ds.n_environments();
    predictor_names_ = ds.predictor_names;
  }

  const ModelSpec& spec() const { return spec_; }
  PriorFamily family() const { return spec_.prior_family; }
  std::size_t n_predictors() const { return d_; }
  std::size_t n_envs() const { return e_; }
  const std::vector<std::string>& predictor_names() const { return predictor_names_; }
  const ParamLayout& layout() const { return layout_; }
  const EnvLikelihood& likelihood() const { return lik_; }

  std::size_t dimension() const override { return layout_.dimension(); }
  const std::vector<std::string>& output_names() const override { return output_names_; }

 protected:
  // Helpers over the unconstrained vector.
  double at(const Eigen::VectorXd& v, std::size_t block, std::size_t k) const {
    return v(static_cast<Eigen::Index>(layout_.blocks()[block].offset + k));
  }
  double& gat(Eigen::VectorXd& g, std::size_t block, std::size_t k) const {
    return g(static_cast<Eigen::Index>(layout_.blocks()[block].offset + k));
  }
  std::size_t ed(std::size_t e, std::size_t d) const { return e * d_ + d; }

  void finish_layout(const std::vector<std::pair<std::string, std::size_t>>& derived) {
    for (const auto& b : layout_.blocks()) {
      if (b.name.find("_raw") != std::string::npos) continue;
      for (auto& n : ParamLayout::element_names(b)) output_names_.push_back(std::move(n));
    }
    for (const auto& [name, rows] : derived) {
      ParamBlock b{name, rows, d_, 0, Transform::identity};
      for (auto& n : ParamLayout::element_names(b)) output_names_.push_back(std::move(n));
    }
  }

  ModelSpec spec_;
  EnvLikelihood lik_;
  std::size_t d_ = 0, e_ = 0;
  std::vector<std::string> predictor_names_;
  ParamLayout layout_;
  std::vector<std::string> output_names_;
};

/// mu_d ~ N(mu0, mu_sd^2), tau_d ~ HalfCauchy(tau_scale),
/// eta_{e,d} ~ N(0,1), beta^e = mu + tau .* eta^e, sigma_obs ~ HalfCauchy.
class NonCenteredDensity final : public BhipDensity {
 public:
  enum Block : std::size_t { kMu = 0, kTau = 1, kEta = 2, kSigma = 3 };

  NonCenteredDensity(const ModelSpec& spec, const EnvironmentDataset& ds) : BhipDensity(spec, ds) {
    layout_.add("mu", 0, d_, Transform::identity);
    layout_.add("tau", 0, d_, Transform::log);
    layout_.add("beta_decentered", e_, d_, Transform::identity);
    if (lik_.has_sigma()) layout_.add("sigma_obs", 0, 1, Transform::log);
    finish_layout({{"beta", e_}});
  }

  Eigen::MatrixXd beta(const Eigen::VectorXd& v) const {
    Eigen::MatrixXd b(static_cast<Eigen::Index>(e_), static_cast<Eigen::Index>(d_));
    for (std::size_t e = 0; e < e_; ++e)
      for (std::size_t d = 0; d < d_; ++d)
        b(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(d)) =
            at(v, kMu, d) + std::exp(at(v, kTau, d)) * at(v, kEta, ed(e, d));
    return b;
  }

  double log_density_gradient(const Eigen::VectorXd& v, const DiscreteState&, Eigen::VectorXd& g) const override {
    const auto& h = spec_.hyper;
    g.setZero(v.size());
    double lp = 0.0;
    for (std::size_t d = 0; d < d_; ++d) {
      const double mu = at(v, kMu, d);
      lp += lpdf::normal(mu, h.mu0, h.mu_sd);
      gat(g, kMu, d) -= (mu - h.mu0) / (h.mu_sd * h.mu_sd);
      lp += lpdf::half_cauchy_log_scale(at(v, kTau, d), h.tau_scale, &gat(g, kTau, d));
    }
    for (std::size_t k = 0; k < e_ * d_; ++k) {
      const double eta = at(v, kEta, k);
      lp += lpdf::normal(eta, 0.0, 1.0);
      gat(g, kEta, k) -= eta;
    }
    double log_sigma = 0.0, g_sigma = 0.0;
    if (lik_.has_sigma()) {
      log_sigma = at(v, kSigma, 0);
      lp += lpdf::half_cauchy_log_scale(log_sigma, h.sigma_obs_scale, &g_sigma);
    }
    Eigen::MatrixXd gb;
    lp += lik_.log_lik(beta(v), log_sigma, &gb, lik_.has_sigma() ? &g_sigma : nullptr);
    for (std::size_t d = 0; d < d_; ++d) {
      const double tau = std::exp(at(v, kTau, d));
      double acc_tau = 0.0;
      for (std::size_t e = 0; e < e_; ++e) {
        const double gbe = gb(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(d));
        gat(g, kMu, d) += gbe;
        gat(g, kEta, ed(e, d)) += tau * gbe;
        acc_tau += at(v, kEta, ed(e, d)) * gbe;
      }
      gat(g, kTau, d) += tau * acc_tau;
    }
    if (lik_.has_sigma()) gat(g, kSigma, 0) += g_sigma;
    return lp;
  }

  void outputs(const Eigen::VectorXd& v, const DiscreteState&, double* out) const override {
    std::size_t k = 0;
    for (std::size_t d = 0; d < d_; ++d) out[k++] = at(v, kMu, d);
    for (std::size_t d = 0; d < d_; ++d) out[k++] = std::exp(at(v, kTau, d));
    for (std::size_t i = 0; i < e_ * d_; ++i) out[k++] = at(v, kEta, i);
    if (lik_.has_sigma()) out[k++] = std::exp(at(v, kSigma, 0));
    const auto b = beta(v);
    for (std::size_t e = 0; e < e_; ++e)
      for (std::size_t d = 0; d < d_; ++d) out[k++] = b(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(d));
  }
};

/// beta_{e,d} ~ N(0, lambda_d^2 tau_global^2), lambda_d ~ HalfCauchy(1),
/// tau_global ~ HalfCauchy(tau_scale). beta is sampled directly.
class HorseshoeDensity final : public BhipDensity {
 public:
  enum Block : std::size_t { kBeta = 0, kLambda = 1, kTauGlobal = 2, kSigma = 3 };

  HorseshoeDensity(const ModelSpec& spec, const EnvironmentDataset& ds) : BhipDensity(spec, ds) {
    layout_.add("beta", e_, d_, Transform::identity);
    layout_.add("lambda_local", 0, d_, Transform::log);
    layout_.add("tau_global", 0, 1, Transform::log);
    if (lik_.has_sigma()) layout_.add("sigma_obs", 0, 1, Transform::log);
    finish_layout({});
  }

  double log_density_gradient(const Eigen::VectorXd& v, const DiscreteState&, Eigen::VectorXd& g) const override {
    const auto& h = spec_.hyper;
    g.setZero(v.size());
    double lp = 0.0;
    const double log_tau = at(v, kTauGlobal, 0);
    lp += lpdf::half_cauchy_log_scale(log_tau, h.tau_scale, &gat(g, kTauGlobal, 0));
    Eigen::MatrixXd beta(static_cast<Eigen::Index>(e_), static_cast<Eigen::Index>(d_));
    for (std::size_t d = 0; d < d_; ++d) {
      const double log_lambda = at(v, kLambda, d);
      lp += lpdf::half_cauchy_log_scale(log_lambda, 1.0, &gat(g, kLambda, d));
      const double log_scale = log_lambda + log_tau;
      const double inv_var = std::exp(-2.0 * log_scale);
      for (std::size_t e = 0; e < e_; ++e) {
        const double b = at(v, kBeta, ed(e, d));
        beta(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(d)) = b;
        lp += -lpdf::kHalfLog2Pi - log_scale - 0.5 * b * b * inv_var;
        gat(g, kBeta, ed(e, d)) -= b * inv_var;
        const double ds = -1.0 + b * b * inv_var;
        gat(g, kLambda, d) += ds;
        gat(g, kTauGlobal, 0) += ds;
      }
    }
    double log_sigma = 0.0, g_sigma = 0.0;
    if (lik_.has_sigma()) {
      log_sigma = at(v, kSigma, 0);
      lp += lpdf::half_cauchy_log_scale(log_sigma, h.sigma_obs_scale, &g_sigma);
    }
    Eigen::MatrixXd gb;
    lp += lik_.log_lik(beta, log_sigma, &gb, lik_.has_sigma() ? &g_sigma : nullptr);
    for (std::size_t e = 0; e < e_; ++e)
      for (std::size_t d = 0; d < d_; ++d)
        gat(g, kBeta, ed(e, d)) += gb(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(d));
    if (lik_.has_sigma()) gat(g, kSigma, 0) += g_sigma;
    return lp;
  }

  void outputs(const Eigen::VectorXd& v, const DiscreteState&, double* out) const override {
    std::size_t k = 0;
    for (std::size_t i = 0; i < e_ * d_; ++i) out[k++] = at(v, kBeta, i);
    for (std::size_t d = 0; d < d_; ++d) out[k++] = std::exp(at(v, kLambda, d));
    out[k++] = std::exp(at(v, kTauGlobal, 0));
    if (lik_.has_sigma()) out[k++] = std::exp(at(v, kSigma, 0));
  }
};

/// Spike-and-slab with per-predictor inclusion probability.
///
///   p_slab_d ~ U(0,1),  z_d ~ Bernoulli(p_slab_d)
///   slabBeta_{e,d} = mu_d + tau_d * a_{e,d},      a ~ N(0,1)
///   spikeBeta_{e,d} = spike_scale_d * b_{e,d},    b ~ N(0,1)
///   beta_{e,d} = z_d ? slabBeta_{e,d} : spikeBeta_{e,d}
///
/// Both components are stored non-centered (blocks *_raw); the recorded
/// outputs are slabBeta and spikeBeta. z is held outside the continuous
/// vector and updated by Gibbs steps.
class SpikeSlabDensity final : public BhipDensity {
 public:
  enum Block : std::size_t { kPSlab = 0, kMu = 1, kTau = 2, kSlabRaw = 3, kSpikeRaw = 4, kSpikeScale = 5, kSigma = 6 };

  SpikeSlabDensity(const ModelSpec& spec, const EnvironmentDataset& ds) : BhipDensity(spec, ds) {
    layout_.add("p_slab", 0, d_, Transform::logit);
    layout_.add("mu", 0, d_, Transform::identity);
    layout_.add("tau", 0, d_, Transform::log);
    layout_.add("slabBeta_raw", e_, d_, Transform::identity);
    layout_.add("spikeBeta_raw", e_, d_, Transform::identity);
    layout_.add("spike_scale", 0, d_, Transform::log);
    if (lik_.has_sigma()) layout_.add("sigma_obs", 0, 1, Transform::log);
    finish_layout({{"slabBeta", e_}, {"spikeBeta", e_}});
  }

  std::size_t n_discrete() const override { return d_; }

  double slab(const Eigen::VectorXd& v, std::size_t e, std::size_t d) const {
    return at(v, kMu, d) + std::exp(at(v, kTau, d)) * at(v, kSlabRaw, ed(e, d));
  }
  double spike(const Eigen::VectorXd& v, std::size_t e, std::size_t d) const {
    return std::exp(at(v, kSpikeScale, d)) * at(v, kSpikeRaw, ed(e, d));
  }

  Eigen::MatrixXd effective_beta(const Eigen::VectorXd& v, const DiscreteState& z) const {
    check_z(z);
    Eigen::MatrixXd b(static_cast<Eigen::Index>(e_), static_cast<Eigen::Index>(d_));
    for (std::size_t e = 0; e < e_; ++e)
      for (std::size_t d = 0; d < d_; ++d)
        b(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(d)) = z[d] ? slab(v, e, d) : spike(v, e, d);
    return b;
  }

  double log_density_gradient(const Eigen::VectorXd& v, const DiscreteState& z, Eigen::VectorXd& g) const override {
    check_z(z);
    const auto& h = spec_.hyper;
    g.setZero(v.size());
    double lp = 0.0;
    for (std::size_t d = 0; d < d_; ++d) {
      const double u = at(v, kPSlab, d);
      lp += lpdf::uniform_logit_scale(u, &gat(g, kPSlab, d));
      // z_d ~ Bernoulli(p_d)
      const double p = lpdf::inv_logit(u);
      lp += z[d] ? -lpdf::log1p_exp(-u) : -lpdf::log1p_exp(u);
      gat(g, kPSlab, d) += (z[d] ? 1.0 : 0.0) - p;

      const double mu = at(v, kMu, d);
      lp += lpdf::normal(mu, h.mu0, h.mu_sd);
      gat(g, kMu, d) -= (mu - h.mu0) / (h.mu_sd * h.mu_sd);
      lp += lpdf::half_cauchy_log_scale(at(v, kTau, d), h.slab_sd_scale, &gat(g, kTau, d));
      lp += lpdf::half_cauchy_log_scale(at(v, kSpikeScale, d), h.spike_scale_scale, &gat(g, kSpikeScale, d));
    }
    for (std::size_t k = 0; k < e_ * d_; ++k) {
      const double a = at(v, kSlabRaw, k), b = at(v, kSpikeRaw, k);
      lp += lpdf::normal(a, 0.0, 1.0) + lpdf::normal(b, 0.0, 1.0);
      gat(g, kSlabRaw, k) -= a;
      gat(g, kSpikeRaw, k) -= b;
    }
    double log_sigma = 0.0, g_sigma = 0.0;
    if (lik_.has_sigma()) {
      log_sigma = at(v, kSigma, 0);
      lp += lpdf::half_cauchy_log_scale(log_sigma, h.sigma_obs_scale, &g_sigma);
    }
    Eigen::MatrixXd gb;
    lp += lik_.log_lik(effective_beta(v, z), log_sigma, &gb, lik_.has_sigma() ? &g_sigma : nullptr);
    for (std::size_t d = 0; d < d_; ++d) {
      if (z[d]) {
        const double tau = std::exp(at(v, kTau, d));
        double acc = 0.0;
        for (std::size_t e = 0; e < e_; ++e) {
          const double gbe = gb(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(d));
          gat(g, kMu, d) += gbe;
          gat(g, kSlabRaw, ed(e, d)) += tau * gbe;
          acc += at(v, kSlabRaw, ed(e, d)) * gbe;
        }
        gat(g, kTau, d) += tau * acc;
      } else {
        const double s = std::exp(at(v, kSpikeScale, d));
        double acc = 0.0;
        for (std::size_t e = 0; e < e_; ++e) {
          const double gbe = gb(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(d));
          gat(g, kSpikeRaw, ed(e, d)) += s * gbe;
          acc += at(v, kSpikeRaw, ed(e, d)) * gbe;
        }
        gat(g, kSpikeScale, d) += s * acc;
      }
    }
    if (lik_.has_sigma()) gat(g, kSigma, 0) += g_sigma;
    return lp;
  }

  /// Combines log p_slab + L_slab against log(1 - p_slab) + L_spike with
  /// max subtraction. Accepts -inf for either log prior weight.
  static double inclusion_probability(double log_p, double log_1mp, double ll_slab, double ll_spike) {
    if (std::isnan(ll_slab) || std::isnan(ll_spike) || std::isinf(ll_slab) || std::isinf(ll_spike))
      throw std::runtime_error("gibbs_z_conditional: non-finite likelihood");
    const double a = log_p + ll_slab, b = log_1mp + ll_spike;
    if (a == -INFINITY && b == -INFINITY) throw std::runtime_error("gibbs_z_conditional: both weights are zero");
    const double m = std::max(a, b);
    const double wa = std::exp(a - m), wb = std::exp(b - m);
    return wa / (wa + wb);
  }

  double gibbs_z_conditional(const Eigen::VectorXd& v, const DiscreteState& z, std::size_t d) const override {
    check_z(z);
    if (d >= d_) throw std::out_of_range("gibbs_z_conditional: predictor index out of range");
    Eigen::MatrixXd beta = effective_beta(v, z);
    const double log_sigma = lik_.has_sigma() ? at(v, kSigma, 0) : 0.0;
    const auto di = static_cast<Eigen::Index>(d);
    double ll_slab = 0.0, ll_spike = 0.0;
    for (std::size_t e = 0; e < e_; ++e) {
      const auto ei = static_cast<Eigen::Index>(e);
      Eigen::VectorXd b = beta.row(ei).transpose();
      b(di) = slab(v, e, d);
      ll_slab += lik_.env_log_lik(e, b, log_sigma);
      b(di) = spike(v, e, d);
      ll_spike += lik_.env_log_lik(e, b, log_sigma);
    }
    const double u = at(v, kPSlab, d);
    return inclusion_probability(-lpdf::log1p_exp(-u), -lpdf::log1p_exp(u), ll_slab, ll_spike);
  }

  void outputs(const Eigen::VectorXd& v, const DiscreteState&, double* out) const override {
    std::size_t k = 0;
    for (std::size_t d = 0; d < d_; ++d) out[k++] = lpdf::inv_logit(at(v, kPSlab, d));
    for (std::size_t d = 0; d < d_; ++d) out[k++] = at(v, kMu, d);
    for (std::size_t d = 0; d < d_; ++d) out[k++] = std::exp(at(v, kTau, d));
    for (std::size_t d = 0; d < d_; ++d) out[k++] = std::exp(at(v, kSpikeScale, d));
    if (lik_.has_sigma()) out[k++] = std::exp(at(v, kSigma, 0));
    for (std::size_t e = 0; e < e_; ++e)
      for (std::size_t d = 0; d < d_; ++d) out[k++] = slab(v, e, d);
    for (std::size_t e = 0; e < e_; ++e)
      for (std::size_t d = 0; d < d_; ++d) out[k++] = spike(v, e, d);
  }

 private:
  void check_z(const DiscreteState& z) const {
    if (z.size() != d_) throw std::invalid_argument("spike-and-slab density needs one indicator per predictor");
  }
};

inline std::unique_ptr<NonCenteredDensity> build_hier_normal(const ModelSpec& spec, const EnvironmentDataset& ds) {
  return std::make_unique<NonCenteredDensity>(spec, ds);
}
inline std::unique_ptr<HorseshoeDensity> build_horseshoe(const ModelSpec& spec, const EnvironmentDataset& ds) {
  return std::make_unique<HorseshoeDensity>(spec, ds);
}
inline std::unique_ptr<SpikeSlabDensity> build_spike_slab(const ModelSpec& spec, const EnvironmentDataset& ds) {
  return std::make_unique<SpikeSlabDensity>(spec, ds);
}

inline std::unique_ptr<BhipDensity> build_density(const ModelSpec& spec, const EnvironmentDataset& ds) {
  switch (spec.prior_family) {
    case PriorFamily::hier_normal_noncentered: return build_hier_normal(spec, ds);
    case PriorFamily::horseshoe: return build_horseshoe(spec, ds);
    case PriorFamily::spike_and_slab: return build_spike_slab(spec, ds);
  }
  throw std::invalid_argument("unknown prior family");
}

}  // namespace bhip
