#pragma once

#include "bhip/data.hpp"
#include "bhip/model.hpp"
#include "bhip/parallel.hpp"
#include "bhip/rng.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bhip {

enum class MassMatrix { identity, diagonal };

struct SamplerConfig {
  std::size_t chains = 4;
  std::size_t warmup = 1000;
  std::size_t draws = 1000;
  double target_accept = 0.8;
  std::size_t max_tree_depth = 10;
  std::uint64_t seed = 0;
  MassMatrix mass_matrix = MassMatrix::diagonal;
  std::size_t threads = 0;  // 0: hardware concurrency
  double init_radius = 2.0;
  std::size_t max_init_tries = 100;
  double max_delta_h = 1000.0;
  double divergence_warning_fraction = 0.2;
  /// Discrete indicators stay at their initial value (all ones) for this
  /// fraction of warmup, so the slab settles on the data before the first
  /// Gibbs scan.
  double discrete_hold_fraction = 0.15;

  void validate() const {
    if (chains < 1) throw std::invalid_argument("SamplerConfig: chains must be >= 1");
    if (warmup < 1 || draws < 1) throw std::invalid_argument("SamplerConfig: warmup and draws must be >= 1");
    if (!(discrete_hold_fraction >= 0.0 && discrete_hold_fraction <= 1.0))
      throw std::invalid_argument("SamplerConfig: discrete_hold_fraction must be in [0,1]");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      throw std::invalid_argument("SamplerConfig: target_accept must be in (0,1)");
    if (max_tree_depth < 1) throw std::invalid_argument("SamplerConfig: max_tree_depth must be >= 1");
  }
};

struct ChainInfo {
  double step_size = 0.0;
  std::vector<double> inv_metric;
  std::size_t divergences = 0;
  double mean_accept_stat = 0.0;
  double mean_tree_depth = 0.0;
  std::size_t n_leapfrog = 0;
};

/// Draws stored as [chain][draw][param]. Discrete indicators, when present,
/// are stored as ordinary 0/1 columns named z[d].
struct PosteriorSamples {
  std::vector<std::string> names;
  std::size_t chains = 0;
  std::size_t draws = 0;
  std::vector<double> values;
  std::size_t n_discrete = 0;
  std::vector<ChainInfo> chain_info;
  std::size_t divergences = 0;
  bool divergence_warning = false;

  std::size_t n_params() const { return names.size(); }

  double at(std::size_t chain, std::size_t draw, std::size_t param) const {
    return values[(chain * draws + draw) * names.size() + param];
  }

  bool has(const std::string& name) const { return std::find(names.begin(), names.end(), name) != names.end(); }

  std::size_t index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::invalid_argument("no parameter named '" + name + "' in samples");
    return static_cast<std::size_t>(it - names.begin());
  }

  /// All draws of one parameter, chains concatenated in order.
  std::vector<double> column(std::size_t p) const {
    std::vector<double> out;
    out.reserve(chains * draws);
    for (std::size_t c = 0; c < chains; ++c)
      for (std::size_t i = 0; i < draws; ++i) out.push_back(at(c, i, p));
    return out;
  }
  std::vector<double> column(const std::string& name) const { return column(index_of(name)); }

  std::vector<std::vector<double>> per_chain(std::size_t p) const {
    std::vector<std::vector<double>> out(chains);
    for (std::size_t c = 0; c < chains; ++c)
      for (std::size_t i = 0; i < draws; ++i) out[c].push_back(at(c, i, p));
    return out;
  }
};

namespace detail {

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct PhaseState {
  Eigen::VectorXd q, p, grad;
  double logp = 0.0;
};

/// Welford accumulator for the diagonal metric.
class VarianceEstimator {
 public:
  explicit VarianceEstimator(Eigen::Index n) : mean_(Eigen::VectorXd::Zero(n)), m2_(Eigen::VectorXd::Zero(n)) {}
  void restart() {
    n_ = 0;
    mean_.setZero();
    m2_.setZero();
  }
  void add(const Eigen::VectorXd& x) {
    ++n_;
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(x - mean_);
  }
  std::size_t count() const { return n_; }
  Eigen::VectorXd variance() const { return n_ > 1 ? Eigen::VectorXd(m2_ / static_cast<double>(n_ - 1)) : Eigen::VectorXd(m2_); }

 private:
  std::size_t n_ = 0;
  Eigen::VectorXd mean_, m2_;
};

/// Warmup schedule: initial fast buffer, doubling slow windows, terminal
/// fast buffer.
class WarmupWindows {
 public:
  WarmupWindows(std::size_t warmup, bool adapt_metric) : warmup_(warmup) {
    if (!adapt_metric || warmup < 20) {
      enabled_ = false;
      return;
    }
    init_ = static_cast<std::size_t>(0.15 * static_cast<double>(warmup));
    term_ = static_cast<std::size_t>(0.10 * static_cast<double>(warmup));
    const std::size_t slow = warmup - init_ - term_;
    size_ = std::min<std::size_t>(25, slow);
    next_ = init_ + size_ - 1;
  }
  bool enabled() const { return enabled_; }
  bool in_window() const { return enabled_ && counter_ >= init_ && counter_ < warmup_ - term_ && counter_ != warmup_; }
  bool window_end() const { return enabled_ && counter_ == next_ && counter_ != warmup_; }
  void advance() { ++counter_; }
  void compute_next() {
    const std::size_t last = warmup_ - term_ - 1;
    if (next_ == last) return;
    size_ *= 2;
    next_ = counter_ + size_;
    if (next_ != last && next_ + 2 * size_ >= warmup_ - term_) next_ = last;
  }

 private:
  bool enabled_ = true;
  std::size_t warmup_ = 0, init_ = 0, term_ = 0, size_ = 0, next_ = 0, counter_ = 0;
};

/// Dual averaging of log step size.
class StepSizeAdapter {
 public:
  explicit StepSizeAdapter(double delta) : delta_(delta) {}
  void set_mu(double mu) { mu_ = mu; }
  void restart() {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }
  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double c = static_cast<double>(counter_);
    const double eta = 1.0 / (c + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(c) / kGamma;
    const double x_eta = std::pow(c, -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }
  double final_step_size() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;
  double delta_;
  double mu_ = 0.0, s_bar_ = 0.0, x_bar_ = 0.0;
  std::size_t counter_ = 0;
};

struct TransitionStats {
  double accept_stat = 0.0;
  std::size_t depth = 0;
  std::size_t n_leapfrog = 0;
  bool divergent = false;
};

/// Multinomial NUTS with the generalized no-U-turn criterion and a diagonal
/// Euclidean metric.
class NutsKernel {
 public:
  NutsKernel(const PosteriorDensity& density, const DiscreteState& z, Rng& rng, std::size_t max_depth,
             double max_delta_h)
      : density_(density), z_(z), rng_(rng), max_depth_(max_depth), max_delta_h_(max_delta_h) {
    inv_metric_ = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(density.dimension()));
  }

  double step_size = 1.0;
  Eigen::VectorXd& inv_metric() { return inv_metric_; }

  void evaluate(PhaseState& s) const { s.logp = density_.log_density_gradient(s.q, z_, s.grad); }

  double hamiltonian(const PhaseState& s) const {
    return -s.logp + 0.5 * s.p.dot(inv_metric_.cwiseProduct(s.p));
  }
  Eigen::VectorXd p_sharp(const PhaseState& s) const { return inv_metric_.cwiseProduct(s.p); }

  void sample_momentum(PhaseState& s) {
    s.p.resize(inv_metric_.size());
    for (Eigen::Index i = 0; i < s.p.size(); ++i) s.p(i) = rng_.normal() / std::sqrt(inv_metric_(i));
  }

  void leapfrog(PhaseState& s, double eps) const {
    s.p += 0.5 * eps * s.grad;
    s.q += eps * inv_metric_.cwiseProduct(s.p);
    evaluate(s);
    s.p += 0.5 * eps * s.grad;
  }

  /// Heuristic doubling/halving until one leapfrog step crosses an
  /// acceptance probability of 0.8.
  void init_step_size(PhaseState& s) {
    const PhaseState start = s;
    sample_momentum(s);
    double h0 = hamiltonian(s);
    leapfrog(s, step_size);
    double h = hamiltonian(s);
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    double delta_h = h0 - h;
    const int direction = delta_h > std::log(0.8) ? 1 : -1;
    while (true) {
      s = start;
      sample_momentum(s);
      h0 = hamiltonian(s);
      leapfrog(s, step_size);
      h = hamiltonian(s);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      delta_h = h0 - h;
      if (direction == 1 && !(delta_h > std::log(0.8))) break;
      if (direction == -1 && !(delta_h < std::log(0.8))) break;
      step_size = direction == 1 ? 2.0 * step_size : 0.5 * step_size;
      if (step_size > 1e7) throw std::runtime_error("step size search diverged: posterior may be improper");
      if (step_size == 0.0) throw std::runtime_error("step size collapsed to zero: no acceptable step");
    }
    s = start;
  }

  TransitionStats transition(PhaseState& state) {
    sample_momentum(state);
    evaluate(state);
    const double h0 = hamiltonian(state);

    PhaseState z_fwd = state, z_bck = state, z_sample = state, z_propose = state;
    Eigen::VectorXd p_fwd_fwd = state.p, p_fwd_bck = state.p, p_bck_fwd = state.p, p_bck_bck = state.p;
    const Eigen::VectorXd ps = p_sharp(state);
    Eigen::VectorXd ps_fwd_fwd = ps, ps_fwd_bck = ps, ps_bck_fwd = ps, ps_bck_bck = ps;
    Eigen::VectorXd rho = state.p;
    const Eigen::Index n = state.q.size();

    double log_sum_weight = 0.0;
    double sum_metro_prob = 0.0;
    std::size_t n_leapfrog = 0;
    std::size_t depth = 0;
    divergent_ = false;

    while (depth < max_depth_) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(n), rho_bck = Eigen::VectorXd::Zero(n);
      bool valid = false;
      double lsw_subtree = -std::numeric_limits<double>::infinity();
      if (rng_.uniform() > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        ps_bck_fwd = ps_fwd_bck;
        PhaseState cur = z_fwd;
        valid = build_tree(depth, cur, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, h0, 1.0,
                           n_leapfrog, lsw_subtree, sum_metro_prob);
        z_fwd = std::move(cur);
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        ps_fwd_bck = ps_bck_fwd;
        PhaseState cur = z_bck;
        valid = build_tree(depth, cur, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, h0, -1.0,
                           n_leapfrog, lsw_subtree, sum_metro_prob);
        z_bck = std::move(cur);
      }
      if (!valid) break;
      ++depth;

      if (lsw_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (rng_.uniform() < std::exp(lsw_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = criterion(ps_bck_bck, ps_fwd_fwd, rho);
      persist = persist && criterion(ps_bck_bck, ps_fwd_bck, Eigen::VectorXd(rho_bck + p_fwd_bck));
      persist = persist && criterion(ps_bck_fwd, ps_fwd_fwd, Eigen::VectorXd(rho_fwd + p_bck_fwd));
      if (!persist) break;
    }

    state = std::move(z_sample);
    TransitionStats st;
    st.n_leapfrog = n_leapfrog;
    st.accept_stat = n_leapfrog > 0 ? sum_metro_prob / static_cast<double>(n_leapfrog) : 0.0;
    st.depth = depth;
    st.divergent = divergent_;
    return st;
  }

 private:
  static bool criterion(const Eigen::VectorXd& ps_minus, const Eigen::VectorXd& ps_plus, const Eigen::VectorXd& rho) {
    return ps_plus.dot(rho) > 0.0 && ps_minus.dot(rho) > 0.0;
  }

  bool build_tree(std::size_t depth, PhaseState& z, PhaseState& z_propose, Eigen::VectorXd& ps_beg,
                  Eigen::VectorXd& ps_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end,
                  double h0, double sign, std::size_t& n_leapfrog, double& log_sum_weight, double& sum_metro_prob) {
    const Eigen::Index n = z.q.size();
    if (depth == 0) {
      leapfrog(z, sign * step_size);
      ++n_leapfrog;
      double h = hamiltonian(z);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      if (h - h0 > max_delta_h_) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z;
      ps_beg = p_sharp(z);
      ps_end = ps_beg;
      rho += z.p;
      p_beg = z.p;
      p_end = p_beg;
      return !divergent_;
    }

    double lsw_init = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_init_end(n), ps_init_end(n), rho_init = Eigen::VectorXd::Zero(n);
    if (!build_tree(depth - 1, z, z_propose, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, h0, sign, n_leapfrog,
                    lsw_init, sum_metro_prob))
      return false;

    PhaseState z_propose_final = z;
    double lsw_final = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_final_beg(n), ps_final_beg(n), rho_final = Eigen::VectorXd::Zero(n);
    if (!build_tree(depth - 1, z, z_propose_final, ps_final_beg, ps_end, rho_final, p_final_beg, p_end, h0, sign,
                    n_leapfrog, lsw_final, sum_metro_prob))
      return false;

    const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree) {
      z_propose = std::move(z_propose_final);
    } else if (rng_.uniform() < std::exp(lsw_final - lsw_subtree)) {
      z_propose = std::move(z_propose_final);
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = criterion(ps_beg, ps_end, rho_subtree);
    persist = persist && criterion(ps_beg, ps_final_beg, Eigen::VectorXd(rho_init + p_final_beg));
    persist = persist && criterion(ps_init_end, ps_end, Eigen::VectorXd(rho_final + p_init_end));
    return persist;
  }

  const PosteriorDensity& density_;
  const DiscreteState& z_;
  Rng& rng_;
  std::size_t max_depth_;
  double max_delta_h_;
  Eigen::VectorXd inv_metric_;
  bool divergent_ = false;
};

inline PhaseState initial_point(const PosteriorDensity& density, const DiscreteState& z, Rng& rng,
                                const SamplerConfig& cfg) {
  PhaseState s;
  const auto n = static_cast<Eigen::Index>(density.dimension());
  for (std::size_t attempt = 0; attempt < cfg.max_init_tries; ++attempt) {
    s.q.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) s.q(i) = rng.uniform(-cfg.init_radius, cfg.init_radius);
    s.logp = density.log_density_gradient(s.q, z, s.grad);
    if (std::isfinite(s.logp) && s.grad.allFinite()) return s;
  }
  throw std::runtime_error("initialization failed: non-finite density after " + std::to_string(cfg.max_init_tries) +
                           " jittered attempts");
}

struct ChainResult {
  std::vector<double> values;  // [draw][param]
  ChainInfo info;
};

inline ChainResult run_chain(const PosteriorDensity& density, const SamplerConfig& cfg, std::size_t chain) {
  Rng rng = Rng(cfg.seed).stream(chain);
  const std::size_t n_disc = density.n_discrete();
  DiscreteState z(n_disc, 1);
  const auto& names = density.output_names();
  const std::size_t width = names.size() + n_disc;

  NutsKernel kernel(density, z, rng, cfg.max_tree_depth, cfg.max_delta_h);
  PhaseState state = initial_point(density, z, rng, cfg);
  kernel.init_step_size(state);

  StepSizeAdapter step_adapt(cfg.target_accept);
  step_adapt.set_mu(std::log(10.0 * kernel.step_size));
  WarmupWindows windows(cfg.warmup, cfg.mass_matrix == MassMatrix::diagonal);
  VarianceEstimator var_est(static_cast<Eigen::Index>(density.dimension()));

  const auto gibbs_start = static_cast<std::size_t>(cfg.discrete_hold_fraction * static_cast<double>(cfg.warmup));
  ChainResult out;
  out.values.resize(cfg.draws * width);
  double accept_sum = 0.0, depth_sum = 0.0;

  auto gibbs = [&] {
    for (std::size_t d = 0; d < n_disc; ++d) {
      const double p = density.gibbs_z_conditional(state.q, z, d);
      z[d] = rng.uniform() < p ? 1 : 0;
    }
  };

  for (std::size_t it = 0; it < cfg.warmup + cfg.draws; ++it) {
    const TransitionStats st = kernel.transition(state);
    if (n_disc > 0 && it >= gibbs_start) gibbs();
    if (it < cfg.warmup) {
      kernel.step_size = step_adapt.learn(st.accept_stat);
      if (windows.enabled()) {
        if (windows.in_window()) var_est.add(state.q);
        if (windows.window_end()) {
          windows.compute_next();
          const Eigen::VectorXd var = var_est.variance();
          const double nn = static_cast<double>(var_est.count());
          kernel.inv_metric() = (nn / (nn + 5.0)) * var.array() + 1e-3 * (5.0 / (nn + 5.0));
          var_est.restart();
          kernel.evaluate(state);
          kernel.init_step_size(state);
          step_adapt.set_mu(std::log(10.0 * kernel.step_size));
          step_adapt.restart();
        }
        windows.advance();
      }
      if (it + 1 == cfg.warmup) kernel.step_size = step_adapt.final_step_size();
      continue;
    }
    const std::size_t draw = it - cfg.warmup;
    if (st.divergent) ++out.info.divergences;
    accept_sum += st.accept_stat;
    depth_sum += static_cast<double>(st.depth);
    out.info.n_leapfrog += st.n_leapfrog;
    double* row = out.values.data() + draw * width;
    density.outputs(state.q, z, row);
    for (std::size_t d = 0; d < n_disc; ++d) row[names.size() + d] = z[d];
  }
  out.info.step_size = kernel.step_size;
  out.info.inv_metric.assign(kernel.inv_metric().data(), kernel.inv_metric().data() + kernel.inv_metric().size());
  out.info.mean_accept_stat = accept_sum / static_cast<double>(cfg.draws);
  out.info.mean_tree_depth = depth_sum / static_cast<double>(cfg.draws);
  return out;
}

}  // namespace detail

/// NUTS over the continuous block. If the density carries discrete
/// indicators, each iteration is followed by a systematic Gibbs scan over
/// them (see nuts_within_gibbs).
inline PosteriorSamples nuts_sample(const PosteriorDensity& density, const SamplerConfig& cfg) {
  cfg.validate();
  if (density.dimension() < 1) throw std::invalid_argument("nuts_sample: density has dimension 0");
  std::vector<detail::ChainResult> results(cfg.chains);
  parallel_for(cfg.chains, cfg.threads, [&](std::size_t c) { results[c] = detail::run_chain(density, cfg, c); });

  PosteriorSamples s;
  s.names = density.output_names();
  s.n_discrete = density.n_discrete();
  for (std::size_t d = 0; d < s.n_discrete; ++d) s.names.push_back("z[" + std::to_string(d) + "]");
  s.chains = cfg.chains;
  s.draws = cfg.draws;
  s.values.reserve(cfg.chains * cfg.draws * s.names.size());
  for (auto& r : results) {
    s.values.insert(s.values.end(), r.values.begin(), r.values.end());
    s.divergences += r.info.divergences;
    s.chain_info.push_back(std::move(r.info));
  }
  s.divergence_warning = static_cast<double>(s.divergences) >
                         cfg.divergence_warning_fraction * static_cast<double>(cfg.chains * cfg.draws);
  return s;
}

/// NUTS on the continuous block given z, then a systematic scan z_d ~
/// Bernoulli(gibbs_z_conditional). Indicators start at 1.
inline PosteriorSamples nuts_within_gibbs(const PosteriorDensity& density, const SamplerConfig& cfg) {
  if (density.n_discrete() == 0) throw std::invalid_argument("nuts_within_gibbs: density has no discrete state");
  return nuts_sample(density, cfg);
}

// ---------------------------------------------------------------------------
// Diagnostics

struct ParamSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, median = 0.0, q05 = 0.0, q95 = 0.0;
  double n_eff = 0.0;
  double r_hat = std::numeric_limits<double>::quiet_NaN();
};

struct DiagnosticsSummary {
  std::vector<ParamSummary> params;
  bool has_rhat = false;

  const ParamSummary& operator[](const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return p;
    throw std::invalid_argument("no summary for '" + name + "'");
  }
  /// Largest finite r_hat (NaN if none).
  double max_rhat() const {
    double m = std::numeric_limits<double>::quiet_NaN();
    for (const auto& p : params)
      if (std::isfinite(p.r_hat) && !(p.r_hat <= m)) m = p.r_hat;
    return m;
  }
};

/// Empirical quantile with linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace detail {

inline std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

/// Replaces values by normal scores of their pooled average ranks.
inline std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i) all.push_back({chains[c][i], c * chains[0].size() + i});
  std::sort(all.begin(), all.end());
  const double s = static_cast<double>(all.size());
  std::vector<double> z(all.size());
  const boost::math::normal_distribution<double> std_normal;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j + 1 < all.size() && all[j + 1].first == all[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double zz = boost::math::quantile(std_normal, (rank - 0.375) / (s + 0.25));
    for (std::size_t k = i; k <= j; ++k) z[all[k].second] = zz;
    i = j + 1;
  }
  std::vector<std::vector<double>> out(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i) out[c].push_back(z[c * chains[0].size() + i]);
  return out;
}

inline double mean_of(const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

inline double sample_var(const std::vector<double>& x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double classic_rhat(const std::vector<std::vector<double>>& chains) {
  const double n = static_cast<double>(chains[0].size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean_of(c));
    vars.push_back(sample_var(c));
  }
  const double w = mean_of(vars);
  const double b_over_n = sample_var(means);
  return std::sqrt(((n - 1.0) / n * w + b_over_n) / w);
}

}  // namespace detail

/// Split-chain rank-normalized r_hat: max of the bulk and folded (tail)
/// versions. NaN when fewer than 2 chains or chains too short.
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2 || chains[0].size() < 4) return std::numeric_limits<double>::quiet_NaN();
  const auto split = detail::split_chains(chains);
  const double bulk = detail::classic_rhat(detail::rank_normalize(split));
  std::vector<double> pooled;
  for (const auto& c : split) pooled.insert(pooled.end(), c.begin(), c.end());
  std::sort(pooled.begin(), pooled.end());
  const double med = quantile_sorted(pooled, 0.5);
  auto folded = split;
  for (auto& c : folded)
    for (auto& v : c) v = std::abs(v - med);
  const double tail = detail::classic_rhat(detail::rank_normalize(folded));
  if (std::isnan(bulk) || std::isnan(tail)) return std::numeric_limits<double>::quiet_NaN();
  return std::max(bulk, tail);
}

/// Multi-chain ESS with Geyer's initial positive sequence and monotone
/// correction. Chains must have equal length.
inline double ess_geyer(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains[0].size();
  const double total = static_cast<double>(m * n);
  if (n < 4) return total;
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = detail::mean_of(chains[c]);
    vars[c] = detail::sample_var(chains[c]);
  }
  const double nd = static_cast<double>(n);
  const double mean_var = detail::mean_of(vars);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += detail::sample_var(means);
  if (!(var_plus > 0.0)) return total;

  // Mean autocovariance across chains at a lag (biased, 1/n normalization).
  auto acov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double a = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) a += (chains[c][i] - means[c]) * (chains[c][i + lag] - means[c]);
      s += a / nd;
    }
    return s / static_cast<double>(m);
  };

  std::vector<double> rho(n + 2, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - acov(1)) / var_plus;
  rho[1] = rho_odd;
  std::size_t t = 1;
  while (t + 5 < n && !std::isnan(rho_even + rho_odd) && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - acov(t + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - acov(t + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[t + 1] = rho_even;
      rho[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0) rho[max_t + 1] = rho_even;

  for (t = 1; t + 2 <= max_t; t += 2) {
    if (rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]) {
      rho[t + 1] = 0.5 * (rho[t - 1] + rho[t]);
      rho[t + 2] = rho[t + 1];
    }
  }
  double tau = -1.0 + 2.0 * std::accumulate(rho.begin(), rho.begin() + static_cast<std::ptrdiff_t>(max_t), 0.0) +
               rho[max_t + 1];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

/// Bulk ESS: Geyer ESS of rank-normalized split chains. A constant
/// parameter reports the full draw count.
inline double ess_bulk(const std::vector<std::vector<double>>& chains) {
  const double first = chains[0][0];
  bool constant = true;
  for (const auto& c : chains)
    for (double v : c) constant = constant && v == first;
  const double total = static_cast<double>(chains.size() * chains[0].size());
  if (constant || chains[0].size() < 4) return total;
  return ess_geyer(detail::rank_normalize(detail::split_chains(chains)));
}

inline ParamSummary summarize(const std::string& name, const std::vector<std::vector<double>>& chains) {
  ParamSummary p;
  p.name = name;
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
  p.mean = detail::mean_of(all);
  double ss = 0.0;
  for (double v : all) ss += (v - p.mean) * (v - p.mean);
  p.sd = all.size() > 1 ? std::sqrt(ss / static_cast<double>(all.size() - 1)) : 0.0;
  std::sort(all.begin(), all.end());
  p.median = quantile_sorted(all, 0.5);
  p.q05 = quantile_sorted(all, 0.05);
  p.q95 = quantile_sorted(all, 0.95);
  p.n_eff = ess_bulk(chains);
  p.r_hat = split_rhat(chains);
  return p;
}

inline DiagnosticsSummary diagnostics(const PosteriorSamples& s) {
  DiagnosticsSummary out;
  out.has_rhat = s.chains >= 2;
  for (std::size_t p = 0; p < s.n_params(); ++p) out.params.push_back(summarize(s.names[p], s.per_chain(p)));
  return out;
}

// ---------------------------------------------------------------------------
// Export

inline void write_samples_csv(std::ostream& os, const PosteriorSamples& s) {
  os << "chain,iter,name,value\n";
  for (std::size_t c = 0; c < s.chains; ++c)
    for (std::size_t i = 0; i < s.draws; ++i)
      for (std::size_t p = 0; p < s.n_params(); ++p)
        os << c << ',' << i << ',' << csv_escape(s.names[p]) << ',' << format_double(s.at(c, i, p)) << '\n';
}

/// Columns: name, mean, std, median, 5.0%, 95.0%, n_eff, r_hat. r_hat is
/// left empty when it was not computed (single chain).
inline void write_summary_csv(std::ostream& os, const DiagnosticsSummary& d) {
  os << "name,mean,std,median,5.0%,95.0%,n_eff,r_hat\n";
  for (const auto& p : d.params) {
    os << csv_escape(p.name) << ',' << format_double(p.mean) << ',' << format_double(p.sd) << ','
       << format_double(p.median) << ',' << format_double(p.q05) << ',' << format_double(p.q95) << ','
       << format_double(p.n_eff) << ',' << (d.has_rhat ? format_double(p.r_hat) : std::string()) << '\n';
  }
}

inline nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

inline nlohmann::json to_json(const DiagnosticsSummary& d) {
  auto arr = nlohmann::json::array();
  for (const auto& p : d.params) {
    nlohmann::json row = {{"name", p.name},           {"mean", json_number(p.mean)},
                          {"std", json_number(p.sd)}, {"median", json_number(p.median)},
                          {"5.0%", json_number(p.q05)}, {"95.0%", json_number(p.q95)},
                          {"n_eff", json_number(p.n_eff)}};
    if (d.has_rhat) row["r_hat"] = json_number(p.r_hat);
    arr.push_back(std::move(row));
  }
  return arr;
}

inline nlohmann::json sampler_metadata(const PosteriorSamples& s) {
  nlohmann::json j;
  j["chains"] = s.chains;
  j["draws"] = s.draws;
  j["divergences"] = s.divergences;
  j["divergence_warning"] = s.divergence_warning;
  auto arr = nlohmann::json::array();
  for (const auto& c : s.chain_info)
    arr.push_back({{"step_size", c.step_size},
                   {"divergences", c.divergences},
                   {"mean_accept_stat", c.mean_accept_stat},
                   {"mean_tree_depth", c.mean_tree_depth},
                   {"n_leapfrog", c.n_leapfrog}});
  j["per_chain"] = arr;
  return j;
}

inline nlohmann::json to_json(const SamplerConfig& c) {
  return {{"chains", c.chains},
          {"warmup", c.warmup},
          {"draws", c.draws},
          {"target_accept", c.target_accept},
          {"max_tree_depth", c.max_tree_depth},
          {"seed", c.seed},
          {"mass_matrix", c.mass_matrix == MassMatrix::diagonal ? "diagonal" : "identity"},
          {"discrete_hold_fraction", c.discrete_hold_fraction}};
}

inline SamplerConfig sampler_config_from_json(const nlohmann::json& j, SamplerConfig c = {}) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    if (k == "chains") c.chains = v.get<std::size_t>();
    else if (k == "warmup") c.warmup = v.get<std::size_t>();
    else if (k == "draws") c.draws = v.get<std::size_t>();
    else if (k == "target_accept") c.target_accept = v.get<double>();
    else if (k == "max_tree_depth") c.max_tree_depth = v.get<std::size_t>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "discrete_hold_fraction") c.discrete_hold_fraction = v.get<double>();
    else if (k == "mass_matrix") {
      const auto m = v.get<std::string>();
      if (m == "diagonal") c.mass_matrix = MassMatrix::diagonal;
      else if (m == "identity") c.mass_matrix = MassMatrix::identity;
      else throw std::invalid_argument("unknown mass_matrix '" + m + "'");
    } else {
      throw std::invalid_argument("unknown sampler key '" + k + "'");
    }
  }
  c.validate();
  return c;
}

}  // namespace bhip
