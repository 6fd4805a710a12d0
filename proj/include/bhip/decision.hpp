#pragma once

#include "bhip/data.hpp"
#include "bhip/model.hpp"
#include "bhip/sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace bhip {

enum class RopeMode { posterior_sd, target_sd };

inline const char* to_string(RopeMode m) { return m == RopeMode::target_sd ? "target-sd" : "posterior-sd"; }

struct DecisionConfig {
  double hdi_mass = 0.95;
  RopeMode rope_mode = RopeMode::target_sd;
  double rope_multiplier = 0.1;
  double hdi_threshold = 0.95;
  double pooling_threshold = 0.85;
  double z_threshold = 0.5;

  void validate() const {
    for (double v : {hdi_mass, hdi_threshold, pooling_threshold, z_threshold})
      if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("DecisionConfig: thresholds and mass must lie in (0,1)");
    if (!(rope_multiplier > 0.0)) throw std::invalid_argument("DecisionConfig: rope_multiplier must be positive");
  }
};

inline nlohmann::json to_json(const DecisionConfig& c) {
  return {{"hdi_mass", c.hdi_mass},
          {"rope_mode", to_string(c.rope_mode)},
          {"rope_multiplier", c.rope_multiplier},
          {"hdi_threshold", c.hdi_threshold},
          {"pooling_threshold", c.pooling_threshold},
          {"z_threshold", c.z_threshold}};
}

inline DecisionConfig decision_config_from_json(const nlohmann::json& j, DecisionConfig c = {}) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    if (k == "hdi_mass") c.hdi_mass = v.get<double>();
    else if (k == "rope_mode") {
      const auto m = v.get<std::string>();
      if (m == "target-sd") c.rope_mode = RopeMode::target_sd;
      else if (m == "posterior-sd") c.rope_mode = RopeMode::posterior_sd;
      else throw std::invalid_argument("unknown rope_mode '" + m + "'");
    } else if (k == "rope_multiplier") c.rope_multiplier = v.get<double>();
    else if (k == "hdi_threshold") c.hdi_threshold = v.get<double>();
    else if (k == "pooling_threshold") c.pooling_threshold = v.get<double>();
    else if (k == "z_threshold") c.z_threshold = v.get<double>();
    else throw std::invalid_argument("unknown decision key '" + k + "'");
  }
  c.validate();
  return c;
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
};

namespace detail {

inline std::size_t hdi_count(std::size_t n, double mass) {
  auto k = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

/// Start index of the narrowest window of k sorted draws (first on ties).
inline std::size_t hdi_start(const std::vector<double>& sorted, std::size_t k) {
  std::size_t best = 0;
  double best_width = sorted[k - 1] - sorted[0];
  for (std::size_t i = 1; i + k <= sorted.size(); ++i) {
    const double w = sorted[i + k - 1] - sorted[i];
    if (w < best_width) {
      best_width = w;
      best = i;
    }
  }
  return best;
}

inline void check_hdi_args(std::size_t n, double mass) {
  if (n < 10) throw std::invalid_argument("hdi: need at least 10 samples");
  if (!(mass > 0.0 && mass < 1.0)) throw std::invalid_argument("hdi: mass must be in (0,1)");
}

}  // namespace detail

/// Highest density interval: narrowest window over sorted draws holding
/// ceil(mass * n) of them.
inline Interval hdi(std::vector<double> samples, double mass) {
  detail::check_hdi_args(samples.size(), mass);
  std::sort(samples.begin(), samples.end());
  const std::size_t k = detail::hdi_count(samples.size(), mass);
  const std::size_t i = detail::hdi_start(samples, k);
  return {samples[i], samples[i + k - 1]};
}

/// Half-width of the ROPE [-eps, eps].
inline double rope_epsilon(const DecisionConfig& cfg, double sd) {
  if (!(sd > 0.0)) throw std::invalid_argument("rope: reference sd must be positive");
  return cfg.rope_multiplier * sd;
}

inline Interval rope(const DecisionConfig& cfg, double sd) {
  const double eps = rope_epsilon(cfg, sd);
  return {-eps, eps};
}

/// Fraction of the draws inside the mass-HDI window with |x| > eps.
inline double hdi_rope_fraction(std::vector<double> samples, double eps, double mass) {
  detail::check_hdi_args(samples.size(), mass);
  std::sort(samples.begin(), samples.end());
  const std::size_t k = detail::hdi_count(samples.size(), mass);
  const std::size_t i = detail::hdi_start(samples, k);
  std::size_t outside = 0;
  for (std::size_t j = i; j < i + k; ++j) outside += std::abs(samples[j]) > eps ? 1 : 0;
  return static_cast<double>(outside) / static_cast<double>(k);
}

inline double hdi_rope_fraction(const std::vector<double>& samples, const Interval& rope, double mass) {
  return hdi_rope_fraction(samples, rope.upper, mass);
}

/// gamma = 1 - Var_e[mean_s delta^e] / mean_e[Var_s delta^e(s)], with
/// delta^e(s) = beta^e(s) - mu(s) and sample variances throughout.
/// beta_draws[e] holds the draws of environment e, aligned with mu_draws.
inline double pooling_factor(const std::vector<double>& mu_draws, const std::vector<std::vector<double>>& beta_draws) {
  const std::size_t e_count = beta_draws.size();
  const std::size_t s_count = mu_draws.size();
  if (e_count < 2) throw std::invalid_argument("pooling_factor: need at least 2 environments");
  if (s_count < 10) throw std::invalid_argument("pooling_factor: need at least 10 draws");
  std::vector<double> env_mean(e_count), env_var(e_count);
  for (std::size_t e = 0; e < e_count; ++e) {
    if (beta_draws[e].size() != s_count) throw std::invalid_argument("pooling_factor: draw counts differ");
    std::vector<double> delta(s_count);
    for (std::size_t s = 0; s < s_count; ++s) delta[s] = beta_draws[e][s] - mu_draws[s];
    env_mean[e] = detail::mean_of(delta);
    env_var[e] = detail::sample_var(delta);
  }
  const double num = detail::sample_var(env_mean);
  const double den = detail::mean_of(env_var);
  constexpr double kTiny = 1e-12;
  if (den < kTiny) {
    if (num < kTiny) return 1.0;
    throw std::runtime_error("pooling_factor: degenerate denominator");
  }
  return 1.0 - num / den;
}

struct PredictorDecision {
  std::string name;
  std::optional<double> hdi_frac_global;
  std::vector<double> hdi_frac_local;
  double hdi_frac_local_min = 0.0;
  std::optional<double> pooling_factor;
  std::optional<double> inclusion_prob;
  std::optional<bool> z_selected;
  std::optional<double> lambda_mean;
  bool selected = false;
};

struct DecisionReport {
  PriorFamily family = PriorFamily::hier_normal_noncentered;
  DecisionConfig config;
  double target_sd = 1.0;
  std::vector<PredictorDecision> predictors;

  std::vector<std::size_t> selected() const {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < predictors.size(); ++d)
      if (predictors[d].selected) out.push_back(d);
    return out;
  }
  std::vector<std::string> selected_names() const {
    std::vector<std::string> out;
    for (const auto& p : predictors)
      if (p.selected) out.push_back(p.name);
    return out;
  }
  std::vector<std::size_t> z_selected() const {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < predictors.size(); ++d)
      if (predictors[d].z_selected.value_or(false)) out.push_back(d);
    return out;
  }
};

namespace detail {

inline std::string vname(const std::string& block, std::size_t d) { return block + "[" + std::to_string(d) + "]"; }
inline std::string mname(const std::string& block, std::size_t e, std::size_t d) {
  return block + "[" + std::to_string(e) + "," + std::to_string(d) + "]";
}

inline double column_sd(const std::vector<double>& x) { return std::sqrt(sample_var(x)); }

}  // namespace detail

/// Applies the selection rule to every predictor.
///
/// Hierarchical normal and spike-and-slab: mu_d is the global parameter,
/// beta[e,d] (resp. slabBeta[e,d]) the local ones, and the pooling factor
/// must also clear its threshold. Horseshoe has no global mean, so only the
/// local rule applies. target_sd is the reference for target-sd ROPEs.
inline DecisionReport decide(const PosteriorSamples& s, PriorFamily family,
                             const std::vector<std::string>& predictor_names, std::size_t n_envs,
                             const DecisionConfig& cfg, double target_sd = 1.0) {
  cfg.validate();
  DecisionReport r;
  r.family = family;
  r.config = cfg;
  r.target_sd = target_sd;
  const std::string local_block = family == PriorFamily::spike_and_slab ? "slabBeta" : "beta";
  const bool has_global = family != PriorFamily::horseshoe;

  auto eps_for = [&](const std::vector<double>& draws) {
    return rope_epsilon(cfg, cfg.rope_mode == RopeMode::target_sd ? target_sd : detail::column_sd(draws));
  };

  for (std::size_t d = 0; d < predictor_names.size(); ++d) {
    PredictorDecision p;
    p.name = predictor_names[d];
    std::vector<std::vector<double>> local(n_envs);
    for (std::size_t e = 0; e < n_envs; ++e) {
      local[e] = s.column(detail::mname(local_block, e, d));
      p.hdi_frac_local.push_back(hdi_rope_fraction(local[e], eps_for(local[e]), cfg.hdi_mass));
    }
    p.hdi_frac_local_min = *std::min_element(p.hdi_frac_local.begin(), p.hdi_frac_local.end());
    bool sel = p.hdi_frac_local_min > cfg.hdi_threshold;
    if (has_global) {
      const auto mu = s.column(detail::vname("mu", d));
      p.hdi_frac_global = hdi_rope_fraction(mu, eps_for(mu), cfg.hdi_mass);
      sel = sel && *p.hdi_frac_global > cfg.hdi_threshold;
      if (n_envs >= 2) {
        p.pooling_factor = pooling_factor(mu, local);
        sel = sel && *p.pooling_factor > cfg.pooling_threshold;
      } else {
        sel = false;
      }
    }
    if (family == PriorFamily::spike_and_slab) {
      p.inclusion_prob = detail::mean_of(s.column(detail::vname("z", d)));
      p.z_selected = *p.inclusion_prob > cfg.z_threshold;
    }
    if (family == PriorFamily::horseshoe) p.lambda_mean = detail::mean_of(s.column(detail::vname("lambda_local", d)));
    p.selected = sel;
    r.predictors.push_back(std::move(p));
  }
  return r;
}

namespace detail {
template <class T>
nlohmann::json opt(const std::optional<T>& v) {
  if (!v) return nullptr;
  if constexpr (std::is_same_v<T, double>) return json_number(*v);
  else return *v;
}
}  // namespace detail

inline nlohmann::json to_json(const DecisionReport& r) {
  nlohmann::json j;
  j["family"] = to_string(r.family);
  j["config"] = to_json(r.config);
  j["target_sd"] = r.target_sd;
  auto preds = nlohmann::json::array();
  for (const auto& p : r.predictors) {
    preds.push_back({{"name", p.name},
                     {"hdi_frac_global", detail::opt(p.hdi_frac_global)},
                     {"hdi_frac_local", p.hdi_frac_local},
                     {"hdi_frac_local_min", p.hdi_frac_local_min},
                     {"pooling_factor", detail::opt(p.pooling_factor)},
                     {"inclusion_prob", detail::opt(p.inclusion_prob)},
                     {"z_selected", detail::opt(p.z_selected)},
                     {"lambda_mean", detail::opt(p.lambda_mean)},
                     {"selected", p.selected}});
  }
  j["predictors"] = preds;
  j["selected"] = r.selected_names();
  return j;
}

/// Fixed-width text table of the report.
inline std::string to_table(const DecisionReport& r) {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return std::string(buf);
  };
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %8s %9s %8s %8s %8s  %s\n", "predictor", "global", "local_min", "gamma",
                "z_mean", "lambda", "selected");
  os << line;
  for (const auto& p : r.predictors) {
    std::snprintf(line, sizeof line, "%-16s %8s %9s %8s %8s %8s  %s\n", p.name.c_str(), fmt(p.hdi_frac_global).c_str(),
                  fmt(p.hdi_frac_local_min).c_str(), fmt(p.pooling_factor).c_str(), fmt(p.inclusion_prob).c_str(),
                  fmt(p.lambda_mean).c_str(), p.selected ? "yes" : "no");
    os << line;
  }
  return os.str();
}

/// Long-format plot data: draws of every global and local coefficient plus
/// its HDI and ROPE endpoints. Columns: parameter, kind, value.
inline void write_plot_data_csv(std::ostream& os, const PosteriorSamples& s, const DecisionReport& r,
                                std::size_t n_envs) {
  os << "parameter,kind,value\n";
  const std::string local_block = r.family == PriorFamily::spike_and_slab ? "slabBeta" : "beta";
  auto emit = [&](const std::string& name) {
    const auto draws = s.column(name);
    const Interval h = hdi(draws, r.config.hdi_mass);
    const double eps = rope_epsilon(r.config, r.config.rope_mode == RopeMode::target_sd ? r.target_sd
                                                                                       : detail::column_sd(draws));
    for (double v : draws) os << csv_escape(name) << ",draw," << format_double(v) << '\n';
    os << csv_escape(name) << ",hdi_lower," << format_double(h.lower) << '\n';
    os << csv_escape(name) << ",hdi_upper," << format_double(h.upper) << '\n';
    os << csv_escape(name) << ",rope_lower," << format_double(-eps) << '\n';
    os << csv_escape(name) << ",rope_upper," << format_double(eps) << '\n';
  };
  for (std::size_t d = 0; d < r.predictors.size(); ++d) {
    if (r.family != PriorFamily::horseshoe) emit(detail::vname("mu", d));
    for (std::size_t e = 0; e < n_envs; ++e) emit(detail::mname(local_block, e, d));
  }
}

}  // namespace bhip
