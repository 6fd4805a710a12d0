#pragma once

#include "bhip/fit.hpp"
#include "bhip/graph_scm.hpp"
#include "bhip/icp.hpp"
#include "bhip/parallel.hpp"
#include "bhip/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ostream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace bhip {

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double specificity = 0.0;
};

/// Confusion counts over d candidate predictors. Conventions for empty
/// cases: precision is 1 when both sets are empty and 0 when only the
/// prediction is; recall is 1 when the truth is empty; f1 is 0 when
/// precision + recall is 0; specificity is 1 when there are no negatives.
inline Metrics score_parent_set(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth,
                                std::size_t d) {
  std::vector<char> p(d, 0), t(d, 0);
  for (auto i : predicted) {
    if (i >= d) throw std::out_of_range("score_parent_set: predicted index out of range");
    p[i] = 1;
  }
  for (auto i : truth) {
    if (i >= d) throw std::out_of_range("score_parent_set: truth index out of range");
    t[i] = 1;
  }
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < d; ++i) {
    tp += p[i] && t[i];
    fp += p[i] && !t[i];
    fn += !p[i] && t[i];
    tn += !p[i] && !t[i];
  }
  Metrics m;
  if (tp + fp == 0) m.precision = tp + fn == 0 ? 1.0 : 0.0;
  else m.precision = tp / (tp + fp);
  m.recall = tp + fn == 0 ? 1.0 : tp / (tp + fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.specificity = tn + fp == 0 ? 1.0 : tn / (tn + fp);
  return m;
}

// ---------------------------------------------------------------------------
// Methods

enum class Method { bhip_noncentered, bhip_horseshoe, bhip_spikeslab, icp };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::bhip_noncentered: return "bhip-noncentered";
    case Method::bhip_horseshoe: return "bhip-horseshoe";
    case Method::bhip_spikeslab: return "bhip-spikeslab";
    case Method::icp: return "icp";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::bhip_noncentered, Method::bhip_horseshoe, Method::bhip_spikeslab, Method::icp})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

struct MethodSettings {
  SamplerConfig sampler;
  DecisionConfig decision;
  IcpOptions icp;
};

/// Predicted parent positions for one dataset. Spike-and-slab selects by
/// mean inclusion indicator; the other BHIP families use the HDI rule.
inline std::vector<std::size_t> run_method(Method m, const EnvironmentDataset& ds, const MethodSettings& s) {
  if (m == Method::icp) return icp_fit(standardize(ds), s.icp).intersection;
  FitOptions o;
  o.sampler = s.sampler;
  o.decision = s.decision;
  o.model.prior_family = m == Method::bhip_noncentered ? PriorFamily::hier_normal_noncentered
                         : m == Method::bhip_horseshoe ? PriorFamily::horseshoe
                                                       : PriorFamily::spike_and_slab;
  const DecisionReport r = fit_and_decide(ds, o);
  return m == Method::bhip_spikeslab ? r.z_selected() : r.selected();
}

// ---------------------------------------------------------------------------
// Grid

struct BenchConfig {
  std::vector<std::size_t> nodes_list{4};
  std::vector<std::size_t> samples_list{2000};
  std::vector<std::size_t> envs_list{3};
  std::size_t n_dags = 100;
  std::uint64_t seed = 0;
  std::vector<Method> methods{Method::bhip_noncentered, Method::icp};
  DecisionConfig thresholds;
  bool include_intervened_targets = true;
  double edge_prob = 0.5;
  LganmOptions lganm;
  SamplerConfig sampler = [] {
    SamplerConfig c;
    c.chains = 2;
    c.warmup = 500;
    c.draws = 500;
    return c;
  }();
  double alpha = 0.05;
  std::size_t threads = 0;

  void validate() const {
    if (nodes_list.empty() || samples_list.empty() || envs_list.empty() || methods.empty())
      throw std::invalid_argument("BenchConfig: lists must be nonempty");
    if (n_dags < 1) throw std::invalid_argument("BenchConfig: n_dags must be >= 1");
    for (auto n : nodes_list)
      if (n < 2) throw std::invalid_argument("BenchConfig: nodes must be >= 2");
    for (auto e : envs_list)
      for (auto n : nodes_list)
        if (e < 1 || e - 1 > n) throw std::invalid_argument("BenchConfig: envs must be in [1, nodes + 1]");
    for (auto s : samples_list)
      if (s < 2) throw std::invalid_argument("BenchConfig: samples must be >= 2");
    thresholds.validate();
    sampler.validate();
  }
};

struct RunRecord {
  std::size_t nodes = 0, samples = 0, envs = 0, replicate = 0, target = 0;
  Method method = Method::icp;
  bool target_intervened = false;
  bool ok = true;
  std::string error;
  std::vector<std::size_t> predicted, truth;
  Metrics metrics;

  auto key() const { return std::tuple(nodes, samples, envs, static_cast<int>(method), replicate, target); }
};

struct CellSummary {
  std::size_t nodes = 0, samples = 0, envs = 0;
  Method method = Method::icp;
  std::size_t runs = 0, failures = 0;
  Metrics mean;
};

struct GridResult {
  std::vector<RunRecord> records;
  std::vector<CellSummary> summaries;
};

/// Per-cell, per-method means over successful runs. Records are sorted by
/// key first, so the result does not depend on the order of the input.
inline std::vector<CellSummary> aggregate(std::vector<RunRecord> records) {
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) { return a.key() < b.key(); });
  std::vector<CellSummary> out;
  for (const auto& r : records) {
    if (out.empty() || out.back().nodes != r.nodes || out.back().samples != r.samples || out.back().envs != r.envs ||
        out.back().method != r.method)
      out.push_back({r.nodes, r.samples, r.envs, r.method, 0, 0, {}});
    auto& c = out.back();
    if (!r.ok) {
      ++c.failures;
      continue;
    }
    ++c.runs;
    c.mean.precision += r.metrics.precision;
    c.mean.recall += r.metrics.recall;
    c.mean.f1 += r.metrics.f1;
    c.mean.specificity += r.metrics.specificity;
  }
  for (auto& c : out) {
    if (c.runs == 0) continue;
    const double n = static_cast<double>(c.runs);
    c.mean.precision /= n;
    c.mean.recall /= n;
    c.mean.f1 /= n;
    c.mean.specificity /= n;
  }
  return out;
}

namespace detail {

struct GridJob {
  std::size_t nodes, samples, envs, replicate;
};

inline std::uint64_t method_seed(std::uint64_t base, std::size_t target, Method m) {
  return mix64(base ^ mix64((static_cast<std::uint64_t>(target) << 8) | static_cast<std::uint64_t>(m)));
}

inline std::vector<RunRecord> run_replicate(const BenchConfig& cfg, const GridJob& job) {
  const Rng base = Rng(cfg.seed).stream({job.nodes, job.samples, job.envs, job.replicate});
  Rng dag_rng = base.stream(0), scm_rng = base.stream(1), env_rng = base.stream(2);
  const Dag dag = random_dag(job.nodes, cfg.edge_prob, dag_rng);
  const LinearScm scm = random_lganm(dag, cfg.lganm, scm_rng);
  InterventionPolicy policy;
  policy.allow_target = true;
  const auto specs = random_environment_specs(scm, job.envs, job.samples, 0, policy, env_rng);
  const auto mats = sample_environment_matrices(scm, specs, base.stream(3));

  std::vector<RunRecord> out;
  for (std::size_t t = 0; t < job.nodes; ++t) {
    bool intervened = false;
    for (const auto& s : specs)
      for (const auto& iv : s.interventions) intervened = intervened || iv.node == t;
    if (intervened && !cfg.include_intervened_targets) continue;
    const EnvironmentDataset ds = split_target(mats, t);
    const auto truth = parent_positions(dag, t);
    for (Method m : cfg.methods) {
      RunRecord r{job.nodes, job.samples, job.envs, job.replicate, t, m, intervened, true, {}, {}, truth, {}};
      MethodSettings ms{cfg.sampler, cfg.thresholds, {}};
      ms.sampler.seed = method_seed(base.seed(), t, m);
      ms.sampler.threads = 1;
      ms.icp.alpha = cfg.alpha;
      ms.icp.threads = 1;
      try {
        r.predicted = run_method(m, ds, ms);
        r.metrics = score_parent_set(r.predicted, truth, job.nodes - 1);
      } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace detail

/// Every (cell, replicate): random DAG and LGANM, one observational plus
/// E-1 single-node interventional environments shared by all targets, then
/// every node as target under every method.
inline GridResult run_grid(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<detail::GridJob> jobs;
  for (auto n : cfg.nodes_list)
    for (auto s : cfg.samples_list)
      for (auto e : cfg.envs_list)
        for (std::size_t r = 0; r < cfg.n_dags; ++r) jobs.push_back({n, s, e, r});
  std::vector<std::vector<RunRecord>> per_job(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) { per_job[i] = detail::run_replicate(cfg, jobs[i]); });
  GridResult g;
  for (auto& v : per_job)
    for (auto& r : v) g.records.push_back(std::move(r));
  g.summaries = aggregate(g.records);
  return g;
}

namespace detail {
inline std::string join_indices(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
  return s;
}
}  // namespace detail

inline void write_records_csv(std::ostream& os, const GridResult& g) {
  os << "nodes,samples,envs,replicate,target,method,target_intervened,status,predicted,truth,precision,recall,f1,"
        "specificity,error\n";
  for (const auto& r : g.records) {
    os << r.nodes << ',' << r.samples << ',' << r.envs << ',' << r.replicate << ',' << r.target << ','
       << to_string(r.method) << ',' << (r.target_intervened ? 1 : 0) << ',' << (r.ok ? "ok" : "failed") << ','
       << detail::join_indices(r.predicted) << ',' << detail::join_indices(r.truth) << ',';
    if (r.ok)
      os << format_double(r.metrics.precision) << ',' << format_double(r.metrics.recall) << ','
         << format_double(r.metrics.f1) << ',' << format_double(r.metrics.specificity);
    else
      os << ",,,";
    os << ',' << csv_escape(r.error) << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, const GridResult& g) {
  os << "nodes,samples,envs,method,runs,failures,precision,recall,f1,specificity\n";
  for (const auto& c : g.summaries)
    os << c.nodes << ',' << c.samples << ',' << c.envs << ',' << to_string(c.method) << ',' << c.runs << ','
       << c.failures << ',' << format_double(c.mean.precision) << ',' << format_double(c.mean.recall) << ','
       << format_double(c.mean.f1) << ',' << format_double(c.mean.specificity) << '\n';
}

inline nlohmann::json to_json(const BenchConfig& c) {
  std::vector<std::string> methods;
  for (auto m : c.methods) methods.emplace_back(to_string(m));
  return {{"nodes_list", c.nodes_list},
          {"samples_list", c.samples_list},
          {"envs_list", c.envs_list},
          {"n_dags", c.n_dags},
          {"seed", c.seed},
          {"methods", methods},
          {"thresholds", to_json(c.thresholds)},
          {"include_intervened_targets", c.include_intervened_targets},
          {"edge_prob", c.edge_prob},
          {"positive_effects", !c.lganm.random_signs},
          {"sampler", to_json(c.sampler)},
          {"alpha", c.alpha}};
}

inline nlohmann::json summary_json(const BenchConfig& cfg, const GridResult& g) {
  nlohmann::json j;
  j["config"] = to_json(cfg);
  j["conventions"] = {{"precision_empty_prediction", "1 if truth is also empty, else 0"},
                      {"recall_empty_truth", 1},
                      {"f1_zero_denominator", 0},
                      {"specificity_no_negatives", 1},
                      {"run_unit", "one (DAG, target node) pair"}};
  auto cells = nlohmann::json::array();
  for (const auto& c : g.summaries)
    cells.push_back({{"nodes", c.nodes},
                     {"samples", c.samples},
                     {"envs", c.envs},
                     {"method", to_string(c.method)},
                     {"runs", c.runs},
                     {"failures", c.failures},
                     {"precision", c.mean.precision},
                     {"recall", c.mean.recall},
                     {"f1", c.mean.f1},
                     {"specificity", c.mean.specificity}});
  j["cells"] = cells;
  return j;
}

/// Parses a grid config. Unknown keys are rejected.
inline BenchConfig bench_config_from_json(const nlohmann::json& j) {
  BenchConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    if (k == "nodes_list") c.nodes_list = v.get<std::vector<std::size_t>>();
    else if (k == "samples_list") c.samples_list = v.get<std::vector<std::size_t>>();
    else if (k == "envs_list") c.envs_list = v.get<std::vector<std::size_t>>();
    else if (k == "n_dags") c.n_dags = v.get<std::size_t>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "methods") {
      c.methods.clear();
      for (const auto& m : v) c.methods.push_back(parse_method(m.get<std::string>()));
    } else if (k == "thresholds") c.thresholds = decision_config_from_json(v);
    else if (k == "include_intervened_targets") c.include_intervened_targets = v.get<bool>();
    else if (k == "edge_prob") c.edge_prob = v.get<double>();
    else if (k == "positive_effects") c.lganm.random_signs = !v.get<bool>();
    else if (k == "sampler") c.sampler = sampler_config_from_json(v, c.sampler);
    else if (k == "alpha") c.alpha = v.get<double>();
    else throw std::invalid_argument("unknown bench config key '" + k + "'");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Timing

struct TimingConfig {
  std::size_t nodes_low = 6, nodes_high = 14;
  std::size_t samples_per_env = 200;
  std::size_t envs = 2;
  std::size_t reps = 5;
  std::uint64_t seed = 0;
  std::vector<Method> methods{Method::bhip_noncentered, Method::icp};
  SamplerConfig sampler = BenchConfig{}.sampler;
  double edge_prob = 0.5;

  void validate() const {
    if (nodes_low < 2 || nodes_high < nodes_low) throw std::invalid_argument("TimingConfig: bad node range");
    if (nodes_high - 1 > IcpOptions{}.max_predictors) throw std::invalid_argument("TimingConfig: nodes exceed the ICP cap");
    if (reps < 1) throw std::invalid_argument("TimingConfig: reps must be >= 1");
    if (envs < 2) throw std::invalid_argument("TimingConfig: envs must be >= 2");
  }
};

struct TimingRecord {
  std::size_t nodes = 0, rep = 0, target = 0;
  Method method = Method::icp;
  double seconds = 0.0;
};

struct TimingSummary {
  std::size_t nodes = 0;
  Method method = Method::icp;
  double median = 0.0, min = 0.0, max = 0.0, q25 = 0.0, q75 = 0.0;
};

struct TimingResult {
  std::vector<TimingRecord> records;
  std::vector<TimingSummary> summaries;
};

/// Wall-clock time per method for one random target of each of `reps`
/// random DAGs per node count. Runs serially so timings do not compete.
inline TimingResult run_timing(const TimingConfig& cfg) {
  cfg.validate();
  TimingResult out;
  for (std::size_t n = cfg.nodes_low; n <= cfg.nodes_high; ++n) {
    for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
      const Rng base = Rng(cfg.seed).stream({n, rep});
      Rng dag_rng = base.stream(0), scm_rng = base.stream(1), env_rng = base.stream(2), pick = base.stream(4);
      const Dag dag = random_dag(n, cfg.edge_prob, dag_rng);
      const LinearScm scm = random_lganm(dag, LganmOptions{}, scm_rng);
      const std::size_t target = pick.index(n);
      const auto specs = random_environment_specs(scm, cfg.envs, cfg.samples_per_env, target, {}, env_rng);
      const EnvironmentDataset ds = sample_environments(scm, specs, target, base.stream(3));
      for (Method m : cfg.methods) {
        MethodSettings ms{cfg.sampler, {}, {}};
        ms.sampler.seed = detail::method_seed(base.seed(), target, m);
        ms.sampler.threads = 1;
        ms.icp.threads = 1;
        const auto t0 = std::chrono::steady_clock::now();
        (void)run_method(m, ds, ms);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.records.push_back({n, rep, target, m, secs});
      }
    }
  }
  for (std::size_t n = cfg.nodes_low; n <= cfg.nodes_high; ++n) {
    for (Method m : cfg.methods) {
      std::vector<double> t;
      for (const auto& r : out.records)
        if (r.nodes == n && r.method == m) t.push_back(r.seconds);
      std::sort(t.begin(), t.end());
      out.summaries.push_back({n, m, quantile_sorted(t, 0.5), t.front(), t.back(), quantile_sorted(t, 0.25),
                               quantile_sorted(t, 0.75)});
    }
  }
  return out;
}

inline void write_timing_csv(std::ostream& os, const TimingResult& t) {
  os << "nodes,method,median_s,min_s,max_s,q25_s,q75_s\n";
  for (const auto& s : t.summaries)
    os << s.nodes << ',' << to_string(s.method) << ',' << format_double(s.median) << ',' << format_double(s.min) << ','
       << format_double(s.max) << ',' << format_double(s.q25) << ',' << format_double(s.q75) << '\n';
}

inline void write_timing_records_csv(std::ostream& os, const TimingResult& t) {
  os << "nodes,rep,target,method,seconds\n";
  for (const auto& r : t.records)
    os << r.nodes << ',' << r.rep << ',' << r.target << ',' << to_string(r.method) << ',' << format_double(r.seconds)
       << '\n';
}

/// Least-squares slope of log(median seconds) against node count.
inline double log_time_slope(const TimingResult& t, Method m) {
  std::vector<double> x, y;
  for (const auto& s : t.summaries)
    if (s.method == m) {
      x.push_back(static_cast<double>(s.nodes));
      y.push_back(std::log(s.median));
    }
  if (x.size() < 2) throw std::invalid_argument("log_time_slope: need at least two node counts");
  const double mx = detail::mean_of(x), my = detail::mean_of(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace bhip
