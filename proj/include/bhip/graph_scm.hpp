#pragma once

#include "bhip/data.hpp"
#include "bhip/rng.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <compare>
#include <numeric>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace bhip {

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  auto operator<=>(const Edge&) const = default;
};

/// Directed acyclic graph over nodes [0, n_nodes). Edges are kept sorted.
class Dag {
 public:
  Dag() = default;
  Dag(std::size_t n_nodes, std::vector<Edge> edges) : n_(n_nodes), edges_(std::move(edges)) {
    if (n_ == 0) throw std::invalid_argument("Dag: n_nodes must be positive");
    std::sort(edges_.begin(), edges_.end());
    if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
      throw std::invalid_argument("Dag: duplicate edge");
    parents_.assign(n_, {});
    for (const auto& e : edges_) {
      if (e.from >= n_ || e.to >= n_) throw std::invalid_argument("Dag: edge endpoint out of range");
      if (e.from == e.to) throw std::invalid_argument("Dag: self-loop");
      parents_[e.to].push_back(e.from);
    }
    order_ = kahn_order();
    if (order_.size() != n_) throw std::invalid_argument("Dag: graph has a cycle");
  }

  std::size_t n_nodes() const noexcept { return n_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& topological_order() const noexcept { return order_; }

  const std::vector<std::size_t>& parents(std::size_t node) const {
    if (node >= n_) throw std::out_of_range("Dag: node index out of range");
    return parents_[node];
  }

  bool has_edge(std::size_t from, std::size_t to) const {
    return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
  }

  std::size_t edge_index(const Edge& e) const {
    auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
    if (it == edges_.end() || *it != e) throw std::invalid_argument("Dag: no such edge");
    return static_cast<std::size_t>(it - edges_.begin());
  }

 private:
  std::vector<std::size_t> kahn_order() const {
    std::vector<std::size_t> indeg(n_, 0), order;
    std::vector<std::vector<std::size_t>> children(n_);
    for (const auto& e : edges_) {
      ++indeg[e.to];
      children[e.from].push_back(e.to);
    }
    std::vector<std::size_t> ready;
    for (std::size_t i = n_; i-- > 0;)
      if (indeg[i] == 0) ready.push_back(i);
    while (!ready.empty()) {
      // Smallest ready index first, so the order is canonical.
      auto it = std::min_element(ready.begin(), ready.end());
      std::size_t v = *it;
      ready.erase(it);
      order.push_back(v);
      for (auto c : children[v])
        if (--indeg[c] == 0) ready.push_back(c);
    }
    return order;
  }

  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::size_t> order_;
};

inline const std::vector<std::size_t>& parents(const Dag& dag, std::size_t node) { return dag.parents(node); }

/// Erdos-Renyi DAG: each pair that is forward in a uniformly random node
/// permutation becomes an edge with probability edge_prob.
inline Dag random_dag(std::size_t n_nodes, double edge_prob, Rng& rng) {
  if (n_nodes < 2) throw std::invalid_argument("random_dag: n_nodes must be at least 2");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw std::invalid_argument("random_dag: edge_prob must be in [0,1]");
  std::vector<std::size_t> perm(n_nodes);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n_nodes - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n_nodes; ++i)
    for (std::size_t j = i + 1; j < n_nodes; ++j)
      if (rng.uniform() < edge_prob) edges.push_back({perm[i], perm[j]});
  return Dag(n_nodes, std::move(edges));
}

// ---------------------------------------------------------------------------
// Linear-Gaussian SCM

/// X_d := mean_d + sum_i w_{i->d} X_i + eps_d,  eps_d ~ N(0, noise_var_d).
struct LinearScm {
  Dag dag;
  std::vector<double> weights;  // aligned with dag.edges()
  std::vector<double> noise_vars;
  std::vector<double> means;

  double weight(std::size_t from, std::size_t to) const { return weights[dag.edge_index({from, to})]; }

  void validate() const {
    const auto n = dag.n_nodes();
    if (weights.size() != dag.edges().size()) throw std::invalid_argument("LinearScm: one weight per edge required");
    if (noise_vars.size() != n || means.size() != n)
      throw std::invalid_argument("LinearScm: noise_vars and means need one entry per node");
    for (double v : noise_vars)
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("LinearScm: noise variances must be >= 0");
    for (double w : weights)
      if (!std::isfinite(w)) throw std::invalid_argument("LinearScm: non-finite weight");
  }
};

struct LganmOptions {
  double weight_low = 1.0;
  double weight_high = 5.0;
  double noise_low = 0.0;
  double noise_high = 0.3;
  bool random_signs = true;
  double noise_floor = 1e-3;
};

inline LinearScm random_lganm(const Dag& dag, const LganmOptions& o, Rng& rng) {
  if (!(o.weight_low <= o.weight_high)) throw std::invalid_argument("random_lganm: weight range is reversed");
  if (!(0.0 <= o.noise_low && o.noise_low <= o.noise_high))
    throw std::invalid_argument("random_lganm: noise range must satisfy 0 <= low <= high");
  LinearScm scm;
  scm.dag = dag;
  for (std::size_t i = 0; i < dag.edges().size(); ++i) {
    double w = rng.uniform(o.weight_low, o.weight_high);
    if (o.random_signs && rng.bernoulli(0.5)) w = -w;
    scm.weights.push_back(w);
  }
  for (std::size_t d = 0; d < dag.n_nodes(); ++d)
    scm.noise_vars.push_back(std::max(o.noise_floor, rng.uniform(o.noise_low, o.noise_high)));
  scm.means.assign(dag.n_nodes(), 0.0);
  return scm;
}

inline LinearScm random_lganm(const Dag& dag, double weight_low, double weight_high, double noise_low,
                              double noise_high, Rng& rng) {
  LganmOptions o;
  o.weight_low = weight_low;
  o.weight_high = weight_high;
  o.noise_low = noise_low;
  o.noise_high = noise_high;
  return random_lganm(dag, o, rng);
}

/// n x n_nodes matrix of i.i.d. rows, columns generated in topological order.
inline Eigen::MatrixXd sample(const LinearScm& scm, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample: n must be positive");
  scm.validate();
  const auto rows = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd X(rows, static_cast<Eigen::Index>(scm.dag.n_nodes()));
  for (std::size_t d : scm.dag.topological_order()) {
    const auto col = static_cast<Eigen::Index>(d);
    X.col(col).setConstant(scm.means[d]);
    for (std::size_t p : scm.dag.parents(d)) X.col(col) += scm.weight(p, d) * X.col(static_cast<Eigen::Index>(p));
    const double sd = std::sqrt(scm.noise_vars[d]);
    if (sd > 0.0)
      for (Eigen::Index i = 0; i < rows; ++i) X(i, col) += sd * rng.normal();
  }
  return X;
}

struct DoConstant {
  double value = 0.0;
};
struct DoDistribution {
  double mean = 0.0;
  double variance = 1.0;
};

struct Intervention {
  std::size_t node = 0;
  std::variant<DoConstant, DoDistribution> kind;
};

/// Hard intervention: severs the node's incoming edges and replaces its
/// mechanism. Every other mechanism is copied unchanged.
inline LinearScm intervene(const LinearScm& scm, const Intervention& iv) {
  if (iv.node >= scm.dag.n_nodes()) throw std::invalid_argument("intervene: node index out of range");
  std::vector<Edge> kept;
  std::vector<double> kept_w;
  for (std::size_t i = 0; i < scm.dag.edges().size(); ++i) {
    if (scm.dag.edges()[i].to == iv.node) continue;
    kept.push_back(scm.dag.edges()[i]);
    kept_w.push_back(scm.weights[i]);
  }
  LinearScm out;
  out.dag = Dag(scm.dag.n_nodes(), std::move(kept));
  out.weights = std::move(kept_w);
  out.noise_vars = scm.noise_vars;
  out.means = scm.means;
  if (const auto* c = std::get_if<DoConstant>(&iv.kind)) {
    out.means[iv.node] = c->value;
    out.noise_vars[iv.node] = 0.0;
  } else {
    const auto& dd = std::get<DoDistribution>(iv.kind);
    if (!(dd.variance >= 0.0)) throw std::invalid_argument("intervene: variance must be >= 0");
    out.means[iv.node] = dd.mean;
    out.noise_vars[iv.node] = dd.variance;
  }
  return out;
}

struct EnvironmentSpec {
  std::vector<Intervention> interventions;  // empty: observational
  std::size_t n_samples = 1;
};

struct InterventionPolicy {
  bool allow_target = false;  // true reproduces the all-nodes evaluation
  double mean_low = -4.0;
  double mean_high = 4.0;
  double variance = 1.0;
};

/// One observational environment followed by n_envs - 1 single-node
/// do-distribution interventions on distinct nodes.
inline std::vector<EnvironmentSpec> random_environment_specs(const LinearScm& scm, std::size_t n_envs,
                                                             std::size_t n_samples, std::size_t target,
                                                             const InterventionPolicy& policy, Rng& rng) {
  if (n_envs < 1) throw std::invalid_argument("random_environment_specs: need at least one environment");
  std::vector<std::size_t> candidates;
  for (std::size_t v = 0; v < scm.dag.n_nodes(); ++v)
    if (policy.allow_target || v != target) candidates.push_back(v);
  if (candidates.size() < n_envs - 1)
    throw std::invalid_argument("random_environment_specs: not enough nodes for distinct interventions");
  std::vector<EnvironmentSpec> specs(n_envs);
  for (auto& s : specs) s.n_samples = n_samples;
  for (std::size_t e = 1; e < n_envs; ++e) {
    std::size_t pick = rng.index(candidates.size());
    std::size_t node = candidates[pick];
    candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
    specs[e].interventions.push_back({node, DoDistribution{rng.uniform(policy.mean_low, policy.mean_high), policy.variance}});
  }
  return specs;
}

/// Raw node matrices, one per environment. Environment e draws from its own
/// stream rng.stream(e).
inline std::vector<Eigen::MatrixXd> sample_environment_matrices(const LinearScm& scm,
                                                                const std::vector<EnvironmentSpec>& specs,
                                                                const Rng& rng) {
  if (specs.empty()) throw std::invalid_argument("sample_environments: need at least one environment spec");
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t e = 0; e < specs.size(); ++e) {
    if (specs[e].n_samples < 1) throw std::invalid_argument("sample_environments: n_samples must be positive");
    LinearScm env = scm;
    for (const auto& iv : specs[e].interventions) env = intervene(env, iv);
    Rng r = rng.stream(e);
    out.push_back(sample(env, specs[e].n_samples, r));
  }
  return out;
}

/// Node indices that become predictors x0..x{D-1} when `target` is y.
inline std::vector<std::size_t> predictor_nodes(std::size_t n_nodes, std::size_t target) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < n_nodes; ++v)
    if (v != target) out.push_back(v);
  return out;
}

/// True parents of `target` expressed as predictor positions.
inline std::vector<std::size_t> parent_positions(const Dag& dag, std::size_t target) {
  std::vector<std::size_t> out;
  for (std::size_t p : dag.parents(target)) out.push_back(p < target ? p : p - 1);
  std::sort(out.begin(), out.end());
  return out;
}

inline EnvironmentDataset split_target(const std::vector<Eigen::MatrixXd>& mats, std::size_t target) {
  if (mats.empty()) throw std::invalid_argument("split_target: no environments");
  const auto n_nodes = static_cast<std::size_t>(mats.front().cols());
  if (target >= n_nodes) throw std::invalid_argument("split_target: target index out of range");
  const auto nodes = predictor_nodes(n_nodes, target);
  EnvironmentDataset ds;
  ds.target_name = "y";
  for (std::size_t k = 0; k < nodes.size(); ++k) ds.predictor_names.push_back("x" + std::to_string(k));
  for (std::size_t e = 0; e < mats.size(); ++e) {
    EnvironmentBlock b;
    b.label = std::to_string(e);
    b.y = mats[e].col(static_cast<Eigen::Index>(target));
    b.X.resize(mats[e].rows(), static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t k = 0; k < nodes.size(); ++k)
      b.X.col(static_cast<Eigen::Index>(k)) = mats[e].col(static_cast<Eigen::Index>(nodes[k]));
    ds.environments.push_back(std::move(b));
  }
  return ds;
}

inline EnvironmentDataset sample_environments(const LinearScm& scm, const std::vector<EnvironmentSpec>& specs,
                                              std::size_t target, const Rng& rng) {
  if (target >= scm.dag.n_nodes()) throw std::invalid_argument("sample_environments: target index out of range");
  return split_target(sample_environment_matrices(scm, specs, rng), target);
}

// ---------------------------------------------------------------------------
// JSON: {nodes, edges:[{from,to,weight}], noise_vars, means}

inline nlohmann::json to_json(const LinearScm& scm) {
  nlohmann::json j;
  j["nodes"] = scm.dag.n_nodes();
  j["edges"] = nlohmann::json::array();
  for (std::size_t i = 0; i < scm.dag.edges().size(); ++i)
    j["edges"].push_back({{"from", scm.dag.edges()[i].from}, {"to", scm.dag.edges()[i].to}, {"weight", scm.weights[i]}});
  j["noise_vars"] = scm.noise_vars;
  j["means"] = scm.means;
  return j;
}

inline LinearScm scm_from_json(const nlohmann::json& j) {
  const auto n = j.at("nodes").get<std::size_t>();
  std::vector<std::pair<Edge, double>> ew;
  for (const auto& e : j.at("edges")) ew.push_back({{e.at("from").get<std::size_t>(), e.at("to").get<std::size_t>()},
                                                    e.at("weight").get<double>()});
  std::sort(ew.begin(), ew.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Edge> edges;
  LinearScm scm;
  for (const auto& [e, w] : ew) {
    edges.push_back(e);
    scm.weights.push_back(w);
  }
  scm.dag = Dag(n, std::move(edges));
  scm.noise_vars = j.at("noise_vars").get<std::vector<double>>();
  scm.means = j.contains("means") ? j.at("means").get<std::vector<double>>() : std::vector<double>(n, 0.0);
  scm.validate();
  return scm;
}

}  // namespace bhip
