#pragma once

#include "bhip/data.hpp"
#include "bhip/parallel.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bhip {

struct IcpOptions {
  double alpha = 0.05;
  std::size_t max_predictors = 20;
  std::size_t threads = 0;
};

struct SubsetTest {
  std::uint32_t mask = 0;  // bit d set <=> predictor d in S
  double p_value = 1.0;
  bool accepted = false;

  std::vector<std::size_t> members() const {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < 32; ++d)
      if (mask >> d & 1U) out.push_back(d);
    return out;
  }
};

struct IcpResult {
  double alpha = 0.05;
  std::vector<std::string> predictor_names;
  std::vector<SubsetTest> tests;  // every subset, ordered by mask
  std::vector<std::size_t> intersection;
  bool rejected = false;  // no subset accepted
  std::string warning;

  std::vector<SubsetTest> accepted_sets() const {
    std::vector<SubsetTest> out;
    for (const auto& t : tests)
      if (t.accepted) out.push_back(t);
    return out;
  }
  std::vector<std::string> intersection_names() const {
    std::vector<std::string> out;
    for (auto d : intersection) out.push_back(predictor_names[d]);
    return out;
  }
};

namespace detail {

inline double welch_p(double m1, double v1, double n1, double m2, double v2, double n2) {
  const double se2 = v1 / n1 + v2 / n2;
  if (!(se2 > 0.0)) return m1 == m2 ? 1.0 : 0.0;
  const double t = (m1 - m2) / std::sqrt(se2);
  const double df = se2 * se2 / ((v1 / n1) * (v1 / n1) / (n1 - 1.0) + (v2 / n2) * (v2 / n2) / (n2 - 1.0));
  const boost::math::students_t_distribution<double> dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

inline double f_test_p(double v1, double n1, double v2, double n2) {
  if (!(v1 > 0.0) || !(v2 > 0.0)) return v1 == v2 ? 1.0 : 0.0;
  const boost::math::fisher_f_distribution<double> dist(n1 - 1.0, n2 - 1.0);
  const double f = v1 / v2;
  const double lower = boost::math::cdf(dist, f);
  const double upper = boost::math::cdf(boost::math::complement(dist, f));
  return std::min(1.0, 2.0 * std::min(lower, upper));
}

/// Pooled design with intercept and the per-row environment index.
struct IcpDesign {
  Eigen::MatrixXd z;  // n x (D+1), column 0 is the intercept
  Eigen::VectorXd y;
  std::vector<std::size_t> env;
  std::vector<double> env_n;
  Eigen::MatrixXd gram;
  Eigen::VectorXd zty;
};

inline IcpDesign make_design(const EnvironmentDataset& ds) {
  IcpDesign g;
  const auto n = static_cast<Eigen::Index>(ds.n_total());
  const auto d = static_cast<Eigen::Index>(ds.n_predictors());
  g.z.resize(n, d + 1);
  g.y.resize(n);
  Eigen::Index row = 0;
  for (std::size_t e = 0; e < ds.environments.size(); ++e) {
    const auto& b = ds.environments[e];
    const auto ne = b.X.rows();
    g.z.block(row, 0, ne, 1).setOnes();
    g.z.block(row, 1, ne, d) = b.X;
    g.y.segment(row, ne) = b.y;
    for (Eigen::Index i = 0; i < ne; ++i) g.env.push_back(e);
    g.env_n.push_back(static_cast<double>(ne));
    row += ne;
  }
  g.gram = g.z.transpose() * g.z;
  g.zty = g.z.transpose() * g.y;
  return g;
}

inline double subset_p_value(const IcpDesign& g, std::uint32_t mask) {
  std::vector<Eigen::Index> cols{0};
  for (Eigen::Index d = 0; d + 1 < g.z.cols(); ++d)
    if (mask >> d & 1U) cols.push_back(d + 1);
  const auto k = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd gs(k, k);
  Eigen::VectorXd rhs(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    rhs(i) = g.zty(cols[i]);
    for (Eigen::Index j = 0; j < k; ++j) gs(i, j) = g.gram(cols[i], cols[j]);
  }
  const Eigen::VectorXd coef = gs.ldlt().solve(rhs);

  const std::size_t n_env = g.env_n.size();
  std::vector<double> sum(n_env, 0.0), sumsq(n_env, 0.0);
  for (Eigen::Index i = 0; i < g.z.rows(); ++i) {
    double fit = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) fit += g.z(i, cols[j]) * coef(j);
    const double r = g.y(i) - fit;
    sum[g.env[i]] += r;
    sumsq[g.env[i]] += r * r;
  }
  double total_sum = 0.0, total_sq = 0.0, total_n = 0.0;
  for (std::size_t e = 0; e < n_env; ++e) {
    total_sum += sum[e];
    total_sq += sumsq[e];
    total_n += g.env_n[e];
  }
  auto moments = [](double s, double sq, double n) {
    const double m = s / n;
    return std::pair{m, std::max(0.0, (sq - n * m * m) / (n - 1.0))};
  };
  double p_min = 1.0;
  for (std::size_t e = 0; e < n_env; ++e) {
    const double n1 = g.env_n[e], n2 = total_n - n1;
    const auto [m1, v1] = moments(sum[e], sumsq[e], n1);
    const auto [m2, v2] = moments(total_sum - sum[e], total_sq - sumsq[e], n2);
    p_min = std::min({p_min, welch_p(m1, v1, n1, m2, v2, n2), f_test_p(v1, n1, v2, n2)});
  }
  return std::min(1.0, 2.0 * static_cast<double>(n_env) * p_min);
}

}  // namespace detail

/// Invariant causal prediction over every predictor subset: pooled OLS with
/// intercept, then per environment a Welch mean test and an F variance test
/// of residuals against the remaining environments, Bonferroni-combined.
inline IcpResult icp_fit(const EnvironmentDataset& ds, const IcpOptions& opt = {}) {
  ds.validate();
  if (ds.target_kind != TargetKind::continuous) throw std::invalid_argument("icp: binary targets are not supported");
  const std::size_t d = ds.n_predictors();
  if (d > opt.max_predictors || d > 31)
    throw std::invalid_argument("icp: " + std::to_string(d) + " predictors exceeds the cap of " +
                                std::to_string(std::min<std::size_t>(opt.max_predictors, 31)) + " (2^D subsets)");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw std::invalid_argument("icp: alpha must be in (0,1)");

  IcpResult r;
  r.alpha = opt.alpha;
  r.predictor_names = ds.predictor_names;
  const std::size_t n_subsets = std::size_t{1} << d;
  r.tests.resize(n_subsets);

  if (ds.n_environments() < 2) {
    for (std::size_t m = 0; m < n_subsets; ++m) r.tests[m] = {static_cast<std::uint32_t>(m), 1.0, true};
    r.warning = "single environment: every subset is trivially invariant";
    return r;
  }
  for (const auto& b : ds.environments)
    if (b.y.size() < 2) throw std::invalid_argument("icp: every environment needs at least 2 rows");

  const auto design = detail::make_design(ds);
  constexpr std::size_t kChunk = 256;
  const std::size_t n_chunks = (n_subsets + kChunk - 1) / kChunk;
  parallel_for(n_chunks, opt.threads, [&](std::size_t c) {
    for (std::size_t m = c * kChunk; m < std::min(n_subsets, (c + 1) * kChunk); ++m) {
      const auto mask = static_cast<std::uint32_t>(m);
      const double p = detail::subset_p_value(design, mask);
      r.tests[m] = {mask, p, p > opt.alpha};
    }
  });

  std::uint32_t inter = ~std::uint32_t{0};
  bool any = false;
  for (const auto& t : r.tests) {
    if (!t.accepted) continue;
    any = true;
    inter &= t.mask;
  }
  if (!any) {
    r.rejected = true;
    r.warning = "no subset accepted: the invariance model is rejected";
    return r;
  }
  r.intersection = SubsetTest{inter, 0.0, true}.members();
  return r;
}

inline nlohmann::json to_json(const IcpResult& r, bool include_all_tests = true) {
  auto names = [&](const SubsetTest& t) {
    std::vector<std::string> out;
    for (auto d : t.members()) out.push_back(r.predictor_names[d]);
    return out;
  };
  nlohmann::json j;
  j["alpha"] = r.alpha;
  j["intersection"] = r.intersection_names();
  j["rejected"] = r.rejected;
  if (!r.warning.empty()) j["warning"] = r.warning;
  auto acc = nlohmann::json::array();
  for (const auto& t : r.tests)
    if (t.accepted) acc.push_back({{"set", names(t)}, {"p_value", t.p_value}});
  j["accepted_sets"] = acc;
  if (include_all_tests) {
    auto all = nlohmann::json::array();
    for (const auto& t : r.tests) all.push_back({{"set", names(t)}, {"p_value", t.p_value}});
    j["tests"] = all;
  }
  return j;
}

}  // namespace bhip
