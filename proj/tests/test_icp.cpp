#include "bhip/graph_scm.hpp"
#include "bhip/icp.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bhip;

TEST(IcpTests, WelchMatchesReference) {
  EXPECT_NEAR(detail::welch_p(0.3, 1.2, 40, -0.1, 0.8, 55), 0.06199621023032324, 1e-10);
  EXPECT_NEAR(detail::welch_p(1.0, 2.0, 10, 1.0, 2.0, 12), 1.0, 1e-12);
  EXPECT_NEAR(detail::welch_p(0.0, 0.5, 200, 0.25, 0.4, 300), 6.485553914275995e-05, 1e-12);
}

TEST(IcpTests, VarianceRatioMatchesReference) {
  EXPECT_NEAR(detail::f_test_p(1.2, 40, 0.8, 55), 0.16658855931349556, 1e-10);
  EXPECT_NEAR(detail::f_test_p(0.5, 200, 0.9, 300), 1.0161488149323582e-05, 1e-12);
  EXPECT_NEAR(detail::f_test_p(1.0, 10, 1.0, 12), 0.9828740810919765, 1e-10);
}

TEST(IcpTests, SubsetPValueMatchesReference) {
  Eigen::MatrixXd x0(15, 1), x1(15, 1);
  Eigen::VectorXd y0(15), y1(15);
  for (int i = 0; i < 30; ++i) {
    const double x = std::sin(i);
    const double y = 0.8 * x + 0.3 * std::cos(2.3 * i) + (i >= 15 ? 0.5 : 0.0) * std::sin(5.0 * i);
    if (i < 15) {
      x0(i, 0) = x;
      y0(i) = y;
    } else {
      x1(i - 15, 0) = x;
      y1(i - 15) = y;
    }
  }
  EnvironmentDataset ds;
  ds.predictor_names = {"x"};
  ds.target_name = "y";
  ds.environments = {{"0", x0, y0}, {"1", x1, y1}};
  const auto r = icp_fit(ds);
  ASSERT_EQ(r.tests.size(), 2u);
  EXPECT_NEAR(r.tests[0].p_value, 1.0, 1e-12);
  EXPECT_NEAR(r.tests[1].p_value, 0.29951265035709973, 1e-10);
}

TEST(IcpTests, RecoversParentsUnderStrongInterventions) {
  // x0 -> y -> x1, shifts on x0 and on x1.
  Dag dag(3, {{0, 1}, {1, 2}});
  LinearScm scm{dag, {1.5, 2.0}, {1.0, 0.5, 0.5}, {0.0, 0.0, 0.0}};
  std::vector<EnvironmentSpec> specs(3);
  for (auto& s : specs) s.n_samples = 1000;
  specs[1].interventions.push_back({0, DoDistribution{3.0, 4.0}});
  specs[2].interventions.push_back({2, DoDistribution{-3.0, 1.0}});
  Rng rng(1);
  const auto ds = split_target(sample_environment_matrices(scm, specs, rng), 1);
  const auto r = icp_fit(ds);
  EXPECT_EQ(r.intersection, std::vector<std::size_t>{0});
  EXPECT_FALSE(r.rejected);
  EXPECT_EQ(r.intersection_names(), std::vector<std::string>{"x0"});
}

TEST(IcpTests, CoverageAndIntersectionProperty) {
  std::size_t covered = 0;
  const std::size_t runs = 200;
  for (std::size_t t = 0; t < runs; ++t) {
    Rng rng = Rng(2).stream(t);
    Rng g = rng.stream(0), w = rng.stream(1), e = rng.stream(2);
    const auto dag = random_dag(4, 0.5, g);
    const auto scm = random_lganm(dag, LganmOptions{}, w);
    const std::size_t target = e.index(4);
    const auto specs = random_environment_specs(scm, 2, 500, target, InterventionPolicy{}, e);
    const auto ds = split_target(sample_environment_matrices(scm, specs, rng.stream(3)), target);
    const auto r = icp_fit(ds);
    const auto truth = parent_positions(dag, target);
    covered += std::includes(truth.begin(), truth.end(), r.intersection.begin(), r.intersection.end()) ? 1 : 0;
    for (const auto& s : r.accepted_sets()) {
      const auto m = s.members();
      EXPECT_TRUE(std::includes(m.begin(), m.end(), r.intersection.begin(), r.intersection.end()));
    }
    if (r.rejected) EXPECT_TRUE(r.intersection.empty());
    for (const auto& s : r.tests) EXPECT_EQ(s.accepted, s.p_value > 0.05);
  }
  EXPECT_GE(static_cast<double>(covered) / runs, 0.90);
}

TEST(IcpTests, SingleEnvironmentAcceptsEverything) {
  Rng rng(3);
  const auto ds = test::random_dataset(1, 50, {1.0, 0.5}, TargetKind::continuous, rng);
  const auto r = icp_fit(ds);
  EXPECT_EQ(r.accepted_sets().size(), 4u);
  EXPECT_TRUE(r.intersection.empty());
  EXPECT_FALSE(r.warning.empty());
}

TEST(IcpTests, RejectedModelFlagged) {
  // Target distribution shifts with nothing to explain it.
  Rng rng(4);
  auto ds = test::random_dataset(2, 300, {1.0}, TargetKind::continuous, rng);
  ds.environments[1].y.array() += 5.0;
  const auto r = icp_fit(ds);
  EXPECT_TRUE(r.rejected);
  EXPECT_TRUE(r.intersection.empty());
  EXPECT_FALSE(r.warning.empty());
  EXPECT_EQ(to_json(r)["rejected"], true);
}

TEST(IcpTests, InputErrors) {
  Rng rng(5);
  auto bin = test::random_dataset(2, 30, {1.0}, TargetKind::binary, rng);
  EXPECT_THROW(icp_fit(bin), std::invalid_argument);
  auto wide = test::random_dataset(2, 30, std::vector<double>(6, 0.1), TargetKind::continuous, rng);
  EXPECT_THROW(icp_fit(wide, IcpOptions{0.05, 5}), std::invalid_argument);
  auto ok = test::random_dataset(2, 30, {1.0}, TargetKind::continuous, rng);
  EXPECT_THROW(icp_fit(ok, IcpOptions{1.5}), std::invalid_argument);
}

TEST(IcpTests, ThreadCountDoesNotChangeResult) {
  Rng rng(6);
  const auto ds = test::random_dataset(3, 100, {1.0, 0.0, 0.5, 0.0, 0.2, 0.0, 0.0, 0.3, 0.0}, TargetKind::continuous, rng);
  const auto a = icp_fit(ds, IcpOptions{0.05, 20, 1});
  const auto b = icp_fit(ds, IcpOptions{0.05, 20, 4});
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}
