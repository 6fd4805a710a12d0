#include "bhip/scenarios.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

using namespace bhip;

namespace {

// OLS with intercept; returns coefficients and standard errors.
std::pair<Eigen::VectorXd, Eigen::VectorXd> ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = X;
  const Eigen::MatrixXd G = Z.transpose() * Z;
  const Eigen::VectorXd c = G.ldlt().solve(Z.transpose() * y);
  const double s2 = (y - Z * c).squaredNorm() / static_cast<double>(Z.rows() - Z.cols());
  return {c, (s2 * G.inverse().diagonal()).cwiseSqrt()};
}

}  // namespace

TEST(Bus, NoiselessUnitCoefficientsGiveExactSum) {
  BusStopParams p;
  p.daily_amplitude = p.weekly_amplitude = p.alighting_amplitude = 0.0;
  p.noise_sd = 0.0;
  p.traffic_noise_sd = 0.0;
  p.boarding_coeff = p.alighting_coeff = 1.0;
  auto ds = generate_bus_data({p, p}, 200, Rng(1));
  for (const auto& b : ds.environments)
    for (Eigen::Index i = 0; i < b.y.size(); ++i) EXPECT_EQ(b.y(i), b.X(i, 3) + b.X(i, 4));
}

TEST(Bus, ColumnTypesAndShape) {
  Rng r(2);
  auto ds = generate_bus_data(random_bus_stops(2, r), 500, r.stream(99));
  ASSERT_EQ(ds.n_environments(), 2u);
  EXPECT_EQ(ds.predictor_names, (std::vector<std::string>{"X0", "X1", "X2", "X3", "X4"}));
  bool x2_fractional = false;
  for (const auto& b : ds.environments) {
    EXPECT_EQ(b.X.rows(), 500);
    for (Eigen::Index i = 0; i < b.X.rows(); ++i) {
      EXPECT_EQ(b.X(i, 3), std::floor(b.X(i, 3)));
      EXPECT_EQ(b.X(i, 4), std::floor(b.X(i, 4)));
      EXPECT_EQ(b.X(i, 1), std::floor(b.X(i, 1)));
      EXPECT_GE(b.X(i, 1), 0.0);
      EXPECT_LE(b.X(i, 1), 6.0);
      EXPECT_GE(b.X(i, 0), 0.0);
      EXPECT_LT(b.X(i, 0), 24.0);
      x2_fractional = x2_fractional || b.X(i, 2) != std::floor(b.X(i, 2));
    }
  }
  EXPECT_TRUE(x2_fractional);
}

TEST(Bus, PerStopOlsRecoversSharedCoefficients) {
  Rng r(3);
  auto ds = generate_bus_data(random_bus_stops(2, r), 500, r.stream(99));
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> fits;
  for (const auto& b : ds.environments) {
    Eigen::MatrixXd X(b.X.rows(), 2);
    X << b.X.col(3), b.X.col(4);
    fits.push_back(ols(X, b.y));
  }
  for (const auto& [c, se] : fits)
    for (Eigen::Index k : {1, 2}) EXPECT_LE(std::abs(c(k) - 2.0), 3.0 * se(k));
}

TEST(Bus, TrafficIsIndependentOfYGivenParents) {
  Rng r(4);
  auto ds = generate_bus_data(random_bus_stops(2, r), 50000, r.stream(99));
  // Partial correlation: residualize Y and X2 on (X3, X4) with per-stop means.
  std::vector<double> ry, rx;
  for (const auto& b : ds.environments) {
    Eigen::MatrixXd X(b.X.rows(), 2);
    X << b.X.col(3), b.X.col(4);
    Eigen::MatrixXd Z(X.rows(), 3);
    Z << Eigen::VectorXd::Ones(X.rows()), X;
    auto resid = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      return v - Z * (Z.transpose() * Z).ldlt().solve(Z.transpose() * v);
    };
    Eigen::VectorXd a = resid(b.y), c = resid(b.X.col(2));
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      ry.push_back(a(i));
      rx.push_back(c(i));
    }
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < ry.size(); ++i) {
    sxy += rx[i] * ry[i];
    sxx += rx[i] * rx[i];
    syy += ry[i] * ry[i];
  }
  EXPECT_NEAR(sxy / std::sqrt(sxx * syy), 0.0, 0.02);
}

TEST(Bus, SharedCoefficientsByDefault) {
  Rng r(5);
  auto stops = random_bus_stops(4, r);
  for (const auto& s : stops) {
    EXPECT_EQ(s.boarding_coeff, stops[0].boarding_coeff);
    EXPECT_EQ(s.alighting_coeff, stops[0].alighting_coeff);
  }
  BusRandomization per;
  per.per_stop_coefficients = true;
  auto varied = random_bus_stops(4, r, per);
  EXPECT_NE(varied[0].boarding_coeff, varied[1].boarding_coeff);
}

TEST(Bus, ErrorsAndDeterminism) {
  Rng r(6);
  auto stops = random_bus_stops(2, r);
  EXPECT_THROW(generate_bus_data({stops[0]}, 10, Rng(1)), std::invalid_argument);
  EXPECT_THROW(generate_bus_data(stops, 0, Rng(1)), std::invalid_argument);
  auto a = generate_bus_data(stops, 50, Rng(7));
  auto b = generate_bus_data(stops, 50, Rng(7));
  EXPECT_EQ(a.environments[1].X, b.environments[1].X);
  EXPECT_EQ(a.environments[1].y, b.environments[1].y);
}

TEST(Bus, ParamsJsonRoundTripAndUnknownKey) {
  BusStopParams p;
  p.peak_hour = 9.5;
  p.noise_sd = 1.25;
  auto q = bus_stop_from_json(to_json(p));
  EXPECT_EQ(q.peak_hour, 9.5);
  EXPECT_EQ(q.noise_sd, 1.25);
  EXPECT_THROW(bus_stop_from_json({{"peak_hours", 3}}), std::invalid_argument);
  EXPECT_THROW(bus_stop_from_json({{"peak_day", 9}}), std::invalid_argument);
}
