#pragma once

#include "bhip/data.hpp"
#include "bhip/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace bhip {

/// Per-stop parameters of the bus-dwelling generator.
///
/// Graph: X0 (time of day), X1 (day of week) -> X2 (traffic), X3 (boarding),
/// X4 (alighting); X3, X4 -> Y (dwell time). X2 has no edge into Y.
struct BusStopParams {
  double peak_hour = 8.0;
  double daily_amplitude = 0.5;
  int peak_day = 0;
  double weekly_amplitude = 0.2;
  double boarding_base_rate = 6.0;
  double alighting_base_rate = 4.0;
  double boarding_coeff = 2.0;
  double alighting_coeff = 2.0;
  double noise_sd = 3.5;
  // Alighting follows the route profile rather than the stop's own peak.
  double alighting_peak_hour = 17.0;
  double alighting_amplitude = 0.3;
  double traffic_base = 1.0;
  double traffic_noise_sd = 0.2;

  void validate() const {
    if (!(boarding_base_rate > 0.0) || !(alighting_base_rate > 0.0))
      throw std::invalid_argument("BusStopParams: Poisson base rates must be positive");
    if (!(noise_sd >= 0.0) || !(traffic_noise_sd >= 0.0))
      throw std::invalid_argument("BusStopParams: noise sd must be non-negative");
    if (peak_day < 0 || peak_day > 6) throw std::invalid_argument("BusStopParams: peak_day must be in 0..6");
  }
};

struct BusRandomization {
  double peak_hour_low = 6.0, peak_hour_high = 20.0;
  double daily_amplitude_low = 0.2, daily_amplitude_high = 0.8;
  double weekly_amplitude_low = 0.05, weekly_amplitude_high = 0.3;
  double boarding_rate_low = 2.0, boarding_rate_high = 10.0;
  /// When set, Y-mechanism coefficients are redrawn for every stop, which
  /// breaks invariance on purpose.
  bool per_stop_coefficients = false;
  double coeff_low = 1.0, coeff_high = 3.0;
};

/// Stops that differ in covariate distributions but share the Y mechanism
/// (unless per_stop_coefficients is set).
inline std::vector<BusStopParams> random_bus_stops(std::size_t n_stops, Rng& rng, const BusRandomization& r = {},
                                                   const BusStopParams& base = {}) {
  std::vector<BusStopParams> stops;
  for (std::size_t k = 0; k < n_stops; ++k) {
    BusStopParams p = base;
    p.peak_hour = rng.uniform(r.peak_hour_low, r.peak_hour_high);
    p.daily_amplitude = rng.uniform(r.daily_amplitude_low, r.daily_amplitude_high);
    p.peak_day = static_cast<int>(rng.index(7));
    p.weekly_amplitude = rng.uniform(r.weekly_amplitude_low, r.weekly_amplitude_high);
    p.boarding_base_rate = rng.uniform(r.boarding_rate_low, r.boarding_rate_high);
    if (r.per_stop_coefficients) {
      p.boarding_coeff = rng.uniform(r.coeff_low, r.coeff_high);
      p.alighting_coeff = rng.uniform(r.coeff_low, r.coeff_high);
    }
    stops.push_back(p);
  }
  return stops;
}

namespace detail {
inline double modulation(double t, double peak, double period) {
  return std::cos(2.0 * std::numbers::pi * (t - peak) / period);
}
}  // namespace detail

/// One environment per stop, predictors X0..X4, target Y.
inline EnvironmentDataset generate_bus_data(const std::vector<BusStopParams>& stops, std::size_t n_per_stop,
                                            const Rng& rng) {
  if (stops.size() < 2) throw std::invalid_argument("generate_bus_data: need at least 2 stops");
  if (n_per_stop < 1) throw std::invalid_argument("generate_bus_data: n_per_stop must be positive");
  constexpr double kRateFloor = 1e-3;
  EnvironmentDataset ds;
  ds.target_name = "Y";
  ds.predictor_names = {"X0", "X1", "X2", "X3", "X4"};
  const auto n = static_cast<Eigen::Index>(n_per_stop);
  for (std::size_t k = 0; k < stops.size(); ++k) {
    const auto& p = stops[k];
    p.validate();
    Rng r = rng.stream(k);
    EnvironmentBlock b;
    b.label = std::to_string(k);
    b.X.resize(n, 5);
    b.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = r.uniform(0.0, 24.0 * 7.0);  // one simulated week, hours
      const double hour = std::fmod(t, 24.0);
      const double day = std::floor(t / 24.0);
      const double daily = detail::modulation(hour, p.peak_hour, 24.0);
      const double weekly = detail::modulation(day, p.peak_day, 7.0);
      const double traffic =
          p.traffic_base * (1.0 + p.daily_amplitude * daily + p.weekly_amplitude * weekly) + p.traffic_noise_sd * r.normal();
      const double board_rate =
          std::max(kRateFloor, p.boarding_base_rate * (1.0 + p.daily_amplitude * daily + p.weekly_amplitude * weekly));
      const double alight_rate = std::max(
          kRateFloor, p.alighting_base_rate * (1.0 + p.alighting_amplitude * detail::modulation(hour, p.alighting_peak_hour, 24.0)));
      const auto boarding = static_cast<double>(r.poisson(board_rate));
      const auto alighting = static_cast<double>(r.poisson(alight_rate));
      b.X(i, 0) = hour;
      b.X(i, 1) = day;
      b.X(i, 2) = traffic;
      b.X(i, 3) = boarding;
      b.X(i, 4) = alighting;
      b.y(i) = p.boarding_coeff * boarding + p.alighting_coeff * alighting + p.noise_sd * r.normal();
    }
    ds.environments.push_back(std::move(b));
  }
  return ds;
}

inline nlohmann::json to_json(const BusStopParams& p) {
  return {{"peak_hour", p.peak_hour},
          {"daily_amplitude", p.daily_amplitude},
          {"peak_day", p.peak_day},
          {"weekly_amplitude", p.weekly_amplitude},
          {"boarding_base_rate", p.boarding_base_rate},
          {"alighting_base_rate", p.alighting_base_rate},
          {"boarding_coeff", p.boarding_coeff},
          {"alighting_coeff", p.alighting_coeff},
          {"noise_sd", p.noise_sd},
          {"alighting_peak_hour", p.alighting_peak_hour},
          {"alighting_amplitude", p.alighting_amplitude},
          {"traffic_base", p.traffic_base},
          {"traffic_noise_sd", p.traffic_noise_sd}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline BusStopParams bus_stop_from_json(const nlohmann::json& j) {
  BusStopParams p;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    if (k == "peak_hour") p.peak_hour = v.get<double>();
    else if (k == "daily_amplitude") p.daily_amplitude = v.get<double>();
    else if (k == "peak_day") p.peak_day = v.get<int>();
    else if (k == "weekly_amplitude") p.weekly_amplitude = v.get<double>();
    else if (k == "boarding_base_rate") p.boarding_base_rate = v.get<double>();
    else if (k == "alighting_base_rate") p.alighting_base_rate = v.get<double>();
    else if (k == "boarding_coeff") p.boarding_coeff = v.get<double>();
    else if (k == "alighting_coeff") p.alighting_coeff = v.get<double>();
    else if (k == "noise_sd") p.noise_sd = v.get<double>();
    else if (k == "alighting_peak_hour") p.alighting_peak_hour = v.get<double>();
    else if (k == "alighting_amplitude") p.alighting_amplitude = v.get<double>();
    else if (k == "traffic_base") p.traffic_base = v.get<double>();
    else if (k == "traffic_noise_sd") p.traffic_noise_sd = v.get<double>();
    else throw std::invalid_argument("unknown bus stop parameter '" + k + "'");
  }
  p.validate();
  return p;
}

}  // namespace bhip
