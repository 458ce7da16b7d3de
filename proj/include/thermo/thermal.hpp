#pragma once

// Analytical RC temperature model, utilization-to-power curve, fan speed
// estimation and computing/cooling energy accounting.

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "thermo/common.hpp"
#include "thermo/model_io.hpp"
#include "thermo/regress.hpp"
#include "thermo/telemetry.hpp"

namespace thermo::thermal {

inline constexpr double kKelvinOffset = 273.15;

inline double kelvin_to_celsius(double k) { return k - kKelvinOffset; }

struct RcParams {
  double r = 0.34;             // K/W
  double c = 340.0;            // J/K
  double t_initial_k = 318.0;  // K

  double tau() const { return r * c; }
};

// T(t) = P R + T_in + (T_0 - P R - T_in) exp(-t / RC); temperatures in degC
// except the initial condition, which is given in kelvin.
inline double rc_temperature(double p, double t_in, double t, const RcParams& rc) {
  if (!(rc.r > 0.0) || !(rc.c > 0.0)) throw InvalidArgument("rc_temperature: R and C must be > 0");
  if (!(rc.t_initial_k > 0.0)) throw InvalidArgument("rc_temperature: initial temperature must be > 0 K");
  if (!(t >= 0.0)) throw InvalidArgument("rc_temperature: t must be >= 0");
  const double steady = p * rc.r + t_in;
  const double t0 = kelvin_to_celsius(rc.t_initial_k);
  return steady + (t0 - steady) * std::exp(-t / rc.tau());
}

// ---------------------------------------------------------------------------
// power
// ---------------------------------------------------------------------------

struct PowerCurve {
  std::vector<std::pair<double, double>> points;  // (utilization %, watts)

  void validate() const {
    if (points.size() < 2) throw InvalidArgument("power curve needs at least 2 points");
    if (points.front().first != 0.0 || points.back().first != 100.0) {
      throw InvalidArgument("power curve must span utilization 0 to 100");
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (!(points[i].first > points[i - 1].first)) throw InvalidArgument("power curve utilization must increase");
      if (points[i].second < points[i - 1].second) throw InvalidArgument("power curve watts must not decrease");
    }
    for (const auto& [u, w] : points) {
      if (!std::isfinite(w) || w < 0.0) throw InvalidArgument("power curve watts must be finite and >= 0");
    }
  }

  double idle() const { return points.front().second; }
  double peak() const { return points.back().second; }

  // "u:w,u:w,..." as used in config files.
  std::string to_string() const {
    std::string out;
    for (const auto& [u, w] : points) {
      if (!out.empty()) out += ',';
      out += format_double(u) + ':' + format_double(w);
    }
    return out;
  }

  static PowerCurve parse(std::string_view text) {
    PowerCurve c;
    for (const auto& item : split(text, ',')) {
      const auto parts = split(item, ':');
      if (parts.size() != 2) throw FormatError("power curve point must be util:watts, got '" + item + "'");
      c.points.emplace_back(require_double(parts[0], "power curve utilization"),
                            require_double(parts[1], "power curve watts"));
    }
    c.validate();
    return c;
  }

  bool operator==(const PowerCurve&) const = default;
};

// Stand-in for a measured server curve: 11 knots, 56 W idle to 380 W peak.
// Not taken from any specific benchmark submission.
inline PowerCurve default_power_curve() {
  return {{{0, 56}, {10, 90}, {20, 118}, {30, 145}, {40, 172}, {50, 200},
           {60, 231}, {70, 264}, {80, 300}, {90, 339}, {100, 380}}};
}

inline double power_at(const PowerCurve& curve, double utilization) {
  if (!(utilization >= 0.0 && utilization <= 100.0)) {
    throw InvalidArgument(concat("power_at: utilization ", utilization, " outside [0, 100]"));
  }
  const auto& pts = curve.points;
  if (pts.size() < 2) throw InvalidArgument("power curve needs at least 2 points");
  std::size_t i = 1;
  while (i + 1 < pts.size() && pts[i].first < utilization) ++i;
  const auto [u0, w0] = pts[i - 1];
  const auto [u1, w1] = pts[i];
  if (utilization == u0) return w0;
  if (utilization == u1) return w1;
  return w0 + (w1 - w0) * (utilization - u0) / (u1 - u0);
}

// ---------------------------------------------------------------------------
// fans
// ---------------------------------------------------------------------------

// Columns used to estimate fan speeds: every feature except the four fans.
inline std::vector<std::string> non_fan_features() {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < kFan1; ++j) out.push_back(feature_names()[j]);
  return out;
}

struct FanModels {
  std::array<LinearModel, 4> models;
  std::array<Bounds, 4> bounds;
  bool fitted = false;

  std::array<double, 4> estimate(std::span<const double> x) const {
    if (!fitted) throw InvalidArgument("fan models are not fitted");
    std::array<double, 4> out{};
    for (std::size_t k = 0; k < 4; ++k) out[k] = bounds[k].clamp(models[k].predict(x));
    return out;
  }

  bool operator==(const FanModels&) const = default;
};

// One OLS fit per fan column on the non-fan columns of a full telemetry
// dataset.
inline FanModels fit_fan_models(const Dataset& d) {
  const auto inputs = non_fan_features();
  std::vector<std::size_t> cols;
  for (const auto& name : inputs) cols.push_back(d.column_index(name));
  const Dataset x = d.select_columns(cols);
  FanModels fm;
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t fan_col = d.column_index(feature_names()[kFan1 + k]);
    Dataset fan = x;
    fan.target = d.column(fan_col);
    fan.recompute_bounds();
    fm.models[k] = fit_ols(fan);
    fm.bounds[k] = fan.target_bounds;
  }
  fm.fitted = true;
  return fm;
}

inline std::string serialize(const FanModels& fm) {
  if (!fm.fitted) throw InvalidArgument("fan models are not fitted");
  std::string out = "thermo-fans 1\n";
  for (std::size_t k = 0; k < 4; ++k) {
    io::Writer w;
    w.field("fan", k, fm.bounds[k].min, fm.bounds[k].max);
    out += w.str();
    out += serialize(fm.models[k]);
  }
  return out;
}

inline FanModels parse_fan_models(std::string_view text) {
  io::Reader r(text, "fan models");
  if (r.integer("thermo-fans") != 1) r.fail("unsupported fan model version");
  FanModels fm;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto t = r.expect("fan");
    if (t.size() != 3 || r.to_number(t[0], "fan") != static_cast<double>(k)) r.fail("bad fan line");
    fm.bounds[k] = {r.to_number(t[1], "fan"), r.to_number(t[2], "fan")};
    std::vector<std::string> names;
    Bounds tb;
    if (read_model_header(r, names, tb) != "linear") r.fail("fan model must be linear");
    fm.models[k] = read_linear_body(r, std::move(names), tb);
  }
  if (!r.done()) r.fail("trailing content");
  fm.fitted = true;
  return fm;
}

// ---------------------------------------------------------------------------
// energy
// ---------------------------------------------------------------------------

inline double cop(double t_supply) { return 0.0068 * t_supply * t_supply + 0.0008 * t_supply + 0.458; }

inline double cooling_energy(double computing_kwh, double t_supply) {
  if (!(computing_kwh >= 0.0)) throw InvalidArgument("cooling_energy: computing energy must be >= 0");
  const double c = cop(t_supply);
  if (!(c > 0.0)) throw InvalidArgument("cooling_energy: CoP must be > 0");
  return computing_kwh / c;
}

inline double joules_to_kwh(double j) { return j / 3.6e6; }

// Per-interval energies; totals are summed once, in interval order.
class EnergyLedger {
 public:
  explicit EnergyLedger(double t_supply = 25.0) : t_supply_(t_supply) {}

  void add_interval(double computing_kwh) {
    computing_.push_back(computing_kwh);
    cooling_.push_back(cooling_energy(computing_kwh, t_supply_));
  }

  std::size_t intervals() const { return computing_.size(); }
  double computing_at(std::size_t i) const { return computing_.at(i); }
  double cooling_at(std::size_t i) const { return cooling_.at(i); }
  double computing_kwh() const { return sum(computing_); }
  double cooling_kwh() const { return sum(cooling_); }
  double total_kwh() const { return computing_kwh() + cooling_kwh(); }
  double t_supply() const { return t_supply_; }

 private:
  static double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }

  double t_supply_;
  std::vector<double> computing_;
  std::vector<double> cooling_;
};

}  // namespace thermo::thermal
