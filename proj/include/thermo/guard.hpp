#pragma once

// Per-host temperature models and the out-of-bounds prediction guard.

#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "thermo/common.hpp"
#include "thermo/gbt.hpp"
#include "thermo/regress.hpp"
#include "thermo/thermal.hpp"

namespace thermo {

namespace detail {
inline std::string serialize_model(const gbt::TreeEnsemble& m) { return gbt::serialize(m); }
inline std::string serialize_model(const LinearModel& m) { return serialize(m); }
inline std::string serialize_model(const MlpModel& m) { return serialize(m); }
}  // namespace detail

// A trained ambient-temperature model of any supported kind.
class HostModel {
 public:
  using Variant = std::variant<gbt::TreeEnsemble, LinearModel, MlpModel>;

  HostModel() = default;
  HostModel(Variant m) : m_(std::move(m)) {}  // NOLINT(google-explicit-constructor)

  double predict(std::span<const double> x) const {
    return std::visit([&](const auto& m) { return m.predict(x); }, m_);
  }

  const Bounds& target_bounds() const {
    return std::visit([](const auto& m) -> const Bounds& { return m.target_bounds; }, m_);
  }

  const std::vector<std::string>& feature_names() const {
    return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.feature_names; }, m_);
  }

  std::string kind() const {
    if (std::holds_alternative<gbt::TreeEnsemble>(m_)) return "gbt";
    if (std::holds_alternative<LinearModel>(m_)) return std::get<LinearModel>(m_).kind;
    return "mlp";
  }

  std::string serialize() const {
    return std::visit([](const auto& m) { return detail::serialize_model(m); }, m_);
  }

  const Variant& get() const { return m_; }

 private:
  Variant m_;
};

inline HostModel parse_host_model(std::string_view text) {
  io::Reader r(text, "host model");
  std::vector<std::string> names;
  Bounds tb;
  const auto kind = read_model_header(r, names, tb);
  HostModel out;
  if (kind == "gbt") out = HostModel(gbt::read_gbt_body(r, std::move(names), tb));
  else if (kind == "linear") out = HostModel(read_linear_body(r, std::move(names), tb));
  else if (kind == "mlp") out = HostModel(read_mlp_body(r, std::move(names), tb));
  else r.fail("unknown model kind '" + kind + "'");
  if (!r.done()) r.fail("trailing content");
  return out;
}

struct GuardParams {
  bool enabled = true;
  double margin = 10.0;  // degC added to each side of the training target range
};

struct GuardResult {
  double value = 0.0;
  double raw = 0.0;       // the host's own model output
  bool flagged = false;   // own prediction was out of bounds
  bool critical = false;  // no peer was in bounds either; value is the clamped own prediction
};

// Everything needed to predict any host's temperature from a feature vector.
struct Predictors {
  std::vector<std::string> host_ids;
  std::vector<HostModel> models;
  std::vector<thermal::FanModels> fans;
  GuardParams guard;

  std::size_t size() const { return models.size(); }

  Bounds bounds(std::size_t h) const {
    const auto& tb = models.at(h).target_bounds();
    return {tb.min - guard.margin, tb.max + guard.margin};
  }

  std::size_t index_of(const std::string& id) const {
    for (std::size_t i = 0; i < host_ids.size(); ++i) {
      if (host_ids[i] == id) return i;
    }
    throw InvalidArgument("unknown host '" + id + "'");
  }
};

// Own model if its output is plausible, otherwise the mean over peers whose
// own outputs on x are plausible for them.
inline GuardResult guarded_predict(const Predictors& p, std::size_t host, std::span<const double> x) {
  GuardResult r;
  r.raw = p.models.at(host).predict(x);
  r.value = r.raw;
  if (!p.guard.enabled) return r;
  const Bounds own = p.bounds(host);
  if (std::isfinite(r.raw) && own.contains(r.raw)) return r;
  r.flagged = true;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k == host) continue;
    const double v = p.models[k].predict(x);
    if (std::isfinite(v) && p.bounds(k).contains(v)) {
      sum += v;
      ++n;
    }
  }
  if (n > 0) {
    r.value = sum / static_cast<double>(n);
  } else {
    r.critical = true;
    r.value = std::isfinite(r.raw) ? own.clamp(r.raw) : own.max;
  }
  return r;
}

}  // namespace thermo
