#pragma once

// Placement policies: thermal-aware (coolest predicted feasible host),
// round-robin, and a GRANITE-style energy-driven consolidator with dynamic
// utilization thresholds.

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "thermo/sim.hpp"
#include "thermo/thermal.hpp"

namespace thermo::sched {

using sim::PlaceOptions;
using sim::PlacementError;
using sim::Provisional;
using sim::ScheduleMap;

// What a policy saw about one host when placing one VM.
struct Candidate {
  std::size_t host = 0;
  bool active = false;
  sim::Features x{};       // post-placement feature vector
  double predicted = 0.0;  // guarded prediction on x
  bool guard_flag = false;
  double post_util = 0.0;  // uncapped demand after placement, percent
  int cores_after = 0;
  double ram_after = 0.0;
  bool feasible = false;
};

inline Candidate evaluate(const Provisional& p, std::size_t h, const sim::VmLoad& vm, double util_limit) {
  Candidate c;
  c.host = h;
  c.active = p.active(h);
  const auto& l = p.load(h);
  c.x = p.features(h, &vm);
  const auto g = guarded_predict(*p.env().predictors, h, c.x);
  c.predicted = g.value;
  c.guard_flag = g.flagged;
  c.post_util = l.demand + vm.demand;
  c.cores_after = l.cores + vm.cores;
  c.ram_after = l.ram + vm.ram_reserved;
  const auto& spec = p.env().params.host;
  c.feasible = c.predicted < p.env().params.t_red && c.post_util <= util_limit && c.cores_after <= spec.cores &&
               c.ram_after <= spec.ram_mb;
  return c;
}

// ---------------------------------------------------------------------------
// thermal-aware
// ---------------------------------------------------------------------------

struct Decision {
  std::size_t interval = 0;
  std::size_t vm = 0;
  std::vector<Candidate> active;    // every non-excluded active host
  std::vector<Candidate> inactive;  // filled only when activation was needed
  std::size_t chosen = 0;
  bool activated = false;
};

// Each VM goes to the active host with the lowest predicted temperature
// among those that stay under T_red, U_max and capacity; ties to the lower
// host index. With no such host, the coolest feasible inactive host is
// switched on.
class ThermalAware : public sim::Policy {
 public:
  explicit ThermalAware(bool record = false) : record_(record) {}

  std::string name() const override { return "tas"; }
  bool consolidates() const override { return true; }

  ScheduleMap place(const std::vector<std::size_t>& vms, Provisional& p, const PlaceOptions& opt) override {
    ScheduleMap out;
    const double limit = util_limit(p);
    for (auto v : vms) {
      const auto load = p.vm(v);
      Decision d;
      d.interval = p.interval();
      d.vm = v;
      const Candidate* best = nullptr;
      for (std::size_t h = 0; h < p.hosts(); ++h) {
        if (opt.is_excluded(h) || !p.active(h)) continue;
        d.active.push_back(evaluate(p, h, load, limit));
      }
      for (const auto& c : d.active) {
        if (c.feasible && (!best || c.predicted < best->predicted)) best = &c;
      }
      if (!best && opt.allow_activation) {
        for (std::size_t h = 0; h < p.hosts(); ++h) {
          if (opt.is_excluded(h) || p.active(h)) continue;
          d.inactive.push_back(evaluate(p, h, load, limit));
        }
        for (const auto& c : d.inactive) {
          if (c.feasible && (!best || c.predicted < best->predicted)) best = &c;
        }
        d.activated = best != nullptr;
      }
      if (!best) throw PlacementError(v);
      d.chosen = best->host;
      if (d.activated) out.new_activations.push_back(d.chosen);
      out.assignments[v] = d.chosen;
      p.add(v, d.chosen);
      if (record_) decisions_.push_back(std::move(d));
    }
    return out;
  }

  const std::vector<Decision>& decisions() const { return decisions_; }

 private:
  bool record_;
  std::vector<Decision> decisions_;
};

// ---------------------------------------------------------------------------
// round robin
// ---------------------------------------------------------------------------

// Cycles over all hosts from where the previous placement stopped, taking
// the first host that passes the same checks as the thermal-aware policy.
// Never consolidates.
class RoundRobin : public sim::Policy {
 public:
  std::string name() const override { return "rr"; }
  bool consolidates() const override { return false; }

  ScheduleMap place(const std::vector<std::size_t>& vms, Provisional& p, const PlaceOptions& opt) override {
    ScheduleMap out;
    const double limit = util_limit(p);
    const std::size_t n = p.hosts();
    for (auto v : vms) {
      const auto load = p.vm(v);
      bool placed = false;
      for (std::size_t i = 0; i < n && !placed; ++i) {
        const std::size_t h = (cursor_ + i) % n;
        if (opt.is_excluded(h) || (!p.active(h) && !opt.allow_activation)) continue;
        if (!evaluate(p, h, load, limit).feasible) continue;
        if (!p.active(h)) out.new_activations.push_back(h);
        out.assignments[v] = h;
        p.add(v, h);
        cursor_ = (h + 1) % n;
        placed = true;
      }
      if (!placed) throw PlacementError(v);
    }
    return out;
  }

  std::size_t cursor() const { return cursor_; }

 private:
  std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// GRANITE-style
// ---------------------------------------------------------------------------

struct GraniteParams {
  double s = 1.0;               // standard deviations above the mean
  double min_threshold = 0.0;   // percent; floor for the dynamic threshold
};

// mean + s * population standard deviation, capped at cap.
inline double dynamic_threshold(const std::vector<double>& utils, double s, double cap, double floor = 0.0) {
  if (utils.empty()) return cap;
  double mean = 0.0;
  for (double u : utils) mean += u;
  mean /= static_cast<double>(utils.size());
  double var = 0.0;
  for (double u : utils) var += (u - mean) * (u - mean);
  var /= static_cast<double>(utils.size());
  return std::min(cap, std::max(floor, mean + s * std::sqrt(var)));
}

// Overload threshold recomputed every interval from the active hosts'
// utilizations; each VM goes where the estimated computing plus cooling
// power increase is smallest (switching a host on costs its idle power).
class Granite : public sim::Policy {
 public:
  explicit Granite(GraniteParams prm = {}) : prm_(prm) {}

  std::string name() const override { return "granite"; }
  bool consolidates() const override { return true; }

  void begin_interval(const Provisional& p) override {
    std::vector<double> utils;
    for (std::size_t h = 0; h < p.hosts(); ++h) {
      if (p.active(h)) utils.push_back(p.utilization(h));
    }
    threshold_ = dynamic_threshold(utils, prm_.s, p.env().u_max_pct(), prm_.min_threshold);
  }

  double util_limit(const Provisional&) const override { return threshold_; }

  ScheduleMap place(const std::vector<std::size_t>& vms, Provisional& p, const PlaceOptions& opt) override {
    ScheduleMap out;
    const auto& prm = p.env().params;
    const double overhead = 1.0 + 1.0 / thermal::cop(prm.t_supply);
    for (auto v : vms) {
      const auto load = p.vm(v);
      std::optional<std::size_t> best;
      double best_cost = std::numeric_limits<double>::infinity();
      for (std::size_t h = 0; h < p.hosts(); ++h) {
        if (opt.is_excluded(h) || (!p.active(h) && !opt.allow_activation)) continue;
        const auto c = evaluate(p, h, load, threshold_);
        if (!c.feasible) continue;
        const double before = p.active(h) ? thermal::power_at(prm.host.curve, p.utilization(h)) : 0.0;
        const double after = thermal::power_at(prm.host.curve, std::min(100.0, c.post_util));
        const double cost = (after - before) * overhead;
        if (cost < best_cost) {
          best_cost = cost;
          best = h;
        }
      }
      if (!best) throw PlacementError(v);
      if (!p.active(*best)) out.new_activations.push_back(*best);
      out.assignments[v] = *best;
      p.add(v, *best);
    }
    return out;
  }

  double threshold() const { return threshold_; }

 private:
  GraniteParams prm_;
  double threshold_ = 90.0;
};

inline std::unique_ptr<sim::Policy> make_policy(const std::string& name, const GraniteParams& g = {},
                                                bool record = false) {
  if (name == "tas") return std::make_unique<ThermalAware>(record);
  if (name == "rr") return std::make_unique<RoundRobin>();
  if (name == "granite") return std::make_unique<Granite>(g);
  throw InvalidArgument("unknown policy '" + name + "' (expected tas, rr or granite)");
}

}  // namespace thermo::sched
