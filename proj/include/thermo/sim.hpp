#pragma once

// Discrete-interval data-center simulator. Hosts and VMs are identified by
// index; every interval replays one trace point per VM, detects overloaded
// and underloaded hosts, asks a placement policy for targets, runs the
// resulting live migrations and books energy, temperature and SLA events.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "thermo/common.hpp"
#include "thermo/guard.hpp"
#include "thermo/metrics.hpp"
#include "thermo/telemetry.hpp"
#include "thermo/thermal.hpp"
#include "thermo/trace.hpp"

namespace thermo::sim {

struct Flavor {
  std::string name;
  int cores = 0;
  double ram_mb = 0.0;
  bool operator==(const Flavor&) const = default;
};

inline const std::vector<Flavor>& flavors() {
  static const std::vector<Flavor> f = {
      {"1c4g", 1, 4096.0}, {"2c8g", 2, 8192.0}, {"4c16g", 4, 16384.0}, {"8c32g", 8, 32768.0}};
  return f;
}

inline const Flavor& flavor(std::string_view name) {
  for (const auto& f : flavors()) {
    if (f.name == name) return f;
  }
  throw InvalidArgument(concat("unknown VM flavor '", name, "'"));
}

// Relative weights of the four flavors, "1c4g:0.4,2c8g:0.3,..." in config.
struct FlavorMix {
  std::array<double, 4> weights{0.4, 0.3, 0.2, 0.1};

  static FlavorMix parse(std::string_view text) {
    FlavorMix m;
    m.weights.fill(0.0);
    for (const auto& item : split(text, ',')) {
      const auto parts = split(item, ':');
      if (parts.size() != 2) throw FormatError("flavor mix entry must be flavor:weight, got '" + item + "'");
      const auto& f = flavor(trim(parts[0]));
      const auto i = static_cast<std::size_t>(&f - flavors().data());
      m.weights[i] = require_double(parts[1], "flavor weight");
    }
    m.validate();
    return m;
  }

  void validate() const {
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw InvalidArgument("flavor weights must be >= 0");
      sum += w;
    }
    if (!(sum > 0.0)) throw InvalidArgument("flavor weights must not all be zero");
  }

  std::string to_string() const {
    std::string out;
    for (std::size_t i = 0; i < 4; ++i) {
      if (i) out += ',';
      out += flavors()[i].name + ':' + format_double(weights[i]);
    }
    return out;
  }
};

inline std::vector<Flavor> assign_flavors(std::size_t n, const FlavorMix& mix, std::uint64_t seed) {
  mix.validate();
  double total = 0.0;
  for (double w : mix.weights) total += w;
  Rng rng(seed);
  std::vector<Flavor> out;
  for (std::size_t i = 0; i < n; ++i) {
    double u = uniform01(rng) * total;
    std::size_t k = 0;
    for (; k < 3; ++k) {
      if (u < mix.weights[k]) break;
      u -= mix.weights[k];
    }
    while (mix.weights[k] == 0.0) --k;  // rounding ran past the last nonzero weight
    out.push_back(flavors()[k]);
  }
  return out;
}

struct HostSpec {
  int cores = 64;
  double ram_mb = 524288.0;
  double bandwidth_mbps = 1000.0;
  thermal::PowerCurve curve = thermal::default_power_curve();

  // MB per second available to a migration.
  double migration_rate() const { return bandwidth_mbps / 8.0; }
};

struct SimParams {
  double interval_s = 600.0;
  std::size_t intervals = 144;
  double u_max = 0.9;
  double t_red = 105.0;
  double degradation = 0.1;  // CPU share lost by a VM while it migrates
  double t_supply = 25.0;
  double histogram_bin = 2.0;
  HostSpec host;
};

// ---------------------------------------------------------------------------
// state
// ---------------------------------------------------------------------------

struct Migration {
  std::size_t vm = 0;
  std::size_t source = 0;
  std::size_t target = 0;
  double duration_s = 0.0;
  double remaining_s = 0.0;
  bool operator==(const Migration&) const = default;
};

struct HostState {
  bool active = false;
  double demand = 0.0;       // requested CPU, percent of host cores, uncapped
  double utilization = 0.0;  // demand capped at 100
  double overload_debt = 0.0;
  double power = 0.0;
  double temp = 0.0;  // guarded prediction; 0 while inactive
  bool guard_flag = false;
  bool operator==(const HostState&) const = default;
};

struct ClusterState {
  std::size_t interval = 0;
  std::vector<Flavor> vms;
  std::vector<int> placement;  // vm -> host, -1 before initial placement
  std::vector<HostState> hosts;
  std::vector<Migration> in_flight;  // VM stays on its source until done

  bool operator==(const ClusterState&) const = default;
};

inline ClusterState make_state(std::size_t n_hosts, std::vector<Flavor> vms) {
  ClusterState s;
  s.placement.assign(vms.size(), -1);
  s.vms = std::move(vms);
  s.hosts.resize(n_hosts);
  return s;
}

struct Environment {
  SimParams params;
  const Predictors* predictors = nullptr;
  const Trace* trace = nullptr;

  std::size_t hosts() const { return predictors->size(); }
  double u_max_pct() const { return 100.0 * params.u_max; }
};

using Features = std::array<double, kFeatureCount>;

// ---------------------------------------------------------------------------
// provisional accounting
// ---------------------------------------------------------------------------

struct VmLoad {
  int cores = 0;
  double ram_reserved = 0.0;  // flavor RAM
  double demand = 0.0;        // percent of host cores
  double ram_used = 0.0;
  double net_rx = 0.0;
  double net_tx = 0.0;
};

// Per-host aggregates for one interval that placement decisions update as
// they commit. Sums are rebuilt from the sorted VM sets, so they depend only
// on which VMs are where, not on the order of updates.
class Provisional {
 public:
  struct Load {
    bool active = false;
    std::vector<std::size_t> resident;  // sorted
    std::vector<std::size_t> incoming;  // in-flight targets, capacity only
    int cores = 0;
    double ram = 0.0;
    double demand = 0.0;
    double ram_used = 0.0;
    double net_rx = 0.0;
    double net_tx = 0.0;
  };

  Provisional(const ClusterState& s, const Environment& env, std::size_t k) : env_(&env), k_(k) {
    if (env.hosts() != s.hosts.size()) throw InvalidArgument("state and predictors disagree on host count");
    loads_.resize(s.hosts.size());
    in_flight_.assign(s.vms.size(), 0);
    flavors_ = s.vms;
    for (std::size_t h = 0; h < s.hosts.size(); ++h) loads_[h].active = s.hosts[h].active;
    for (std::size_t v = 0; v < s.placement.size(); ++v) {
      if (s.placement[v] >= 0) loads_[static_cast<std::size_t>(s.placement[v])].resident.push_back(v);
    }
    for (const auto& m : s.in_flight) {
      loads_[m.target].incoming.push_back(m.vm);
      in_flight_[m.vm] = 1;
    }
    for (std::size_t h = 0; h < loads_.size(); ++h) rebuild(h);
  }

  std::size_t hosts() const { return loads_.size(); }
  std::size_t interval() const { return k_; }
  const Environment& env() const { return *env_; }
  const Load& load(std::size_t h) const { return loads_.at(h); }
  bool active(std::size_t h) const { return loads_.at(h).active; }
  bool in_flight(std::size_t v) const { return in_flight_.at(v) != 0; }

  VmLoad vm(std::size_t v) const {
    const auto& p = env_->trace->at(v, k_);
    const auto& f = flavors_.at(v);
    return {f.cores, f.ram_mb, p.cpu_pct * f.cores / env_->params.host.cores, p.ram_mb, p.net_rx, p.net_tx};
  }

  void add(std::size_t v, std::size_t h) {
    auto& r = loads_.at(h).resident;
    r.insert(std::upper_bound(r.begin(), r.end(), v), v);
    loads_[h].active = true;
    rebuild(h);
  }

  void remove(std::size_t v, std::size_t h) {
    auto& r = loads_.at(h).resident;
    auto it = std::lower_bound(r.begin(), r.end(), v);
    if (it == r.end() || *it != v) throw InvalidArgument(concat("vm ", v, " is not on host ", h));
    r.erase(it);
    rebuild(h);
  }

  double utilization(std::size_t h) const { return std::min(100.0, loads_.at(h).demand); }

  bool fits_capacity(std::size_t h, const VmLoad& x) const {
    const auto& l = loads_.at(h);
    return l.cores + x.cores <= env_->params.host.cores && l.ram + x.ram_reserved <= env_->params.host.ram_mb;
  }

  // Post-placement feature vector; pending = nullptr gives the current one.
  Features features(std::size_t h, const VmLoad* pending = nullptr) const {
    const auto& l = loads_.at(h);
    const auto& spec = env_->params.host;
    const VmLoad none;
    const VmLoad& p = pending ? *pending : none;
    Features x{};
    const double util = std::min(100.0, l.demand + p.demand);
    x[kCpu] = util;
    x[kRam] = spec.ram_mb;
    x[kRamUsed] = l.ram_used + p.ram_used;
    x[kNumCpu] = spec.cores;
    x[kNumCpuUsed] = static_cast<double>(l.cores + p.cores);
    x[kNetRx] = l.net_rx + p.net_rx;
    x[kNetTx] = l.net_tx + p.net_tx;
    x[kNumVms] = static_cast<double>(l.resident.size() + (pending ? 1 : 0));
    x[kPower] = thermal::power_at(spec.curve, util);
    const auto fans = env_->predictors->fans.at(h).estimate(std::span<const double>(x.data(), kFan1));
    for (std::size_t f = 0; f < 4; ++f) x[kFan1 + f] = fans[f];
    return x;
  }

  GuardResult predict(std::size_t h, const VmLoad* pending = nullptr) const {
    const auto x = features(h, pending);
    return guarded_predict(*env_->predictors, h, x);
  }

 private:
  void rebuild(std::size_t h) {
    auto& l = loads_[h];
    l.cores = 0;
    l.ram = 0.0;
    l.demand = l.ram_used = l.net_rx = l.net_tx = 0.0;
    for (auto v : l.resident) {
      const auto x = vm(v);
      l.cores += x.cores;
      l.ram += x.ram_reserved;
      l.demand += x.demand;
      l.ram_used += x.ram_used;
      l.net_rx += x.net_rx;
      l.net_tx += x.net_tx;
    }
    for (auto v : l.incoming) {
      l.cores += flavors_[v].cores;
      l.ram += flavors_[v].ram_mb;
    }
  }

  const Environment* env_;
  std::size_t k_;
  std::vector<Flavor> flavors_;
  std::vector<Load> loads_;
  std::vector<char> in_flight_;
};

// ---------------------------------------------------------------------------
// policies
// ---------------------------------------------------------------------------

struct ScheduleMap {
  std::map<std::size_t, std::size_t> assignments;  // vm -> host
  std::vector<std::size_t> new_activations;
  bool operator==(const ScheduleMap&) const = default;
};

struct PlaceOptions {
  std::vector<char> excluded;  // per host; empty = none
  bool allow_activation = true;

  bool is_excluded(std::size_t h) const { return h < excluded.size() && excluded[h]; }
};

class PlacementError : public Error {
 public:
  explicit PlacementError(std::size_t vm)
      : Error(concat("placement exhausted: no feasible host for vm ", vm)), vm_(vm) {}
  std::size_t vm() const { return vm_; }

 private:
  std::size_t vm_;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  // Whether underloaded hosts are evacuated.
  virtual bool consolidates() const = 0;
  // Called once per interval after utilizations are refreshed.
  virtual void begin_interval(const Provisional&) {}
  // Utilization limit in percent used by detection and placement.
  virtual double util_limit(const Provisional& p) const { return p.env().u_max_pct(); }
  // Places the VMs in order, committing each into p. Throws PlacementError.
  virtual ScheduleMap place(const std::vector<std::size_t>& vms, Provisional& p, const PlaceOptions& opt) = 0;
};

// ---------------------------------------------------------------------------
// detection and selection
// ---------------------------------------------------------------------------

inline bool is_overloaded(const Provisional& p, std::size_t h, double util_limit) {
  if (!p.active(h)) return false;
  if (p.load(h).demand > util_limit) return true;
  return p.predict(h).value >= p.env().params.t_red;
}

inline std::vector<std::size_t> detect_overloaded(const Provisional& p, double util_limit) {
  std::vector<std::size_t> out;
  for (std::size_t h = 0; h < p.hosts(); ++h) {
    try {
      if (is_overloaded(p, h, util_limit)) out.push_back(h);
    } catch (const std::exception& e) {
      throw Error(concat("prediction failed for host ", h, ": ", e.what()));
    }
  }
  return out;
}

namespace detail {

inline bool touches_migration(const Provisional& p, std::size_t h) {
  const auto& l = p.load(h);
  if (!l.incoming.empty()) return true;
  return std::any_of(l.resident.begin(), l.resident.end(), [&](std::size_t v) { return p.in_flight(v); });
}

}  // namespace detail

// Hosts, lowest utilization first, whose whole VM set can be moved onto the
// other active hosts without breaking capacity or the utilization limit.
// Commitments are kept while scanning, so later hosts see earlier moves.
inline std::vector<std::size_t> detect_underloaded(const Provisional& p, double util_limit,
                                                   const std::vector<char>& excluded = {}) {
  const auto skip = [&](std::size_t h) { return h < excluded.size() && excluded[h]; };
  std::vector<std::size_t> cand;
  for (std::size_t h = 0; h < p.hosts(); ++h) {
    if (p.active(h) && !skip(h) && !detail::touches_migration(p, h)) cand.push_back(h);
  }
  std::stable_sort(cand.begin(), cand.end(),
                   [&](std::size_t a, std::size_t b) { return p.load(a).demand < p.load(b).demand; });
  Provisional q = p;
  std::vector<char> flagged(p.hosts(), 0), receiving(p.hosts(), 0);
  std::vector<std::size_t> out;
  for (auto h : cand) {
    if (receiving[h]) continue;
    Provisional trial = q;
    std::vector<std::size_t> targets;
    bool ok = true;
    for (auto v : q.load(h).resident) {
      const auto x = trial.vm(v);
      std::optional<std::size_t> dst;
      for (std::size_t t = 0; t < p.hosts() && !dst; ++t) {
        if (t == h || !trial.active(t) || skip(t) || flagged[t]) continue;
        if (trial.fits_capacity(t, x) && trial.load(t).demand + x.demand <= util_limit) dst = t;
      }
      if (!dst) {
        ok = false;
        break;
      }
      trial.remove(v, h);
      trial.add(v, *dst);
      targets.push_back(*dst);
    }
    if (!ok) continue;
    q = std::move(trial);
    flagged[h] = 1;
    for (auto t : targets) receiving[t] = 1;
    out.push_back(h);
  }
  return out;
}

enum class Reason { kOverload, kUnderload };

// Underload: every movable VM. Overload: VMs by ascending migration time
// (RAM in use over bandwidth), the shortest prefix whose removal brings the
// host under both thresholds.
inline std::vector<std::size_t> select_vms_for_migration(const Provisional& p, std::size_t h, Reason reason,
                                                         double util_limit) {
  std::vector<std::size_t> movable;
  for (auto v : p.load(h).resident) {
    if (!p.in_flight(v)) movable.push_back(v);
  }
  if (reason == Reason::kUnderload) return movable;
  const double rate = p.env().params.host.migration_rate();
  std::stable_sort(movable.begin(), movable.end(), [&](std::size_t a, std::size_t b) {
    return p.vm(a).ram_used / rate < p.vm(b).ram_used / rate;
  });
  Provisional q = p;
  std::vector<std::size_t> out;
  for (auto v : movable) {
    q.remove(v, h);
    out.push_back(v);
    if (q.load(h).demand <= util_limit && q.predict(h).value < p.env().params.t_red) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// migrations
// ---------------------------------------------------------------------------

struct MigrationEvent {
  std::size_t interval = 0;
  std::size_t vm = 0;
  std::size_t source = 0;
  std::size_t target = 0;
  double duration_s = 0.0;
  bool operator==(const MigrationEvent&) const = default;
};

// Starts a migration for every assignment whose VM is already placed;
// unplaced VMs are placed directly. Capacity is re-checked against the
// state; any violation rejects the whole map and leaves the state as is.
inline std::vector<MigrationEvent> apply_migrations(ClusterState& s, const ScheduleMap& map, const Environment& env) {
  if (map.assignments.empty()) return {};
  const auto& spec = env.params.host;
  std::vector<int> cores(s.hosts.size(), 0);
  std::vector<double> ram(s.hosts.size(), 0.0);
  auto reserve = [&](std::size_t v, std::size_t h) {
    cores[h] += s.vms[v].cores;
    ram[h] += s.vms[v].ram_mb;
  };
  for (std::size_t v = 0; v < s.placement.size(); ++v) {
    if (s.placement[v] >= 0) reserve(v, static_cast<std::size_t>(s.placement[v]));
  }
  for (const auto& m : s.in_flight) reserve(m.vm, m.target);
  for (const auto& [v, h] : map.assignments) {
    if (v >= s.vms.size() || h >= s.hosts.size()) throw InvalidArgument("schedule map index out of range");
    if (s.placement[v] == static_cast<int>(h)) throw InvalidArgument(concat("vm ", v, " assigned to its own host"));
    reserve(v, h);
  }
  for (std::size_t h = 0; h < s.hosts.size(); ++h) {
    if (cores[h] > spec.cores || ram[h] > spec.ram_mb) {
      throw InvalidArgument(concat("schedule map overcommits host ", h));
    }
  }

  std::vector<MigrationEvent> events;
  for (const auto& [v, h] : map.assignments) {
    s.hosts[h].active = true;
    if (s.placement[v] < 0) {
      s.placement[v] = static_cast<int>(h);
      continue;
    }
    const auto src = static_cast<std::size_t>(s.placement[v]);
    const double dur = env.trace->at(v, s.interval).ram_mb / spec.migration_rate();
    s.in_flight.push_back({v, src, h, dur, dur});
    events.push_back({s.interval, v, src, h, dur});
  }
  return events;
}

// Advances in-flight migrations by dt; returns per-VM seconds spent
// migrating and completes finished moves.
inline std::vector<double> advance_migrations(ClusterState& s, double dt) {
  std::vector<double> migrating(s.vms.size(), 0.0);
  std::vector<Migration> still;
  for (auto m : s.in_flight) {
    const double used = std::min(m.remaining_s, dt);
    migrating[m.vm] += used;
    m.remaining_s -= used;
    if (m.remaining_s > 0.0) {
      still.push_back(m);
    } else {
      s.placement[m.vm] = static_cast<int>(m.target);
    }
  }
  s.in_flight = std::move(still);
  return migrating;
}

// ---------------------------------------------------------------------------
// interval loop
// ---------------------------------------------------------------------------

inline double host_utilization(const ClusterState& s, const Environment& env, std::size_t h, std::size_t k,
                               double* overload_debt = nullptr) {
  double demand = 0.0;
  for (std::size_t v = 0; v < s.placement.size(); ++v) {
    if (s.placement[v] == static_cast<int>(h)) {
      demand += env.trace->at(v, k).cpu_pct * s.vms[v].cores / env.params.host.cores;
    }
  }
  if (overload_debt) *overload_debt = std::max(0.0, demand - 100.0);
  return std::min(100.0, demand);
}

struct StepResult {
  metrics::IntervalRow row;
  std::vector<MigrationEvent> migrations;
  std::vector<metrics::HostSample> host_samples;
  std::vector<metrics::VmSample> vm_samples;
  std::vector<double> temps;  // active hosts, host order
};

namespace detail {

inline ScheduleMap merge(ScheduleMap a, const ScheduleMap& b) {
  for (const auto& [v, h] : b.assignments) a.assignments[v] = h;
  a.new_activations.insert(a.new_activations.end(), b.new_activations.begin(), b.new_activations.end());
  return a;
}

}  // namespace detail

// Initial placement: VMs by decreasing cores (ties in a seeded order, the
// same for every policy), each placed by the policy on an empty cluster.
inline void initial_placement(ClusterState& s, const Environment& env, Policy& policy, std::uint64_t seed) {
  std::vector<std::size_t> order(s.vms.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s.vms[a].cores > s.vms[b].cores; });
  Provisional p(s, env, s.interval);
  policy.begin_interval(p);
  const auto map = policy.place(order, p, {});
  apply_migrations(s, map, env);
}

inline StepResult step(ClusterState& s, const Environment& env, Policy& policy) {
  const std::size_t k = s.interval;
  const auto& prm = env.params;
  if (k >= env.trace->length()) throw InvalidArgument(concat("trace has no interval ", k));

  Provisional p(s, env, k);
  policy.begin_interval(p);
  const double limit = policy.util_limit(p);

  // overloaded hosts shed their cheapest-to-move VMs
  const auto over = detect_overloaded(p, limit);
  std::vector<char> excluded(s.hosts.size(), 0);
  std::vector<std::size_t> moving;
  for (auto h : over) {
    excluded[h] = 1;
    for (auto v : select_vms_for_migration(p, h, Reason::kOverload, limit)) {
      p.remove(v, h);
      moving.push_back(v);
    }
  }
  ScheduleMap map;
  try {
    map = policy.place(moving, p, {excluded, true});
  } catch (const Error& e) {
    throw Error(concat("interval ", k, ": ", e.what()));
  }

  // underloaded hosts are emptied when the policy can rehome every VM
  // without powering anything on
  if (policy.consolidates()) {
    for (auto h : detect_underloaded(p, limit, excluded)) {
      Provisional trial = p;
      const auto vms = select_vms_for_migration(trial, h, Reason::kUnderload, limit);
      for (auto v : vms) trial.remove(v, h);
      auto ex = excluded;
      ex[h] = 1;
      try {
        auto part = policy.place(vms, trial, {ex, false});
        p = std::move(trial);
        excluded[h] = 1;
        map = detail::merge(std::move(map), part);
      } catch (const PlacementError&) {
      }
    }
  }

  // drop assignments that send a VM back to where it already is
  for (auto it = map.assignments.begin(); it != map.assignments.end();) {
    if (s.placement[it->first] == static_cast<int>(it->second)) it = map.assignments.erase(it);
    else ++it;
  }

  StepResult out;
  out.migrations = apply_migrations(s, map, env);
  const auto migrating = advance_migrations(s, prm.interval_s);

  // power down hosts left with nothing resident or incoming
  std::vector<char> busy(s.hosts.size(), 0);
  for (auto h : s.placement) {
    if (h >= 0) busy[static_cast<std::size_t>(h)] = 1;
  }
  for (const auto& m : s.in_flight) busy[m.target] = 1;
  for (std::size_t h = 0; h < s.hosts.size(); ++h) {
    if (!busy[h]) s.hosts[h].active = false;
  }

  // book the interval
  Provisional end(s, env, k);
  auto& row = out.row;
  row.interval = k;
  row.migrations = out.migrations.size();
  double computing_j = 0.0;
  double temp_sum = 0.0;
  for (std::size_t h = 0; h < s.hosts.size(); ++h) {
    auto& hs = s.hosts[h];
    hs.demand = end.load(h).demand;
    hs.utilization = std::min(100.0, hs.demand);
    hs.overload_debt = std::max(0.0, hs.demand - 100.0);
    row.overload_debt += hs.overload_debt;
    metrics::HostSample hsamp{k, h, hs.active, 0.0, 0.0};
    if (hs.active) {
      hs.power = thermal::power_at(prm.host.curve, hs.utilization);
      const auto g = end.predict(h);
      hs.temp = g.value;
      hs.guard_flag = g.flagged;
      row.guard_flags += g.flagged ? 1 : 0;
      computing_j += hs.power * prm.interval_s;
      temp_sum += hs.temp;
      row.peak_temp = row.active_hosts == 0 ? hs.temp : std::max(row.peak_temp, hs.temp);
      ++row.active_hosts;
      out.temps.push_back(hs.temp);
      hsamp.active_s = prm.interval_s;
      hsamp.saturated_s = hs.demand >= 100.0 ? prm.interval_s : 0.0;
    } else {
      hs.power = 0.0;
      hs.temp = 0.0;
      hs.guard_flag = false;
    }
    out.host_samples.push_back(hsamp);
  }
  row.mean_temp = row.active_hosts ? temp_sum / static_cast<double>(row.active_hosts) : 0.0;
  row.computing_kwh = thermal::joules_to_kwh(computing_j);
  row.cooling_kwh = thermal::cooling_energy(row.computing_kwh, prm.t_supply);

  for (std::size_t v = 0; v < s.vms.size(); ++v) {
    const double rate = env.trace->at(v, k).cpu_pct / 100.0 * s.vms[v].cores;  // cores' worth of CPU
    const double requested = rate * prm.interval_s;
    const double shortfall = prm.degradation * rate * migrating[v];
    out.vm_samples.push_back({k, v, requested, requested - shortfall, migrating[v] > 0.0});
  }
  ++s.interval;
  return out;
}

// Checks the capacity constraints and single placement of every VM.
inline void check_invariants(const ClusterState& s, const Environment& env) {
  std::vector<int> cores(s.hosts.size(), 0);
  std::vector<double> ram(s.hosts.size(), 0.0);
  for (std::size_t v = 0; v < s.placement.size(); ++v) {
    if (s.placement[v] < 0) throw Error(concat("vm ", v, " is unplaced"));
    const auto h = static_cast<std::size_t>(s.placement[v]);
    if (!s.hosts[h].active) throw Error(concat("vm ", v, " sits on inactive host ", h));
    cores[h] += s.vms[v].cores;
    ram[h] += s.vms[v].ram_mb;
  }
  std::set<std::size_t> moving;
  for (const auto& m : s.in_flight) {
    if (!moving.insert(m.vm).second) throw Error(concat("vm ", m.vm, " migrates twice"));
    if (s.placement[m.vm] != static_cast<int>(m.source)) throw Error(concat("vm ", m.vm, " left its source early"));
    cores[m.target] += s.vms[m.vm].cores;
    ram[m.target] += s.vms[m.vm].ram_mb;
  }
  for (std::size_t h = 0; h < s.hosts.size(); ++h) {
    if (cores[h] > env.params.host.cores || ram[h] > env.params.host.ram_mb) {
      throw Error(concat("host ", h, " over capacity"));
    }
    if (!s.hosts[h].active && s.hosts[h].power != 0.0) throw Error(concat("inactive host ", h, " draws power"));
    if (s.hosts[h].utilization < 0.0 || s.hosts[h].utilization > 100.0) {
      throw Error(concat("host ", h, " utilization out of range"));
    }
  }
}

struct RunResult {
  metrics::SimReport report;
  metrics::EventLog log;
  std::vector<MigrationEvent> migrations;
  ClusterState final_state;
};

// Full run: flavors and initial placement from the seed, then one step per
// interval.
inline RunResult run(const Environment& env, Policy& policy, std::size_t n_vms, const FlavorMix& mix,
                     std::uint64_t seed, std::string config_text = {}) {
  if (!env.predictors || !env.trace) throw InvalidArgument("run: environment is incomplete");
  if (env.trace->vms.size() < n_vms) {
    throw InvalidArgument(concat("trace holds ", env.trace->vms.size(), " VMs, ", n_vms, " requested"));
  }
  if (env.trace->length() < env.params.intervals) {
    throw InvalidArgument(concat("trace covers ", env.trace->length(), " intervals, ", env.params.intervals,
                                 " requested"));
  }
  auto s = make_state(env.hosts(), assign_flavors(n_vms, mix, derive_seed(seed, 1)));
  initial_placement(s, env, policy, derive_seed(seed, 2));

  RunResult res;
  res.log.n_hosts = env.hosts();
  res.log.n_vms = n_vms;
  metrics::SlaAccumulator acc(env.hosts(), n_vms);
  std::vector<metrics::IntervalRow> rows;
  std::vector<double> temps;
  for (std::size_t k = 0; k < env.params.intervals; ++k) {
    auto r = step(s, env, policy);
    check_invariants(s, env);
    for (const auto& h : r.host_samples) acc.add(h);
    for (const auto& v : r.vm_samples) acc.add(v);
    acc.add_migrations(r.migrations.size());
    res.log.hosts.insert(res.log.hosts.end(), r.host_samples.begin(), r.host_samples.end());
    res.log.vms.insert(res.log.vms.end(), r.vm_samples.begin(), r.vm_samples.end());
    res.migrations.insert(res.migrations.end(), r.migrations.begin(), r.migrations.end());
    temps.insert(temps.end(), r.temps.begin(), r.temps.end());
    rows.push_back(r.row);
  }
  res.report = metrics::aggregate(rows, temps, acc.result(), env.params.histogram_bin);
  res.report.policy = policy.name();
  res.report.config = std::move(config_text);
  res.final_state = std::move(s);
  return res;
}

}  // namespace thermo::sim
