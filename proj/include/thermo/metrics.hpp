#pragma once

// SLA, energy and temperature reporting for simulation runs.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "thermo/common.hpp"

namespace thermo::metrics {

// One row per host per interval.
struct HostSample {
  std::size_t interval = 0;
  std::size_t host = 0;
  bool active = false;
  double active_s = 0.0;     // time active within the interval
  double saturated_s = 0.0;  // time spent at 100% utilization
  bool operator==(const HostSample&) const = default;
};

// One row per VM per interval; CPU-seconds requested and delivered.
struct VmSample {
  std::size_t interval = 0;
  std::size_t vm = 0;
  double requested = 0.0;
  double allocated = 0.0;
  bool migrating = false;
  bool operator==(const VmSample&) const = default;
};

struct EventLog {
  std::size_t n_hosts = 0;
  std::size_t n_vms = 0;
  std::vector<HostSample> hosts;
  std::vector<VmSample> vms;
  bool operator==(const EventLog&) const = default;
};

struct HostTime {
  double active_s = 0.0;
  double saturated_s = 0.0;
};

struct VmCapacity {
  double requested = 0.0;
  double allocated = 0.0;
};

// Mean fraction of active time spent saturated; hosts never active are left
// out of the mean.
inline double sla_tah(const std::vector<HostTime>& hosts) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& h : hosts) {
    if (!(h.active_s > 0.0)) continue;
    sum += h.saturated_s / h.active_s;
    ++n;
  }
  if (n == 0) throw InvalidArgument("sla_tah: no host was ever active");
  return sum / static_cast<double>(n);
}

struct PdmResult {
  double value = 0.0;
  std::size_t skipped = 0;  // VMs with zero requested capacity
};

// Mean relative CPU shortfall |C_R - C_A| / C_R over all VMs.
inline PdmResult pdm(const std::vector<VmCapacity>& vms) {
  PdmResult r;
  if (vms.empty()) return r;
  double sum = 0.0;
  for (const auto& v : vms) {
    if (!(v.requested > 0.0)) {
      ++r.skipped;
      continue;
    }
    sum += std::abs(v.requested - v.allocated) / v.requested;
  }
  r.value = sum / static_cast<double>(vms.size());
  return r;
}

struct SlaMetrics {
  double sla_tah = 0.0;
  double pdm = 0.0;
  double sla_violation = 0.0;
  std::size_t n_migrations = 0;
  std::size_t pdm_skipped = 0;
  bool operator==(const SlaMetrics&) const = default;
};

inline SlaMetrics combine(double tah, const PdmResult& p, std::size_t migrations) {
  return {tah, p.value, tah * p.value, migrations, p.skipped};
}

// Folds the event stream as it is produced.
class SlaAccumulator {
 public:
  SlaAccumulator(std::size_t n_hosts, std::size_t n_vms) : hosts_(n_hosts), vms_(n_vms) {}

  void add(const HostSample& s) {
    auto& h = hosts_.at(s.host);
    h.active_s += s.active_s;
    h.saturated_s += s.saturated_s;
  }

  void add(const VmSample& s) {
    auto& v = vms_.at(s.vm);
    v.requested += s.requested;
    v.allocated += s.allocated;
  }

  void add_migrations(std::size_t n) { migrations_ += n; }

  SlaMetrics result() const { return combine(sla_tah(hosts_), pdm(vms_), migrations_); }

 private:
  std::vector<HostTime> hosts_;
  std::vector<VmCapacity> vms_;
  std::size_t migrations_ = 0;
};

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

struct IntervalRow {
  std::size_t interval = 0;
  std::size_t active_hosts = 0;
  double mean_temp = 0.0;  // over active hosts; 0 when none
  double peak_temp = 0.0;
  double computing_kwh = 0.0;
  double cooling_kwh = 0.0;
  std::size_t migrations = 0;
  std::size_t guard_flags = 0;
  double overload_debt = 0.0;
  bool operator==(const IntervalRow&) const = default;
};

struct Histogram {
  double bin_width = 2.0;
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::size_t> counts;
  std::vector<double> cdf;  // fraction of samples below each upper edge

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
  bool operator==(const Histogram&) const = default;
};

inline Histogram histogram(const std::vector<double>& samples, double bin_width = 2.0) {
  if (!(bin_width > 0.0)) throw InvalidArgument("histogram: bin width must be > 0");
  Histogram h;
  h.bin_width = bin_width;
  if (samples.empty()) return h;
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double origin = std::floor(*lo_it / bin_width) * bin_width;
  const auto bins = static_cast<std::size_t>(std::floor((*hi_it - origin) / bin_width)) + 1;
  h.counts.assign(bins, 0);
  for (std::size_t k = 0; k <= bins; ++k) h.edges.push_back(origin + static_cast<double>(k) * bin_width);
  for (double v : samples) {
    auto k = static_cast<std::size_t>(std::floor((v - origin) / bin_width));
    ++h.counts[std::min(k, bins - 1)];
  }
  std::size_t run = 0;
  for (auto c : h.counts) {
    run += c;
    h.cdf.push_back(static_cast<double>(run) / static_cast<double>(samples.size()));
  }
  return h;
}

struct SimReport {
  std::string policy;
  std::string config;  // resolved run config, canonical form
  std::vector<IntervalRow> rows;
  double peak_temp = 0.0;
  double mean_temp = 0.0;
  double computing_kwh = 0.0;
  double cooling_kwh = 0.0;
  double total_kwh = 0.0;
  double mean_active_hosts = 0.0;
  std::size_t migrations = 0;
  std::size_t guard_flags = 0;
  SlaMetrics sla;
  Histogram temps;
  bool operator==(const SimReport&) const = default;
};

// temp_samples: one predicted temperature per active host per interval.
inline SimReport aggregate(const std::vector<IntervalRow>& rows, const std::vector<double>& temp_samples,
                           const SlaMetrics& sla, double bin_width = 2.0) {
  if (rows.empty()) throw InvalidArgument("aggregate: no interval rows");
  SimReport r;
  r.rows = rows;
  r.sla = sla;
  double active = 0.0, temp_sum = 0.0;
  std::size_t temp_rows = 0;
  r.peak_temp = -std::numeric_limits<double>::infinity();
  for (const auto& row : rows) {
    if (row.active_hosts > 0) {
      r.peak_temp = std::max(r.peak_temp, row.peak_temp);
      temp_sum += row.mean_temp;
      ++temp_rows;
    }
    r.computing_kwh += row.computing_kwh;
    r.cooling_kwh += row.cooling_kwh;
    active += static_cast<double>(row.active_hosts);
    r.migrations += row.migrations;
    r.guard_flags += row.guard_flags;
  }
  if (temp_rows == 0) r.peak_temp = 0.0;
  r.mean_temp = temp_rows ? temp_sum / static_cast<double>(temp_rows) : 0.0;
  r.total_kwh = r.computing_kwh + r.cooling_kwh;
  r.mean_active_hosts = active / static_cast<double>(rows.size());
  r.temps = histogram(temp_samples, bin_width);
  return r;
}

// ---------------------------------------------------------------------------
// files
// ---------------------------------------------------------------------------

inline std::string intervals_csv(const SimReport& r) {
  std::string out =
      "interval,active_hosts,mean_temp_c,peak_temp_c,computing_kwh,cooling_kwh,migrations,guard_flags,"
      "overload_debt\n";
  for (const auto& row : r.rows) {
    out += concat(row.interval, ',', row.active_hosts, ',', format_double(row.mean_temp), ',',
                  format_double(row.peak_temp), ',', format_double(row.computing_kwh), ',',
                  format_double(row.cooling_kwh), ',', row.migrations, ',', row.guard_flags, ',',
                  format_double(row.overload_debt), '\n');
  }
  return out;
}

inline std::string histogram_csv(const SimReport& r) {
  std::string out = "bin_lo_c,bin_hi_c,count,cdf\n";
  const auto& h = r.temps;
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    out += concat(format_double(h.edges[k]), ',', format_double(h.edges[k + 1]), ',', h.counts[k], ',',
                  format_double(h.cdf[k]), '\n');
  }
  return out;
}

inline Config summary_config(const SimReport& r) {
  Config c;
  c.set("policy", r.policy);
  c.set("peak_temp_c", r.peak_temp);
  c.set("mean_temp_c", r.mean_temp);
  c.set("computing_kwh", r.computing_kwh);
  c.set("cooling_kwh", r.cooling_kwh);
  c.set("total_kwh", r.total_kwh);
  c.set("mean_active_hosts", r.mean_active_hosts);
  c.set("migrations", static_cast<double>(r.migrations));
  c.set("guard_flags", static_cast<double>(r.guard_flags));
  c.set("sla_tah", r.sla.sla_tah);
  c.set("pdm", r.sla.pdm);
  c.set("sla_violation", r.sla.sla_violation);
  c.set("intervals", static_cast<double>(r.rows.size()));
  return c;
}

inline std::string summary_text(const SimReport& r) { return summary_config(r).serialize(); }

// ---------------------------------------------------------------------------
// comparison
// ---------------------------------------------------------------------------

struct ComparisonRow {
  std::string policy;
  double peak_temp = 0.0;
  double total_kwh = 0.0;
  double mean_active_hosts = 0.0;
  double sla_violation = 0.0;
  std::size_t migrations = 0;
  // relative to the first report
  double d_peak_temp = 0.0;
  double d_total_kwh = 0.0;
  double d_active_hosts = 0.0;
  double saving_pct = 0.0;  // energy the first policy saves relative to this one
};

inline double saving_pct(double e_ref, double e_other) {
  if (!(e_other > 0.0)) throw InvalidArgument("saving_pct: energy must be > 0");
  return 100.0 * (1.0 - e_ref / e_other);
}

// Lines that differ between two canonical configs, ignoring `ignore` keys.
inline std::vector<std::string> config_diff(const std::string& a, const std::string& b,
                                            const std::vector<std::string>& ignore) {
  const auto ca = Config::parse(a).items();
  const auto cb = Config::parse(b).items();
  std::map<std::string, std::pair<std::string, std::string>> all;
  for (const auto& [k, v] : ca) all[k].first = v;
  for (const auto& [k, v] : cb) all[k].second = v;
  std::vector<std::string> out;
  for (const auto& [k, v] : all) {
    if (std::find(ignore.begin(), ignore.end(), k) != ignore.end()) continue;
    if (v.first != v.second || !ca.count(k) || !cb.count(k)) {
      out.push_back(k + ": '" + v.first + "' vs '" + v.second + "'");
    }
  }
  return out;
}

inline std::vector<ComparisonRow> compare_runs(const std::vector<SimReport>& reports) {
  if (reports.size() < 2) throw InvalidArgument("compare_runs: need at least two reports");
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const auto diff = config_diff(reports[0].config, reports[i].config, {"policy"});
    if (!diff.empty()) {
      std::string msg = "compare_runs: configs differ between " + reports[0].policy + " and " + reports[i].policy;
      for (const auto& d : diff) msg += "\n  " + d;
      throw InvalidArgument(msg);
    }
  }
  const auto& ref = reports[0];
  std::vector<ComparisonRow> out;
  for (const auto& r : reports) {
    ComparisonRow row;
    row.policy = r.policy;
    row.peak_temp = r.peak_temp;
    row.total_kwh = r.total_kwh;
    row.mean_active_hosts = r.mean_active_hosts;
    row.sla_violation = r.sla.sla_violation;
    row.migrations = r.migrations;
    row.d_peak_temp = r.peak_temp - ref.peak_temp;
    row.d_total_kwh = r.total_kwh - ref.total_kwh;
    row.d_active_hosts = r.mean_active_hosts - ref.mean_active_hosts;
    row.saving_pct = saving_pct(ref.total_kwh, r.total_kwh);
    out.push_back(row);
  }
  return out;
}

inline std::string comparison_table(const std::vector<ComparisonRow>& rows) {
  std::string out =
      "policy,peak_temp_c,total_kwh,mean_active_hosts,sla_violation,migrations,d_peak_temp_c,d_total_kwh,"
      "d_active_hosts,saving_pct\n";
  for (const auto& r : rows) {
    out += concat(r.policy, ',', format_double(r.peak_temp), ',', format_double(r.total_kwh), ',',
                  format_double(r.mean_active_hosts), ',', format_double(r.sla_violation), ',', r.migrations, ',',
                  format_double(r.d_peak_temp), ',', format_double(r.d_total_kwh), ',',
                  format_double(r.d_active_hosts), ',', format_double(r.saving_pct), '\n');
  }
  return out;
}

}  // namespace thermo::metrics
