#pragma once

// Synthetic fleet telemetry and VM traces with a known temperature function.
// Hosts differ by a "hotness" in [0, 1] standing in for rack position:
// hotter hosts see warmer inlet air and run warmer CPUs at equal load.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "thermo/common.hpp"
#include "thermo/telemetry.hpp"
#include "thermo/thermal.hpp"
#include "thermo/trace.hpp"

namespace thermo::synth {

struct HostProfile {
  std::string id;
  double hotness = 0.0;
  double inlet_offset = 0.0;  // degC over the coolest inlet
  double cpu_offset = 0.0;    // degC over the coolest CPU
  std::array<double, 4> fan_base{};
};

inline constexpr double kHostCores = 64.0;
inline constexpr double kHostRamMb = 524288.0;
inline constexpr double kInletNoise = 0.3;
inline constexpr double kCpuNoise = 0.95;

inline std::string host_name(std::size_t i) { return concat("host", i < 10 ? "0" : "", i); }

// Evenly spaced hotness values dealt to hosts by a seeded permutation, so
// host id carries no thermal information.
inline std::vector<HostProfile> host_profiles(std::size_t n, std::uint64_t seed) {
  std::vector<double> levels(n);
  for (std::size_t i = 0; i < n; ++i) levels[i] = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
  Rng rng(derive_seed(seed, 0));
  shuffle(levels, rng);
  std::vector<HostProfile> out;
  for (std::size_t i = 0; i < n; ++i) {
    HostProfile p;
    p.id = host_name(i);
    p.hotness = levels[i];
    p.inlet_offset = 12.0 * p.hotness;
    p.cpu_offset = 16.0 * p.hotness;
    for (std::size_t k = 0; k < 4; ++k) p.fan_base[k] = 4000.0 + 150.0 * static_cast<double>(k);
    out.push_back(p);
  }
  return out;
}

// Noise-free parts of the generator.
inline double inlet_mean(const HostProfile& p) { return 13.0 + p.inlet_offset; }

inline double fan_mean(const HostProfile& p, std::size_t k, double power, double t_inlet) {
  return p.fan_base[k] + 25.0 * power + 40.0 * (t_inlet - 13.0);
}

inline double cpu_temp_mean(const HostProfile& p, double util, double power, double fan1) {
  return 28.0 + p.cpu_offset + 0.11 * power + 6.0 * std::tanh((util - 60.0) / 12.0) - 0.0008 * (fan1 - 9500.0);
}

inline double ambient_mean(const HostProfile& p, double util, double power, double fan1) {
  return inlet_mean(p) + cpu_temp_mean(p, util, power, fan1);
}

// One telemetry row per interval; load and VM mix drawn independently per row.
inline std::vector<HostRecord> host_records(const HostProfile& p, std::size_t rows, std::uint64_t seed,
                                            double start = 1.6e9, double step = 600.0,
                                            const thermal::PowerCurve& curve = thermal::default_power_curve()) {
  static constexpr int kFlavorCores[] = {1, 2, 4, 8};
  Rng rng(seed);
  std::vector<HostRecord> out;
  out.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    HostRecord r;
    r.host_id = p.id;
    r.timestamp = start + step * static_cast<double>(i);
    r.cpu_load = uniform(rng, 0.0, 100.0);
    r.ram_total = kHostRamMb;
    r.n_cpu = kHostCores;
    const auto vms = uniform_index(rng, 41);
    double cores = 0.0;
    for (std::uint64_t v = 0; v < vms; ++v) cores += kFlavorCores[uniform_index(rng, 4)];
    r.n_vms = static_cast<double>(vms);
    r.n_cpu_used = std::min(cores, kHostCores);
    r.ram_used = std::min(kHostRamMb, static_cast<double>(vms) * uniform(rng, 1000.0, 3500.0));
    r.net_rx = static_cast<double>(vms) * uniform(rng, 10.0, 300.0);
    r.net_tx = static_cast<double>(vms) * uniform(rng, 10.0, 300.0);
    r.power = std::max(0.0, thermal::power_at(curve, r.cpu_load) + normal(rng, 0.0, 3.0));
    r.t_inlet = inlet_mean(p) + normal(rng, 0.0, kInletNoise);
    for (std::size_t k = 0; k < 4; ++k) r.fan[k] = fan_mean(p, k, r.power, r.t_inlet) + normal(rng, 0.0, 60.0);
    r.t_cpu1 = cpu_temp_mean(p, r.cpu_load, r.power, r.fan[0]) + normal(rng, 0.0, kCpuNoise);
    r.t_cpu2 = r.t_cpu1 - 5.0;
    out.push_back(r);
  }
  return out;
}

// Raw log text in the default ingestion layout.
inline std::string telemetry_csv(const std::vector<HostRecord>& records) {
  std::string out;
  const auto& fields = record_fields();
  for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + fields[i];
  out += '\n';
  for (const auto& r : records) {
    std::vector<std::string> v = {r.host_id,
                                  format_double(r.timestamp),
                                  format_double(r.cpu_load),
                                  format_double(r.ram_total),
                                  format_double(r.ram_used),
                                  format_double(r.n_cpu),
                                  format_double(r.n_cpu_used),
                                  format_double(r.net_rx),
                                  format_double(r.net_tx),
                                  format_double(r.power),
                                  format_double(r.t_cpu1),
                                  format_double(r.t_cpu2),
                                  format_double(r.fan[0]),
                                  format_double(r.fan[1]),
                                  format_double(r.fan[2]),
                                  format_double(r.fan[3]),
                                  format_double(r.t_inlet),
                                  format_double(r.n_vms)};
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
    out += '\n';
  }
  return out;
}

// Mostly idle business workload: low base load, a daily cycle, AR(1)
// jitter and rare short bursts.
inline std::vector<sim::TraceSample> vm_samples(std::uint64_t seed, double horizon_s = 86400.0,
                                                double sample_s = 300.0, double start = 1.6e9) {
  Rng rng(seed);
  const double base = uniform(rng, 5.0, 30.0);
  const double amp = uniform(rng, 0.0, 10.0);
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double ram = uniform(rng, 1000.0, 3500.0);
  const double rx = uniform(rng, 10.0, 300.0);
  const double tx = uniform(rng, 10.0, 300.0);
  std::vector<sim::TraceSample> out;
  double ar = 0.0;
  const auto n = static_cast<std::size_t>(std::floor(horizon_s / sample_s));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = sample_s * static_cast<double>(i);
    ar = 0.8 * ar + normal(rng, 0.0, 4.0);
    double cpu = base + amp * std::sin(2.0 * std::numbers::pi * t / 86400.0 + phase) + ar;
    if (uniform01(rng) < 0.01) cpu += uniform(rng, 30.0, 60.0);
    sim::TraceSample s;
    s.timestamp = start + t;
    s.cpu_pct = std::clamp(cpu, 0.0, 100.0);
    s.ram_mb = std::max(0.0, ram * (1.0 + 0.05 * normal(rng)));
    s.net_rx = std::max(0.0, rx * (1.0 + 0.2 * normal(rng)));
    s.net_tx = std::max(0.0, tx * (1.0 + 0.2 * normal(rng)));
    out.push_back(s);
  }
  return out;
}

inline std::string vm_name(std::size_t i) { return concat("vm", i < 10 ? "00" : i < 100 ? "0" : "", i); }

}  // namespace thermo::synth
