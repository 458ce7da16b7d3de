#pragma once

// Per-VM resource traces: parsing (Bitbrains-style and the plain CSV used by
// the synthetic generator) and resampling onto the scheduling interval grid.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "thermo/common.hpp"
#include "thermo/telemetry.hpp"

namespace thermo::sim {

struct TraceSample {
  double timestamp = 0.0;  // s
  double cpu_pct = 0.0;    // percent of the VM's own cores
  double ram_mb = 0.0;
  double net_rx = 0.0;  // Kbps
  double net_tx = 0.0;
  bool operator==(const TraceSample&) const = default;
};

struct TracePoint {
  double cpu_pct = 0.0;
  double ram_mb = 0.0;
  double net_rx = 0.0;
  double net_tx = 0.0;
  bool gap = false;  // no sample fell in this bin; value carried over
  bool operator==(const TracePoint&) const = default;
};

struct VmTrace {
  std::string vm_id;
  std::vector<TracePoint> points;
  std::size_t gaps = 0;
  bool operator==(const VmTrace&) const = default;
};

struct Trace {
  double interval_s = 600.0;
  double start = 0.0;
  std::vector<VmTrace> vms;

  std::size_t length() const { return vms.empty() ? 0 : vms.front().points.size(); }

  const TracePoint& at(std::size_t vm, std::size_t k) const { return vms.at(vm).points.at(k); }

  bool operator==(const Trace&) const = default;
};

// Mean of the samples in each bin [start + k*interval, start + (k+1)*interval).
// Empty bins repeat the previous bin (or the first filled bin at the start).
inline std::vector<TracePoint> resample(const std::vector<TraceSample>& samples, double start, double interval,
                                        std::size_t n, std::size_t* gaps = nullptr) {
  if (!(interval > 0.0)) throw InvalidArgument("resample: interval must be > 0");
  std::vector<TracePoint> sum(n);
  std::vector<std::size_t> count(n, 0);
  for (const auto& s : samples) {
    const double k = std::floor((s.timestamp - start) / interval);
    if (k < 0.0 || k >= static_cast<double>(n)) continue;
    const auto i = static_cast<std::size_t>(k);
    sum[i].cpu_pct += s.cpu_pct;
    sum[i].ram_mb += s.ram_mb;
    sum[i].net_rx += s.net_rx;
    sum[i].net_tx += s.net_tx;
    ++count[i];
  }
  const auto first = std::find_if(count.begin(), count.end(), [](std::size_t c) { return c > 0; });
  if (first == count.end()) throw EmptyInputError("resample: no samples inside the grid");
  const auto src = static_cast<std::size_t>(first - count.begin());
  auto mean = [&](std::size_t i) {
    const double c = static_cast<double>(count[i]);
    return TracePoint{sum[i].cpu_pct / c, sum[i].ram_mb / c, sum[i].net_rx / c, sum[i].net_tx / c, false};
  };
  std::vector<TracePoint> out(n);
  std::size_t missing = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] > 0) {
      out[i] = mean(i);
      continue;
    }
    ++missing;
    out[i] = i < src ? mean(src) : out[i - 1];
    out[i].gap = true;
  }
  if (gaps) *gaps = missing;
  return out;
}

inline constexpr const char* kTraceHeader = "timestamp,cpu_pct,ram_mb,net_rx_kbps,net_tx_kbps";

inline std::string format_trace(const std::vector<TraceSample>& samples) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& s : samples) {
    out += concat(format_double(s.timestamp), ',', format_double(s.cpu_pct), ',', format_double(s.ram_mb), ',',
                  format_double(s.net_rx), ',', format_double(s.net_tx), '\n');
  }
  return out;
}

// Accepts either the plain CSV above or the Bitbrains fastStorage layout
// (';'-separated, memory in KB, network in KB/s). Unparseable or negative
// rows are skipped.
inline std::vector<TraceSample> parse_trace(std::string_view text, const std::string& origin) {
  std::vector<std::string> lines;
  for (auto& l : split(text, '\n')) {
    if (!trim(l).empty()) lines.push_back(std::move(l));
  }
  if (lines.empty()) throw EmptyInputError(origin + ": empty trace");
  const bool bitbrains = lines.front().find("CPU usage [%]") != std::string::npos;
  const char delim = bitbrains ? ';' : ',';
  const auto header = split_fields(lines.front(), delim);
  auto col = [&](std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    throw SchemaError(std::string(name));
  };
  std::size_t ts, cpu, ram, rx, tx;
  double ram_scale = 1.0, net_scale = 1.0;
  if (bitbrains) {
    ts = col("Timestamp [ms]");
    cpu = col("CPU usage [%]");
    ram = col("Memory usage [KB]");
    rx = col("Network received throughput [KB/s]");
    tx = col("Network transmitted throughput [KB/s]");
    ram_scale = 1.0 / 1024.0;
    net_scale = 8.0;
  } else {
    ts = col("timestamp");
    cpu = col("cpu_pct");
    ram = col("ram_mb");
    rx = col("net_rx_kbps");
    tx = col("net_tx_kbps");
  }
  std::vector<TraceSample> out;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto f = split_fields(lines[l], delim);
    const std::size_t need = std::max({ts, cpu, ram, rx, tx});
    if (f.size() <= need) continue;
    TraceSample s;
    auto get = [&](std::size_t i, double& dst) {
      auto v = parse_double(f[i]);
      if (!v || !std::isfinite(*v)) return false;
      dst = *v;
      return true;
    };
    if (!get(ts, s.timestamp) || !get(cpu, s.cpu_pct) || !get(ram, s.ram_mb) || !get(rx, s.net_rx) ||
        !get(tx, s.net_tx)) {
      continue;
    }
    if (s.cpu_pct < 0.0 || s.ram_mb < 0.0 || s.net_rx < 0.0 || s.net_tx < 0.0) continue;
    s.cpu_pct = std::min(s.cpu_pct, 100.0);
    s.ram_mb *= ram_scale;
    s.net_rx *= net_scale;
    s.net_tx *= net_scale;
    out.push_back(s);
  }
  return out;
}

// Loads one file or every *.csv file of a directory (one VM per
// file, VM id = file stem, sorted by name). The grid starts at the earliest
// timestamp over all VMs; n_intervals = 0 sizes it to the latest sample.
inline Trace load_trace(const std::string& path, double interval_s, std::size_t n_intervals = 0) {
  namespace fs = std::filesystem;
  if (!(interval_s > 0.0)) throw InvalidArgument("load_trace: interval must be > 0");
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && ext == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.emplace_back(path);
  }
  if (files.empty()) throw EmptyInputError("load_trace: no trace files in " + path);

  std::vector<std::pair<std::string, std::vector<TraceSample>>> raw;
  double start = std::numeric_limits<double>::infinity();
  double end = -std::numeric_limits<double>::infinity();
  for (const auto& f : files) {
    auto samples = parse_trace(read_file(f.string()), f.string());
    if (samples.empty()) throw EmptyInputError("load_trace: no parsable rows for VM " + f.stem().string());
    for (const auto& s : samples) {
      start = std::min(start, s.timestamp);
      end = std::max(end, s.timestamp);
    }
    raw.emplace_back(f.stem().string(), std::move(samples));
  }
  Trace t;
  t.interval_s = interval_s;
  t.start = start;
  const std::size_t n = n_intervals ? n_intervals : static_cast<std::size_t>(std::floor((end - start) / interval_s)) + 1;
  for (auto& [id, samples] : raw) {
    VmTrace v;
    v.vm_id = id;
    try {
      v.points = resample(samples, start, interval_s, n, &v.gaps);
    } catch (const EmptyInputError&) {
      throw EmptyInputError("load_trace: no samples inside the grid for VM " + id);
    }
    t.vms.push_back(std::move(v));
  }
  return t;
}

}  // namespace thermo::sim
