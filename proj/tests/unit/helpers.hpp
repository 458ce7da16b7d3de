#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "thermo/guard.hpp"
#include "thermo/sim.hpp"
#include "thermo/telemetry.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = std::filesystem::temp_directory_path() /
            (std::string("thermo_") + info->test_suite_name() + "_" + info->name());
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& sub = "") const { return sub.empty() ? path_.string() : (path_ / sub).string(); }

 private:
  std::filesystem::path path_;
};

inline thermo::HostRecord record(const std::string& host, double ts, double cpu = 10.0) {
  thermo::HostRecord r;
  r.host_id = host;
  r.timestamp = ts;
  r.cpu_load = cpu;
  r.ram_total = 1024.0;
  r.ram_used = 512.0;
  r.n_cpu = 64.0;
  r.n_cpu_used = 8.0;
  r.net_rx = 100.0;
  r.net_tx = 50.0;
  r.power = 120.0;
  r.t_cpu1 = 50.0;
  r.t_cpu2 = 45.0;
  r.fan = {5000.0, 5100.0, 5200.0, 5300.0};
  r.t_inlet = 20.0;
  r.n_vms = 3.0;
  return r;
}

// A linear model that ignores its input and returns `value`.
inline thermo::LinearModel constant_model(double value, thermo::Bounds tb) {
  thermo::LinearModel m;
  m.kind = "ols";
  m.feature_names = thermo::feature_names();
  m.standardizer = thermo::Standardizer::identity(m.feature_names.size());
  m.weights.assign(m.feature_names.size(), 0.0);
  m.intercept = value;
  m.target_bounds = tb;
  return m;
}

// Temperature = base + slope * CPU utilization (percent).
inline thermo::LinearModel util_model(double base, double slope, thermo::Bounds tb = {0.0, 200.0}) {
  auto m = constant_model(base, tb);
  m.weights[thermo::kCpu] = slope;
  return m;
}

inline thermo::thermal::FanModels flat_fans(double rpm = 5000.0) {
  thermo::thermal::FanModels fm;
  const auto names = thermo::thermal::non_fan_features();
  for (std::size_t k = 0; k < 4; ++k) {
    auto& m = fm.models[k];
    m.kind = "ols";
    m.feature_names = names;
    m.standardizer = thermo::Standardizer::identity(names.size());
    m.weights.assign(names.size(), 0.0);
    m.intercept = rpm;
    fm.bounds[k] = {rpm, rpm};
  }
  fm.fitted = true;
  return fm;
}

// Hosts with hand-written models and a trace with constant per-VM demand.
struct Cluster {
  thermo::Predictors pred;
  thermo::sim::Trace trace;
  thermo::sim::SimParams params;

  Cluster(const std::vector<thermo::LinearModel>& models, std::size_t intervals) {
    params.intervals = intervals;
    trace.interval_s = params.interval_s;
    for (std::size_t h = 0; h < models.size(); ++h) {
      pred.host_ids.push_back("h" + std::to_string(h));
      pred.models.emplace_back(thermo::HostModel::Variant(models[h]));
      pred.fans.push_back(flat_fans());
    }
    length_ = intervals;
  }

  std::size_t add_vm(double cpu_pct, double ram_mb = 1024.0) {
    thermo::sim::VmTrace v;
    v.vm_id = "vm" + std::to_string(trace.vms.size());
    v.points.assign(length_, {cpu_pct, ram_mb, 10.0, 10.0});
    trace.vms.push_back(std::move(v));
    return trace.vms.size() - 1;
  }

  thermo::sim::Environment env() const { return {params, &pred, &trace}; }

 private:
  std::size_t length_ = 0;
};

}  // namespace testutil
