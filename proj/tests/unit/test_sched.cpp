#include <gtest/gtest.h>

#include "helpers.hpp"
#include "thermo/sched.hpp"

using namespace thermo;
using namespace thermo::sim;
using testutil::Cluster;

namespace {

LinearModel hot(double t) { return testutil::constant_model(t, {0, 200}); }

Flavor cores(int n, double ram = 1024.0) { return {"c" + std::to_string(n), n, ram}; }

// Listed hosts active and empty, VMs unplaced.
ClusterState fresh(std::size_t hosts, std::vector<Flavor> vms, const std::vector<std::size_t>& active) {
  auto s = make_state(hosts, std::move(vms));
  for (auto h : active) s.hosts[h].active = true;
  return s;
}

}  // namespace

TEST(Tas, PicksCoolestActiveHost) {
  Cluster c({hot(80), hot(70)}, 1);
  c.add_vm(20);
  const auto env = c.env();
  Provisional p(fresh(2, {cores(4)}, {0, 1}), env, 0);
  sched::ThermalAware tas;
  const auto m = tas.place({0}, p, {});
  EXPECT_EQ(m.assignments.at(0), 1u);
  EXPECT_TRUE(m.new_activations.empty());
}

TEST(Tas, TiesGoToLowerIndex) {
  Cluster c({hot(70), hot(70)}, 1);
  c.add_vm(20);
  const auto env = c.env();
  Provisional p(fresh(2, {cores(4)}, {0, 1}), env, 0);
  sched::ThermalAware tas;
  EXPECT_EQ(tas.place({0}, p, {}).assignments.at(0), 0u);
}

TEST(Tas, RamFitSkipsCoolestHost) {
  Cluster c({hot(60), hot(70)}, 1);
  c.params.host.ram_mb = 65536;
  c.add_vm(10);
  c.add_vm(10);
  const auto env = c.env();
  auto s = fresh(2, {cores(2, 61440), cores(2, 8192)}, {0, 1});
  s.placement[0] = 0;
  Provisional p(s, env, 0);
  sched::ThermalAware tas;
  EXPECT_EQ(tas.place({1}, p, {}).assignments.at(1), 1u);
}

TEST(Tas, ActivatesWhenEveryActiveHostIsTooHot) {
  Cluster c({hot(105), hot(110), hot(60), hot(50)}, 1);
  c.add_vm(10);
  const auto env = c.env();
  Provisional p(fresh(4, {cores(2)}, {0, 1}), env, 0);
  sched::ThermalAware tas(true);
  const auto m = tas.place({0}, p, {});
  EXPECT_EQ(m.assignments.at(0), 3u);  // coolest inactive host
  EXPECT_EQ(m.new_activations, (std::vector<std::size_t>{3}));
  ASSERT_EQ(tas.decisions().size(), 1u);
  EXPECT_TRUE(tas.decisions()[0].activated);
  EXPECT_EQ(tas.decisions()[0].active.size(), 2u);
  EXPECT_TRUE(p.active(3));
}

TEST(Tas, NoFeasibleHostNamesTheVm) {
  Cluster c({hot(110), hot(120)}, 1);
  c.add_vm(10);
  c.add_vm(10);
  const auto env = c.env();
  Provisional p(fresh(2, {cores(2), cores(2)}, {0}), env, 0);
  sched::ThermalAware tas;
  try {
    tas.place({1}, p, {});
    FAIL() << "expected PlacementError";
  } catch (const PlacementError& e) {
    EXPECT_EQ(e.vm(), 1u);
    EXPECT_NE(std::string(e.what()).find("vm 1"), std::string::npos);
  }
}

TEST(Tas, ActivationCanBeForbidden) {
  Cluster c({hot(110), hot(50)}, 1);
  c.add_vm(10);
  const auto env = c.env();
  Provisional p(fresh(2, {cores(2)}, {0}), env, 0);
  sched::ThermalAware tas;
  EXPECT_THROW(tas.place({0}, p, {{}, false}), PlacementError);
}

TEST(Tas, PostPlacementFeaturesSeeThePendingVm) {
  Cluster c({testutil::util_model(0, 1)}, 1);
  c.add_vm(100, 2000);
  const auto env = c.env();
  const Provisional p(fresh(1, {cores(8)}, {0}), env, 0);
  const auto idle = p.features(0);
  EXPECT_EQ(idle[kCpu], 0);
  EXPECT_EQ(idle[kNumVms], 0);
  const auto vm = p.vm(0);
  const auto x = p.features(0, &vm);
  EXPECT_EQ(x[kCpu], 12.5);
  EXPECT_EQ(x[kNumVms], 1);
  EXPECT_EQ(x[kRamUsed], 2000);
  EXPECT_EQ(x[kNumCpuUsed], 8);
  EXPECT_EQ(x[kPower], thermal::power_at(env.params.host.curve, 12.5));
  EXPECT_EQ(x[kFan1], 5000);
  EXPECT_EQ(sched::evaluate(p, 0, vm, 90).predicted, 12.5);
}

TEST(RoundRobin, OneVmPerHost) {
  Cluster c({hot(50), hot(50), hot(50)}, 1);
  for (int i = 0; i < 3; ++i) c.add_vm(10);
  const auto env = c.env();
  Provisional p(fresh(3, {cores(2), cores(2), cores(2)}, {}), env, 0);
  sched::RoundRobin rr;
  const auto m = rr.place({0, 1, 2}, p, {});
  EXPECT_EQ(m.assignments.at(0), 0u);
  EXPECT_EQ(m.assignments.at(1), 1u);
  EXPECT_EQ(m.assignments.at(2), 2u);
}

TEST(RoundRobin, SkipsInfeasibleHost) {
  Cluster c({hot(50), hot(110), hot(50)}, 1);
  for (int i = 0; i < 4; ++i) c.add_vm(10);
  const auto env = c.env();
  Provisional p(fresh(3, {cores(2), cores(2), cores(2), cores(2)}, {}), env, 0);
  sched::RoundRobin rr;
  const auto m = rr.place({0, 1, 2, 3}, p, {});
  std::vector<std::size_t> order;
  for (std::size_t v = 0; v < 4; ++v) order.push_back(m.assignments.at(v));
  EXPECT_EQ(order, (std::vector<std::size_t>{0, 2, 0, 2}));
  EXPECT_EQ(rr.cursor(), 0u);
}

TEST(RoundRobin, FullCycleWithoutHostThrows) {
  Cluster c({hot(110), hot(110)}, 1);
  c.add_vm(10);
  const auto env = c.env();
  Provisional p(fresh(2, {cores(2)}, {}), env, 0);
  sched::RoundRobin rr;
  EXPECT_THROW(rr.place({0}, p, {}), PlacementError);
}

TEST(Granite, ThresholdIsMeanPlusPopulationStddev) {
  // mean of {50, 50, 90} is 63.33 and the population stddev 18.86
  const double t = sched::dynamic_threshold({50, 50, 90}, 1.0, 100.0);
  EXPECT_NEAR(t, 190.0 / 3 + std::sqrt(3200.0 / 9), 1e-12);
  EXPECT_NEAR(t, 82.19, 5e-3);
  EXPECT_GT(90, t);  // the 90% host is over the threshold
  EXPECT_EQ(sched::dynamic_threshold({50, 50, 90}, 1.0, 80.0), 80.0);
  EXPECT_EQ(sched::dynamic_threshold({}, 1.0, 90.0), 90.0);
  EXPECT_EQ(sched::dynamic_threshold({10, 10}, 1.0, 90.0, 30.0), 30.0);
}

TEST(Granite, SingleFeasibleHostTakesEverything) {
  Cluster c({hot(110), hot(50), hot(110)}, 1);
  for (int i = 0; i < 5; ++i) c.add_vm(10);
  const auto env = c.env();
  Provisional p(fresh(3, {cores(2), cores(2), cores(2), cores(2), cores(2)}, {0, 1, 2}), env, 0);
  sched::Granite g({1.0, 90.0});  // an idle cluster would otherwise give a threshold of 0
  g.begin_interval(p);
  const auto m = g.place({0, 1, 2, 3, 4}, p, {});
  for (const auto& [v, h] : m.assignments) EXPECT_EQ(h, 1u) << "vm " << v;
}

TEST(Granite, ConsolidatesBelowRoundRobin) {
  std::vector<LinearModel> models(8, testutil::util_model(30, 0.4));
  Cluster c(models, 12);
  for (int v = 0; v < 16; ++v) c.add_vm(15);
  const auto env = c.env();
  sched::Granite g;
  sched::RoundRobin rr;
  const auto rg = run(env, g, 16, {}, 4);
  const auto rrr = run(env, rr, 16, {}, 4);
  EXPECT_LT(rg.report.mean_active_hosts, rrr.report.mean_active_hosts);
  EXPECT_EQ(rrr.report.mean_active_hosts, 8.0);
}

TEST(Policies, Factory) {
  EXPECT_EQ(sched::make_policy("tas")->name(), "tas");
  EXPECT_EQ(sched::make_policy("rr")->name(), "rr");
  EXPECT_FALSE(sched::make_policy("rr")->consolidates());
  EXPECT_EQ(sched::make_policy("granite")->name(), "granite");
  EXPECT_THROW(sched::make_policy("fifo"), InvalidArgument);
}
