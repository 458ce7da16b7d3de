#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "thermo/thermal.hpp"

using namespace thermo;
using namespace thermo::thermal;

TEST(Rc, InitialConditionInKelvin) {
  EXPECT_NEAR(rc_temperature(200, 20, 0, {}), 44.85, 1e-12);
}

TEST(Rc, SteadyState) {
  EXPECT_NEAR(rc_temperature(200, 20, 1e9, {}), 88.0, 1e-9);
}

TEST(Rc, OneTimeConstant) {
  RcParams rc;
  EXPECT_DOUBLE_EQ(rc.tau(), 115.6);
  const double want = 54.0 + (44.85 - 54.0) / std::exp(1.0);
  EXPECT_NEAR(rc_temperature(100, 20, 115.6, rc), want, 1e-12);
  EXPECT_NEAR(rc_temperature(100, 20, 115.6, rc), 50.634, 5e-4);
}

TEST(Rc, RejectsBadParameters) {
  EXPECT_THROW(rc_temperature(1, 20, 1, {0.0, 340, 318}), InvalidArgument);
  EXPECT_THROW(rc_temperature(1, 20, 1, {0.34, -1, 318}), InvalidArgument);
  EXPECT_THROW(rc_temperature(1, 20, -1, {}), InvalidArgument);
}

TEST(Power, KnotsAndInterpolation) {
  const auto c = default_power_curve();
  for (const auto& [u, w] : c.points) EXPECT_EQ(power_at(c, u), w);
  EXPECT_EQ(power_at(c, 0), c.idle());
  EXPECT_EQ(power_at(c, 0), 56);
  const PowerCurve two{{{0, 56}, {100, 380}}};
  EXPECT_DOUBLE_EQ(power_at(two, 50), 218);
  EXPECT_DOUBLE_EQ(power_at(c, 55), (200 + 231) / 2.0);
}

TEST(Power, OutOfRangeRejected) {
  const auto c = default_power_curve();
  EXPECT_THROW(power_at(c, -0.1), InvalidArgument);
  EXPECT_THROW(power_at(c, 100.1), InvalidArgument);
  EXPECT_THROW(power_at(c, std::nan("")), InvalidArgument);
}

TEST(Power, ParseAndValidate) {
  const auto c = PowerCurve::parse("0:50,50:100,100:300");
  EXPECT_EQ(c.points.size(), 3u);
  EXPECT_EQ(PowerCurve::parse(c.to_string()), c);
  EXPECT_THROW(PowerCurve::parse("10:50,100:60"), InvalidArgument);
  EXPECT_THROW(PowerCurve::parse("0:50,100:40"), InvalidArgument);
  EXPECT_THROW(PowerCurve::parse("0:50,100"), FormatError);
}

namespace {

Dataset fan_fixture(bool constant_fans) {
  Rng rng(4);
  std::vector<HostRecord> recs;
  for (int i = 0; i < 60; ++i) {
    auto r = testutil::record("h", i, uniform(rng, 0, 100));
    r.ram_used = uniform(rng, 100, 1000);
    r.n_cpu_used = uniform(rng, 0, 64);
    r.net_rx = uniform(rng, 0, 500);
    r.net_tx = uniform(rng, 0, 500);
    r.power = uniform(rng, 60, 380);
    r.n_vms = uniform_index(rng, 10);
    r.t_inlet = uniform(rng, 15, 30);
    const double fs = constant_fans ? 6000.0 : 100.0 * r.cpu_load + 5000.0;
    r.fan = {fs, fs, fs, fs};
    recs.push_back(r);
  }
  return partition_by_host(recs).at("h");
}

std::array<double, 4> estimate(const FanModels& fm, const HostRecord& r) {
  const auto x = feature_vector(r);
  return fm.estimate(std::span<const double>(x.data(), kFan1));
}

}  // namespace

TEST(Fans, RecoversLinearRelation) {
  const auto fm = fit_fan_models(fan_fixture(false));
  auto r = testutil::record("h", 0, 37.5);
  r.power = 150;
  for (double f : estimate(fm, r)) EXPECT_NEAR(f, 100 * 37.5 + 5000, 1.0);
}

TEST(Fans, ConstantFansGiveConstantPrediction) {
  const auto fm = fit_fan_models(fan_fixture(true));
  for (double cpu : {0.0, 50.0, 100.0}) {
    for (double f : estimate(fm, testutil::record("h", 0, cpu))) EXPECT_NEAR(f, 6000, 1e-6);
  }
}

TEST(Fans, ClampedToObservedRange) {
  const auto d = fan_fixture(false);
  const auto fm = fit_fan_models(d);
  auto r = testutil::record("h", 0, 100);
  r.cpu_load = 500;  // far outside training data
  const auto est = estimate(fm, r);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(est[k], fm.bounds[k].max);
}

TEST(Fans, FileRoundTrip) {
  const auto fm = fit_fan_models(fan_fixture(false));
  const auto back = parse_fan_models(serialize(fm));
  EXPECT_EQ(back, fm);
  EXPECT_THROW(FanModels{}.estimate(std::vector<double>(kFan1, 0.0)), InvalidArgument);
}

TEST(Energy, CopPolynomial) {
  EXPECT_NEAR(cop(25), 4.728, 1e-12);
  EXPECT_EQ(cooling_energy(0, 25), 0.0);
  EXPECT_NEAR(cooling_energy(10, 25), 10 / 4.728, 1e-12);
  EXPECT_THROW(cooling_energy(-1, 25), InvalidArgument);
}

TEST(Energy, LedgerSumsIntervals) {
  EnergyLedger led(25);
  led.add_interval(1.0);
  led.add_interval(0.5);
  led.add_interval(0.0);
  EXPECT_EQ(led.intervals(), 3u);
  EXPECT_DOUBLE_EQ(led.computing_kwh(), 1.5);
  EXPECT_DOUBLE_EQ(led.cooling_kwh(), 1.5 / cop(25));
  EXPECT_DOUBLE_EQ(led.total_kwh(), 1.5 + 1.5 / cop(25));
  EXPECT_EQ(led.cooling_at(2), 0.0);
  EXPECT_DOUBLE_EQ(joules_to_kwh(3.6e6), 1.0);
}
