#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "thermo/guard.hpp"

using namespace thermo;

namespace {

// Host 0 emits `own`; peers emit the given constants. All train ranges are [40, 90].
Predictors make(double own, std::vector<double> peers, bool enabled = true) {
  Predictors p;
  p.guard.enabled = enabled;
  p.guard.margin = 10;
  p.host_ids.push_back("h0");
  p.models.emplace_back(HostModel::Variant(testutil::constant_model(own, {40, 90})));
  for (std::size_t k = 0; k < peers.size(); ++k) {
    p.host_ids.push_back("h" + std::to_string(k + 1));
    p.models.emplace_back(HostModel::Variant(testutil::constant_model(peers[k], {40, 90})));
  }
  return p;
}

const std::vector<double> kX(13, 1.0);

}  // namespace

TEST(Guard, InBoundsPassesThrough) {
  const auto r = guarded_predict(make(85, {60}), 0, kX);
  EXPECT_EQ(r.value, 85);
  EXPECT_FALSE(r.flagged);
}

TEST(Guard, MarginWidensBounds) {
  const auto r = guarded_predict(make(99.5, {60}), 0, kX);
  EXPECT_EQ(r.value, 99.5);
  EXPECT_FALSE(r.flagged);
}

TEST(Guard, OutOfBoundsUsesPeerMean) {
  const auto r = guarded_predict(make(400, {80, 84, 88}), 0, kX);
  EXPECT_EQ(r.value, 84);
  EXPECT_EQ(r.raw, 400);
  EXPECT_TRUE(r.flagged);
  EXPECT_FALSE(r.critical);
}

TEST(Guard, ImplausiblePeersAreSkipped) {
  const auto r = guarded_predict(make(400, {80, 500, 90}), 0, kX);
  EXPECT_EQ(r.value, 85);
}

TEST(Guard, DisabledIsPassthrough) {
  const auto r = guarded_predict(make(400, {80, 84, 88}, false), 0, kX);
  EXPECT_EQ(r.value, 400);
  EXPECT_FALSE(r.flagged);
}

TEST(Guard, NoPlausiblePeerClampsOwn) {
  const auto r = guarded_predict(make(400, {300, -50}), 0, kX);
  EXPECT_TRUE(r.flagged);
  EXPECT_TRUE(r.critical);
  EXPECT_EQ(r.value, 100);
  const auto low = guarded_predict(make(-80, {}), 0, kX);
  EXPECT_EQ(low.value, 30);
}

TEST(Guard, NonFiniteOwnPredictionIsFlagged) {
  const auto r = guarded_predict(make(std::nan(""), {70}), 0, kX);
  EXPECT_TRUE(r.flagged);
  EXPECT_EQ(r.value, 70);
}

TEST(HostModel, RoundTripKeepsKind) {
  const HostModel m(HostModel::Variant(testutil::constant_model(55, {40, 90})));
  const auto back = parse_host_model(m.serialize());
  EXPECT_EQ(back.kind(), "ols");
  EXPECT_EQ(back.predict(kX), 55);
  EXPECT_EQ(back.target_bounds().max, 90);
  EXPECT_THROW(parse_host_model("junk"), Error);
}

TEST(Predictors, IndexOfUnknownHostThrows) {
  const auto p = make(50, {60});
  EXPECT_EQ(p.index_of("h1"), 1u);
  EXPECT_THROW(p.index_of("nope"), InvalidArgument);
}
