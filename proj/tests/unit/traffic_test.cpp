#include <gtest/gtest.h>

#include "telroute/env.hpp"
#include "telroute/traffic.hpp"

using namespace telroute;

TEST(Traffic, DeterministicSchedule) {
  const Topology t = build_mini5();
  EXPECT_EQ(generate_schedule(t, 3, 1.0, 2000), generate_schedule(t, 3, 1.0, 2000));
  EXPECT_NE(generate_schedule(t, 3, 1.0, 2000), generate_schedule(t, 4, 1.0, 2000));
}

TEST(Traffic, ProtocolMixNearEightyPercentTcp) {
  const FlowSchedule s = generate_schedule(build_mini5(), 3, 1.0, 2000);
  ASSERT_GE(s.flows.size(), 200u);
  int tcp = 0;
  for (const Flow& f : s.flows) tcp += f.protocol == Protocol::TCP;
  const double frac = static_cast<double>(tcp) / static_cast<double>(s.flows.size());
  EXPECT_GE(frac, 0.7);
  EXPECT_LE(frac, 0.9);
}

TEST(Traffic, DoublingIntensityDoublesFlowCount) {
  const Topology t = build_mini5();
  const double one = static_cast<double>(generate_schedule(t, 3, 1.0, 2000).flows.size());
  const double two = static_cast<double>(generate_schedule(t, 3, 2.0, 2000).flows.size());
  EXPECT_NEAR(two / one, 2.0, 0.4);
}

TEST(Traffic, FlowInvariants) {
  const Topology t = build_mini5();
  const FlowSchedule s = generate_schedule(t, 9, 1.5, 2000);
  double last = 0.0;
  for (const Flow& f : s.flows) {
    EXPECT_NE(f.src, f.dst);
    EXPECT_GE(f.start_ms, 0.0);
    EXPECT_LT(f.start_ms, 2000.0);
    EXPECT_GE(f.start_ms, last);
    last = f.start_ms;
    EXPECT_GT(f.offered_bytes(), 0);
    if (f.protocol == Protocol::TCP) {
      EXPECT_GE(f.size_bytes, 1000);
      EXPECT_LE(f.size_bytes, 20000000);
    } else {
      EXPECT_GE(f.bitrate_mbps, 1.0);
      EXPECT_LE(f.bitrate_mbps, 20.0);
      EXPECT_GE(f.duration_ms, 50.0);
      EXPECT_LE(f.duration_ms, 500.0);
    }
  }
}

TEST(Traffic, RejectsBadArguments) {
  EXPECT_ANY_THROW(generate_schedule(build_mini5(), 1, 0.0, 2000));
  EXPECT_ANY_THROW(generate_schedule(build_mini5(), 1, 1.0, -5));
}

TEST(Traffic, JsonRoundTrip) {
  const FlowSchedule s = generate_schedule(build_mini5(), 5, 1.0, 500);
  EXPECT_EQ(schedule_from_json(schedule_to_json(s)), s);
}

TEST(Traffic, CalibrationPicksSmallestDroppingGridPoint) {
  // Drops start at 2x: the search must stop there.
  std::vector<double> probed;
  const double got = calibrate_intensity(
      [&](double i) {
        probed.push_back(i);
        return i >= 2.0 ? std::int64_t{1} : std::int64_t{0};
      },
      1.0);
  EXPECT_DOUBLE_EQ(got, 2.0);
  EXPECT_EQ(probed, (std::vector<double>{0.25, 0.5, 1.0, 2.0}));
}

TEST(Traffic, CalibrationGridExhausted) {
  try {
    calibrate_intensity([](double) { return std::int64_t{0}; }, 1.0);
    FAIL();
  } catch (const TrafficError& e) {
    EXPECT_NE(std::string(e.what()).find("16"), std::string::npos) << e.what();
  }
}

TEST(Traffic, CalibratedIntensityDropsUnderStaticRouting) {
  EnvConfig cfg;
  cfg.horizon = 100;
  const Topology t = build_mini5();
  const double a = calibrate_intensity(t, 1, cfg);
  EXPECT_EQ(a, calibrate_intensity(t, 1, cfg));
  auto topo = std::make_shared<const Topology>(t);
  EXPECT_GT(static_drop_bytes(topo, generate_schedule(t, 1, a, 500), cfg), 0);
}
