#include <gtest/gtest.h>

#include "telroute/env.hpp"
#include "telroute/policy/routing.hpp"
#include "telroute/telemetry.hpp"

using namespace telroute;
namespace f = telroute::features;

namespace {

constexpr SimTime kTau = 5000;

// Runs mini5 with traffic under EIGRP routing, recording one snapshot per step.
struct Recorded {
  std::shared_ptr<const Topology> topo = std::make_shared<const Topology>(build_mini5());
  DelayMetrics delays{*topo};
  SnapshotStore store{5};
  std::vector<StepTrace> traces;

  explicit Recorded(int steps) {
    const FlowSchedule s = generate_schedule(*topo, 3, 1.0, steps * 5.0);
    Simulator sim(*topo, s, policy::to_action_single(*topo, policy::sp_baseline(*topo, policy::Metric::EIGRP)));
    store.record_idle(*topo, 0);
    for (int t = 1; t <= steps; ++t) {
      traces.push_back(sim.advance(t * kTau));
      store.record(*topo, traces.back(), t * kTau);
    }
  }
};

}  // namespace

TEST(Telemetry, RecordAddsOneSnapshotPerNode) {
  Recorded r(1);
  EXPECT_EQ(r.store.count_at(kTau), 5u);
  for (NodeId v = 0; v < 5; ++v) EXPECT_EQ(r.store.count(v), 2u);
}

TEST(Telemetry, IdleSnapshotsAreZero) {
  SnapshotStore store(5);
  const Topology t = build_mini5();
  store.record_idle(t, 0);
  for (NodeId v = 0; v < 5; ++v) {
    const NodeSnapshot* s = store.latest_at_or_before(v, 0);
    ASSERT_NE(s, nullptr);
    EXPECT_EQ(s->tx_total(), 0);
    EXPECT_EQ(s->rx_total(), 0);
    EXPECT_EQ(s->drop_bytes, 0);
    for (const auto& o : s->outgoing) EXPECT_EQ(o.queue_bytes, 0);
  }
}

TEST(Telemetry, SnapshotCountersMatchTrace) {
  Recorded r(40);
  for (std::size_t k = 0; k < r.traces.size(); ++k) {
    const StepTrace& tr = r.traces[k];
    const SimTime ts = static_cast<SimTime>(k + 1) * kTau;
    std::int64_t delivered = 0;
    for (const TerminalEvent& e : tr.events) {
      if (e.kind == TerminalKind::Delivered) delivered += e.payload_bytes;
    }
    std::int64_t rx = 0;
    std::int64_t drops = 0;
    for (NodeId v = 0; v < 5; ++v) {
      const NodeSnapshot* s = r.store.latest_at_or_before(v, ts);
      ASSERT_EQ(s->timestamp, ts);
      rx += s->rx_total();
      drops += s->drop_bytes;
      for (const auto& o : s->outgoing) {
        EXPECT_GE(o.occupancy, 0.0);
        EXPECT_LE(o.occupancy, 1.0);
        EXPECT_EQ(o.tx_bytes, tr.edges[static_cast<std::size_t>(o.edge)].tx_bytes);
      }
    }
    EXPECT_EQ(rx, delivered);
    EXPECT_EQ(drops, tr.dropped_bytes);
  }
}

TEST(Telemetry, StoreRejectsOutOfOrderTimestamps) {
  SnapshotStore store(5);
  const Topology t = build_mini5();
  store.record_idle(t, 5000);
  EXPECT_ANY_THROW(store.record_idle(t, 5000));
  EXPECT_EQ(store.latest_at_or_before(0, 4999), nullptr);
}

TEST(Telemetry, Figure2Staleness) {
  Recorded r(10);
  const SimTime now = 10 * kTau;
  const ObservationGraph g = assemble_observation(r.store, r.topo, r.delays, 1, now, 0.5);
  EXPECT_EQ(g.observer_id, 1);
  EXPECT_EQ(g.node_timestamps[1], now);
  EXPECT_EQ(g.node_timestamps[0], now - kTau);
  EXPECT_EQ(g.node_timestamps[2], now - kTau);
  EXPECT_EQ(g.node_timestamps[3], now - 2 * kTau);
  EXPECT_EQ(g.node_timestamps[4], now - 2 * kTau);
  EXPECT_DOUBLE_EQ(g.node(3, f::kAgeMs), 10.0);
  EXPECT_DOUBLE_EQ(g.node(1, f::kIsObserver), 1.0);
  EXPECT_DOUBLE_EQ(g.node(0, f::kIsObserver), 0.0);
}

TEST(Telemetry, BirdseyeIsCurrent) {
  Recorded r(4);
  const ObservationGraph g = assemble_observation(r.store, r.topo, r.delays, -1, 4 * kTau, 1.0);
  EXPECT_EQ(g.observer_id, -1);
  for (SimTime ts : g.node_timestamps) EXPECT_EQ(ts, 4 * kTau);
  for (NodeId v = 0; v < 5; ++v) EXPECT_DOUBLE_EQ(g.node(v, f::kIsObserver), 0.0);
}

TEST(Telemetry, MissingSnapshotsAreFlagged) {
  // Observer 1 at the start: node 3 is 8 ms away, so nothing qualifies.
  SnapshotStore store(5);
  auto topo = std::make_shared<const Topology>(build_mini5());
  const DelayMetrics d(*topo);
  store.record_idle(*topo, 0);
  const ObservationGraph g = assemble_observation(store, topo, d, 1, 0, 0.0);
  EXPECT_EQ(g.node_timestamps[3], -1);
  EXPECT_DOUBLE_EQ(g.node(3, f::kMissing), 1.0);
  EXPECT_DOUBLE_EQ(g.node(3, f::kTxMB), 0.0);
  EXPECT_DOUBLE_EQ(g.node(1, f::kMissing), 0.0);
}

TEST(Telemetry, StalenessInvariants) {
  Recorded r(30);
  std::vector<std::vector<SimTime>> last(5, std::vector<SimTime>(5, -1));
  for (int t = 0; t <= 30; ++t) {
    const SimTime now = t * kTau;
    const ObservationGraph bird = assemble_observation(r.store, r.topo, r.delays, -1, now, 0.0);
    for (NodeId v = 0; v < 5; ++v) {
      const ObservationGraph g = assemble_observation(r.store, r.topo, r.delays, v, now, 0.0);
      EXPECT_EQ(g.node_features.size(), bird.node_features.size());
      EXPECT_EQ(g.edge_features.size(), bird.edge_features.size());
      for (NodeId u = 0; u < 5; ++u) {
        const SimTime ts = g.node_timestamps[static_cast<std::size_t>(u)];
        if (u != v && ts >= 0) EXPECT_LE(ts, now - r.delays.delay_us(v, u));
        EXPECT_GE(ts, last[static_cast<std::size_t>(v)][static_cast<std::size_t>(u)]);
        EXPECT_GE(bird.node_timestamps[static_cast<std::size_t>(u)], ts);
        last[static_cast<std::size_t>(v)][static_cast<std::size_t>(u)] = ts;
      }
    }
  }
}

TEST(Telemetry, ObserverSeesOwnEdgesFresh) {
  Recorded r(20);
  const SimTime now = 20 * kTau;
  const ObservationGraph bird = assemble_observation(r.store, r.topo, r.delays, -1, now, 0.0);
  const ObservationGraph g = assemble_observation(r.store, r.topo, r.delays, 3, now, 0.0);
  for (EdgeId e : r.topo->out_edges(3)) {
    for (int c = 0; c < f::kEdge; ++c) EXPECT_DOUBLE_EQ(g.edge(e, c), bird.edge(e, c));
  }
}

TEST(Telemetry, ForAgentMovesObserverFlag) {
  Recorded r(2);
  const ObservationGraph base = assemble_observation(r.store, r.topo, r.delays, 1, 2 * kTau, 0.0);
  const ObservationGraph g = for_agent(base, 4);
  EXPECT_EQ(g.agent_id, 4);
  EXPECT_DOUBLE_EQ(g.node(4, f::kIsObserver), 1.0);
  EXPECT_DOUBLE_EQ(g.node(1, f::kIsObserver), 0.0);
}

TEST(Telemetry, PayloadFormulas) {
  EXPECT_EQ(payload_size(PayloadMode::Compact, 5, 19), 1446);
  EXPECT_LE(payload_size(PayloadMode::Compact, 5, 19), kMaxPacketPayload);
  EXPECT_GT(payload_size(PayloadMode::Compact, 5, 20), kMaxPacketPayload);
  EXPECT_EQ(payload_size(PayloadMode::Compact, 5, 3), 454);
  EXPECT_EQ(payload_size(PayloadMode::Full, 5, 2), 32 * 25 + 124 + 4);
  EXPECT_EQ(payload_size(PayloadMode::Full, 5, 2), 928);
  EXPECT_EQ(payload_size(PayloadMode::Full, 7, 3, 2), 32 * 49 + 62 * 3 + 232 * 2 + 4);
  EXPECT_ANY_THROW(payload_size(PayloadMode::Compact, 5, -1));
}
