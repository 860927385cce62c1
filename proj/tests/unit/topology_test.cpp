#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <queue>

#include "oracles.hpp"
#include "telroute/telemetry.hpp"
#include "telroute/topology.hpp"

using namespace telroute;

namespace {

int reachable_from_zero(const Topology& t) {
  std::vector<char> seen(static_cast<std::size_t>(t.num_nodes()), 0);
  std::queue<NodeId> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (NodeId v : t.neighbors(u)) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  return count;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("telroute_" + name);
}

}  // namespace

TEST(Topology, Mini5Shape) {
  const Topology t = build_mini5();
  EXPECT_EQ(t.num_nodes(), 5);
  EXPECT_EQ(t.links().size(), 6u);
  EXPECT_EQ(t.num_edges(), 12);
  for (EdgeId e = 0; e < t.num_edges(); ++e) {
    const DirectedEdge& d = t.edge(e);
    const Link& l = t.links()[static_cast<std::size_t>(e / 2)];
    EXPECT_EQ(d.src, e % 2 == 0 ? l.u : l.v);
    EXPECT_EQ(d.dst, e % 2 == 0 ? l.v : l.u);
  }
}

TEST(Topology, Mini5CentralNode) {
  const Topology t = build_mini5();
  const DelayMetrics d(t);
  EXPECT_EQ(d.central_node(), 1);
  EXPECT_DOUBLE_EQ(d.eccentricity_ms(1), 8.0);
  EXPECT_LE(d.delay_ms(1, 0), 5.0);
  EXPECT_GT(d.delay_ms(1, 3), 5.0);
  EXPECT_LE(d.delay_ms(1, 3), 10.0);
  EXPECT_DOUBLE_EQ(d.delay_ms(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(d.delay_ms(1, 2), 4.0);
  EXPECT_DOUBLE_EQ(d.delay_ms(1, 4), 6.0);
}

TEST(Topology, NxNodeRanges) {
  const Topology xs = generate_nx(SizeClass::XS, 7);
  EXPECT_GE(xs.num_nodes(), 6);
  EXPECT_LE(xs.num_nodes(), 10);
  const Topology l = generate_nx(SizeClass::L, 1);
  EXPECT_GE(l.num_nodes(), 51);
  EXPECT_LE(l.num_nodes(), 100);
  EXPECT_EQ(generate_nx(SizeClass::XS, 7), xs);
}

TEST(Topology, GeneratedTopologiesRespectBounds) {
  for (SizeClass c : {SizeClass::XS, SizeClass::S, SizeClass::M, SizeClass::L}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Topology t = generate_nx(c, seed);
      const auto [lo, hi] = node_range(c);
      EXPECT_GE(t.num_nodes(), lo);
      EXPECT_LE(t.num_nodes(), hi);
      EXPECT_EQ(reachable_from_zero(t), t.num_nodes());
      for (const Link& l : t.links()) {
        EXPECT_GE(l.datarate_mbps, 50.0);
        EXPECT_LE(l.datarate_mbps, 200.0);
        EXPECT_GE(l.delay_ms, 1.0);
        EXPECT_LE(l.delay_ms, 10.0);
      }
    }
  }
}

TEST(Topology, BufferBytesPositiveAndMonotone) {
  EXPECT_EQ(buffer_bytes_for(100.0, 1.0), 25000);  // 100 Mbps x 2 ms
  for (double rate : {50.0, 100.0, 200.0}) {
    for (double delay : {1.0, 5.0, 10.0}) {
      EXPECT_GT(buffer_bytes_for(rate, delay), 0);
      EXPECT_LT(buffer_bytes_for(rate, delay), buffer_bytes_for(rate * 1.5, delay));
      EXPECT_LT(buffer_bytes_for(rate, delay), buffer_bytes_for(rate, delay * 1.5));
    }
  }
}

TEST(Topology, SaveLoadRoundTrip) {
  const auto path = temp_file("mini5.json");
  save_topology(build_mini5(), path);
  EXPECT_EQ(load_topology(path), build_mini5());
  const Topology nx = generate_nx(SizeClass::S, 3);
  EXPECT_EQ(topology_from_json(topology_to_json(nx)), nx);
  std::filesystem::remove(path);
}

TEST(Topology, RejectsDisconnectedGraph) {
  const std::string doc =
      R"({"nodes": 4, "links": [{"u":0,"v":1,"datarate_mbps":100,"delay_ms":1},)"
      R"({"u":2,"v":3,"datarate_mbps":100,"delay_ms":1}]})";
  try {
    topology_from_json(doc);
    FAIL() << "expected an error";
  } catch (const TopologyError& e) {
    EXPECT_NE(std::string(e.what()).find("graph not connected"), std::string::npos);
  }
}

TEST(Topology, RejectsNegativeDelay) {
  const std::string doc = R"({"nodes": 2, "links": [{"u":0,"v":1,"datarate_mbps":100,"delay_ms":-1}]})";
  EXPECT_THROW(topology_from_json(doc), TopologyError);
}

TEST(Topology, MalformedDocumentNamesField) {
  const std::string doc = R"({"nodes": 2, "links": [{"u":0,"v":1,"delay_ms":1}]})";
  try {
    topology_from_json(doc);
    FAIL() << "expected an error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("datarate_mbps"), std::string::npos) << e.what();
  }
}

TEST(Topology, ShortestDelayMatchesPathEnumeration) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Topology t = oracle::random_topology(rng, 8, 5);
    std::vector<double> delays(static_cast<std::size_t>(t.num_edges()));
    for (EdgeId e = 0; e < t.num_edges(); ++e) delays[static_cast<std::size_t>(e)] = t.delay_ms(e);
    const DelayMetrics d(t);
    for (NodeId v = 0; v < t.num_nodes(); ++v) {
      EXPECT_EQ(d.delay_us(v, v), 0);
      for (NodeId u = 0; u < t.num_nodes(); ++u) {
        if (u == v) continue;
        EXPECT_NEAR(d.delay_ms(v, u), oracle::best_route(t, delays, v, u).cost, 1e-9);
      }
    }
  }
}

TEST(Topology, DelayTreeParentsLieOnShortestPaths) {
  const Topology t = build_mini5();
  const DelayMetrics d(t);
  for (NodeId root = 0; root < t.num_nodes(); ++root) {
    EXPECT_EQ(d.tree_parent(root, root), -1);
    for (NodeId u = 0; u < t.num_nodes(); ++u) {
      if (u == root) continue;
      const NodeId p = d.tree_parent(root, u);
      const EdgeId e = t.edge_between(p, u);
      ASSERT_GE(e, 0);
      EXPECT_EQ(d.delay_us(root, p) + t.delay_us(e), d.delay_us(root, u));
    }
  }
}
