#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "telroute/netsim.hpp"
#include "telroute/topology.hpp"

namespace telroute {

// Shortest propagation delays between all router pairs.
class DelayMetrics {
 public:
  explicit DelayMetrics(const Topology& topology);

  SimTime delay_us(NodeId v, NodeId u) const { return dist_[idx(v, u)]; }
  double delay_ms(NodeId v, NodeId u) const { return us_to_ms(delay_us(v, u)); }
  // argmin over v of max_u delay(v, u); ties go to the lowest id.
  NodeId central_node() const { return central_; }
  double eccentricity_ms(NodeId v) const;
  // Parent of u in the minimum-delay spanning tree rooted at root (-1 at the root).
  NodeId tree_parent(NodeId root, NodeId u) const { return parent_[idx(root, u)]; }

 private:
  std::size_t idx(NodeId a, NodeId b) const {
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(b);
  }
  int n_ = 0;
  std::vector<SimTime> dist_;
  std::vector<NodeId> parent_;
  NodeId central_ = 0;
};

inline double shortest_delay(const Topology& topology, NodeId v, NodeId u) {
  return DelayMetrics(topology).delay_ms(v, u);
}
inline NodeId central_node(const Topology& topology) { return DelayMetrics(topology).central_node(); }

struct OutgoingEdgeSnapshot {
  EdgeId edge = 0;
  std::int64_t queue_bytes = 0;
  double occupancy = 0.0;
  double mean_occupancy = 0.0;
  std::int64_t drop_bytes = 0;
  std::int64_t tx_bytes = 0;
  double datarate_mbps = 0.0;
  double delay_ms = 0.0;
};

struct IncomingEdgeSnapshot {
  EdgeId edge = 0;
  std::int64_t rx_bytes = 0;
};

struct NodeSnapshot {
  NodeId node = 0;
  SimTime timestamp = 0;
  std::vector<std::int64_t> tx_bytes_to;
  std::vector<std::int64_t> rx_bytes_from;
  std::int64_t drop_bytes = 0;
  std::int64_t discard_bytes = 0;
  std::vector<OutgoingEdgeSnapshot> outgoing;  // ordered like Topology::out_edges
  std::vector<IncomingEdgeSnapshot> incoming;  // ordered like Topology::in_edges

  std::int64_t tx_total() const;
  std::int64_t rx_total() const;
};

// Append-only per episode; timestamps strictly increase per node.
class SnapshotStore {
 public:
  explicit SnapshotStore(int num_nodes = 0) : per_node_(static_cast<std::size_t>(num_nodes)) {}

  // One NodeSnapshot per node at `timestamp`, built from the step's trace.
  void record(const Topology& topology, const StepTrace& trace, SimTime timestamp);
  // Idle-network snapshots (all counters zero).
  void record_idle(const Topology& topology, SimTime timestamp);

  // Newest snapshot of `node` with timestamp <= at, or nullptr.
  const NodeSnapshot* latest_at_or_before(NodeId node, SimTime at) const;
  std::size_t count(NodeId node) const { return per_node_[static_cast<std::size_t>(node)].size(); }
  std::size_t count_at(SimTime timestamp) const;

 private:
  void insert(NodeSnapshot snapshot);
  std::vector<std::vector<NodeSnapshot>> per_node_;
};

namespace features {
// Node feature columns.
inline constexpr int kTxMB = 0;
inline constexpr int kRxMB = 1;
inline constexpr int kDropMB = 2;
inline constexpr int kDiscardMB = 3;
inline constexpr int kAgeMs = 4;
inline constexpr int kIsObserver = 5;
inline constexpr int kMissing = 6;
inline constexpr int kNode = 7;
// Edge feature columns.
inline constexpr int kDatarate = 0;
inline constexpr int kDelay = 1;
inline constexpr int kOccupancy = 2;
inline constexpr int kEdgeDropMB = 3;
inline constexpr int kPrevWeight = 4;
inline constexpr int kEdge = 5;
// Global feature columns.
inline constexpr int kStepFraction = 0;
inline constexpr int kDeliveredMB = 1;
inline constexpr int kGlobal = 2;
inline constexpr int kLayoutVersion = 1;
}  // namespace features

// Directed attributed graph handed to policies. Edge i is Topology edge i.
struct ObservationGraph {
  std::shared_ptr<const Topology> topology;
  int observer_id = -1;  // -1 for the birds-eye view
  int agent_id = -1;     // acting router in multi-agent modes, else -1
  SimTime time = 0;
  std::vector<double> node_features;    // num_nodes x features::kNode
  std::vector<double> edge_features;    // num_edges x features::kEdge
  std::vector<double> global_features;  // features::kGlobal
  std::vector<SimTime> node_timestamps;  // snapshot time used per node, -1 if none

  int num_nodes() const { return topology->num_nodes(); }
  int num_edges() const { return topology->num_edges(); }
  double node(NodeId v, int col) const {
    return node_features[static_cast<std::size_t>(v) * features::kNode + static_cast<std::size_t>(col)];
  }
  double& node(NodeId v, int col) {
    return node_features[static_cast<std::size_t>(v) * features::kNode + static_cast<std::size_t>(col)];
  }
  double edge(EdgeId e, int col) const {
    return edge_features[static_cast<std::size_t>(e) * features::kEdge + static_cast<std::size_t>(col)];
  }
  double& edge(EdgeId e, int col) {
    return edge_features[static_cast<std::size_t>(e) * features::kEdge + static_cast<std::size_t>(col)];
  }
};

// Observation of `observer` (-1: birds-eye) at simulation time `now`. Remote
// node u is seen through its newest snapshot at or before now - delay(observer, u);
// the observer's own node and incident edges, and every node for the
// birds-eye view, use the snapshot at `now`.
ObservationGraph assemble_observation(const SnapshotStore& store,
                                      std::shared_ptr<const Topology> topology,
                                      const DelayMetrics& delays, NodeId observer,
                                      SimTime now, double step_fraction);

// Same features with the is-observer flag moved to `agent`.
ObservationGraph for_agent(const ObservationGraph& graph, NodeId agent);

std::string observation_to_json(const ObservationGraph& graph);

enum class PayloadMode { Full, Compact };

// Serialized NodeSnapshot size in bytes.
std::int64_t payload_size(PayloadMode mode, std::int64_t num_nodes,
                          std::int64_t num_neighbors, std::int64_t extra_entries = 0);
inline constexpr std::int64_t kMaxPacketPayload = 1500;

}  // namespace telroute
