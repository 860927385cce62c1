#include "telroute/telemetry.hpp"

#include <algorithm>
#include <limits>
#include <queue>

#include <json.hpp>

namespace telroute {

namespace {
constexpr double kBytesPerMB = 1e6;
}

DelayMetrics::DelayMetrics(const Topology& topology) : n_(topology.num_nodes()) {
  const auto n = static_cast<std::size_t>(n_);
  constexpr SimTime kInf = std::numeric_limits<SimTime>::max();
  dist_.assign(n * n, kInf);
  parent_.assign(n * n, -1);
  using Item = std::pair<SimTime, NodeId>;
  for (NodeId root = 0; root < n_; ++root) {
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    dist_[idx(root, root)] = 0;
    heap.push({0, root});
    while (!heap.empty()) {
      auto [d, u] = heap.top();
      heap.pop();
      if (d != dist_[idx(root, u)]) continue;
      for (EdgeId e : topology.out_edges(u)) {
        const NodeId v = topology.edge(e).dst;
        const SimTime nd = d + topology.delay_us(e);
        SimTime& dv = dist_[idx(root, v)];
        if (nd < dv || (nd == dv && u < parent_[idx(root, v)])) {
          const bool improved = nd < dv;
          dv = nd;
          parent_[idx(root, v)] = u;
          if (improved) heap.push({nd, v});
        }
      }
    }
  }
  SimTime best = kInf;
  for (NodeId v = 0; v < n_; ++v) {
    SimTime ecc = 0;
    for (NodeId u = 0; u < n_; ++u) ecc = std::max(ecc, dist_[idx(v, u)]);
    if (ecc < best) {
      best = ecc;
      central_ = v;
    }
  }
}

double DelayMetrics::eccentricity_ms(NodeId v) const {
  SimTime ecc = 0;
  for (NodeId u = 0; u < n_; ++u) ecc = std::max(ecc, delay_us(v, u));
  return us_to_ms(ecc);
}

std::int64_t NodeSnapshot::tx_total() const {
  std::int64_t s = 0;
  for (auto b : tx_bytes_to) s += b;
  return s;
}

std::int64_t NodeSnapshot::rx_total() const {
  std::int64_t s = 0;
  for (auto b : rx_bytes_from) s += b;
  return s;
}

void SnapshotStore::insert(NodeSnapshot snapshot) {
  auto& list = per_node_.at(static_cast<std::size_t>(snapshot.node));
  if (!list.empty() && list.back().timestamp >= snapshot.timestamp) {
    throw std::logic_error("snapshot timestamps must increase per node");
  }
  list.push_back(std::move(snapshot));
}

void SnapshotStore::record(const Topology& topology, const StepTrace& trace, SimTime timestamp) {
  for (NodeId u = 0; u < topology.num_nodes(); ++u) {
    const auto& nc = trace.nodes[static_cast<std::size_t>(u)];
    NodeSnapshot s;
    s.node = u;
    s.timestamp = timestamp;
    s.tx_bytes_to = nc.tx_bytes_to;
    s.rx_bytes_from = nc.rx_bytes_from;
    s.drop_bytes = nc.drop_bytes;
    s.discard_bytes = nc.discard_bytes;
    for (EdgeId e : topology.out_edges(u)) {
      const auto& ec = trace.edges[static_cast<std::size_t>(e)];
      s.outgoing.push_back({e, ec.queue_bytes, ec.occupancy, ec.mean_occupancy, ec.drop_bytes,
                            ec.tx_bytes, topology.datarate_mbps(e), topology.delay_ms(e)});
    }
    for (EdgeId e : topology.in_edges(u)) {
      s.incoming.push_back({e, trace.edges[static_cast<std::size_t>(e)].tx_bytes});
    }
    insert(std::move(s));
  }
}

void SnapshotStore::record_idle(const Topology& topology, SimTime timestamp) {
  StepTrace idle;
  const auto n = static_cast<std::size_t>(topology.num_nodes());
  idle.nodes.resize(n);
  for (auto& nc : idle.nodes) {
    nc.tx_bytes_to.assign(n, 0);
    nc.rx_bytes_from.assign(n, 0);
  }
  idle.edges.resize(static_cast<std::size_t>(topology.num_edges()));
  record(topology, idle, timestamp);
}

const NodeSnapshot* SnapshotStore::latest_at_or_before(NodeId node, SimTime at) const {
  const auto& list = per_node_.at(static_cast<std::size_t>(node));
  auto it = std::upper_bound(list.begin(), list.end(), at,
                             [](SimTime t, const NodeSnapshot& s) { return t < s.timestamp; });
  if (it == list.begin()) return nullptr;
  return &*std::prev(it);
}

std::size_t SnapshotStore::count_at(SimTime timestamp) const {
  std::size_t c = 0;
  for (const auto& list : per_node_) {
    for (const auto& s : list) c += s.timestamp == timestamp ? 1 : 0;
  }
  return c;
}

ObservationGraph assemble_observation(const SnapshotStore& store,
                                      std::shared_ptr<const Topology> topology,
                                      const DelayMetrics& delays, NodeId observer,
                                      SimTime now, double step_fraction) {
  using namespace features;
  const Topology& topo = *topology;
  const int n = topo.num_nodes();
  ObservationGraph g;
  g.topology = topology;
  g.observer_id = observer;
  g.time = now;
  g.node_features.assign(static_cast<std::size_t>(n) * kNode, 0.0);
  g.edge_features.assign(static_cast<std::size_t>(topo.num_edges()) * kEdge, 0.0);
  g.global_features.assign(kGlobal, 0.0);
  g.node_timestamps.assign(static_cast<std::size_t>(n), -1);

  // Snapshot each node's information is taken from.
  std::vector<const NodeSnapshot*> used(static_cast<std::size_t>(n), nullptr);
  for (NodeId u = 0; u < n; ++u) {
    const SimTime at = (observer < 0 || u == observer) ? now : now - delays.delay_us(observer, u);
    used[static_cast<std::size_t>(u)] = store.latest_at_or_before(u, at);
  }

  double delivered = 0.0;
  for (NodeId u = 0; u < n; ++u) {
    const NodeSnapshot* s = used[static_cast<std::size_t>(u)];
    if (u == observer) g.node(u, kIsObserver) = 1.0;
    if (s == nullptr) {
      g.node(u, kMissing) = 1.0;
      continue;
    }
    g.node_timestamps[static_cast<std::size_t>(u)] = s->timestamp;
    g.node(u, kTxMB) = static_cast<double>(s->tx_total()) / kBytesPerMB;
    g.node(u, kRxMB) = static_cast<double>(s->rx_total()) / kBytesPerMB;
    g.node(u, kDropMB) = static_cast<double>(s->drop_bytes) / kBytesPerMB;
    g.node(u, kDiscardMB) = static_cast<double>(s->discard_bytes) / kBytesPerMB;
    g.node(u, kAgeMs) = us_to_ms(now - s->timestamp);
    delivered += g.node(u, kRxMB);
  }

  for (NodeId u = 0; u < n; ++u) {
    const auto out = topo.out_edges(u);
    for (std::size_t k = 0; k < out.size(); ++k) {
      const EdgeId e = out[k];
      const NodeId dst = topo.edge(e).dst;
      g.edge(e, kDatarate) = topo.datarate_mbps(e);
      g.edge(e, kDelay) = topo.delay_ms(e);
      const NodeSnapshot* s = used[static_cast<std::size_t>(u)];
      if (observer >= 0 && dst == observer && u != observer) {
        // Incident to the observer: visible without delay.
        s = store.latest_at_or_before(u, now);
      }
      if (s == nullptr) continue;
      const OutgoingEdgeSnapshot& es = s->outgoing[k];
      g.edge(e, kOccupancy) = es.occupancy;
      g.edge(e, kEdgeDropMB) = static_cast<double>(es.drop_bytes) / kBytesPerMB;
    }
  }

  g.global_features[kStepFraction] = step_fraction;
  g.global_features[kDeliveredMB] = delivered;
  return g;
}

ObservationGraph for_agent(const ObservationGraph& graph, NodeId agent) {
  ObservationGraph g = graph;
  for (NodeId v = 0; v < g.num_nodes(); ++v) g.node(v, features::kIsObserver) = 0.0;
  g.node(agent, features::kIsObserver) = 1.0;
  g.agent_id = agent;
  return g;
}

std::string observation_to_json(const ObservationGraph& graph) {
  nlohmann::ordered_json doc;
  doc["observer_id"] = graph.observer_id;
  doc["agent_id"] = graph.agent_id;
  doc["time_us"] = graph.time;
  doc["layout_version"] = features::kLayoutVersion;
  doc["node_features"] = graph.node_features;
  doc["edge_features"] = graph.edge_features;
  doc["global_features"] = graph.global_features;
  doc["node_timestamps_us"] = graph.node_timestamps;
  return doc.dump();
}

std::int64_t payload_size(PayloadMode mode, std::int64_t num_nodes,
                          std::int64_t num_neighbors, std::int64_t extra_entries) {
  if (num_nodes < 0 || num_neighbors < 0 || extra_entries < 0) {
    throw std::invalid_argument("payload_size arguments must be nonnegative");
  }
  if (mode == PayloadMode::Compact) return 62 * num_neighbors + 268;
  return 32 * num_nodes * num_nodes + 62 * num_neighbors + 232 * extra_entries + 4;
}

}  // namespace telroute
