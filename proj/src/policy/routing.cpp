#include "telroute/policy/routing.hpp"

#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

namespace telroute::policy {

namespace {

struct Label {
  double cost = std::numeric_limits<double>::infinity();
  NodeId hop = std::numeric_limits<NodeId>::max();
  bool operator<(const Label& o) const { return std::tie(cost, hop) < std::tie(o.cost, o.hop); }
};

std::vector<Label> dijkstra(const Topology& topology, std::span<const double> weights, NodeId source) {
  if (static_cast<int>(weights.size()) != topology.num_edges()) {
    throw std::invalid_argument("weights must have one entry per directed edge");
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("link weights must be positive and finite");
  }
  const auto n = static_cast<std::size_t>(topology.num_nodes());
  std::vector<Label> best(n);
  std::vector<char> done(n, 0);
  using Item = std::tuple<double, NodeId, NodeId>;  // cost, first hop, node
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  best[static_cast<std::size_t>(source)] = {0.0, -1};
  heap.push({0.0, -1, source});
  while (!heap.empty()) {
    auto [c, h, u] = heap.top();
    heap.pop();
    if (done[static_cast<std::size_t>(u)]) continue;
    done[static_cast<std::size_t>(u)] = 1;
    for (EdgeId e : topology.out_edges(u)) {
      const NodeId v = topology.edge(e).dst;
      if (done[static_cast<std::size_t>(v)]) continue;
      const Label cand{c + weights[static_cast<std::size_t>(e)], u == source ? v : h};
      if (cand < best[static_cast<std::size_t>(v)]) {
        best[static_cast<std::size_t>(v)] = cand;
        heap.push({cand.cost, cand.hop, v});
      }
    }
  }
  return best;
}

}  // namespace

std::vector<NodeId> shortest_next_hops(const Topology& topology, std::span<const double> weights, NodeId source) {
  const auto labels = dijkstra(topology, weights, source);
  std::vector<NodeId> hops(labels.size());
  for (std::size_t z = 0; z < labels.size(); ++z) hops[z] = labels[z].hop;
  hops[static_cast<std::size_t>(source)] = -1;
  return hops;
}

std::vector<double> shortest_costs(const Topology& topology, std::span<const double> weights, NodeId source) {
  const auto labels = dijkstra(topology, weights, source);
  std::vector<double> costs(labels.size());
  for (std::size_t z = 0; z < labels.size(); ++z) costs[z] = labels[z].cost;
  return costs;
}

ForwardingTable to_action_single(const Topology& topology, std::span<const double> weights) {
  ForwardingTable table(topology.num_nodes());
  for (NodeId u = 0; u < topology.num_nodes(); ++u) {
    const auto hops = shortest_next_hops(topology, weights, u);
    for (NodeId z = 0; z < topology.num_nodes(); ++z) {
      if (z != u) table.set(u, z, hops[static_cast<std::size_t>(z)]);
    }
  }
  return table;
}

std::vector<RowUpdate> to_action_local(const Topology& topology, NodeId u, std::span<const double> weights) {
  const auto hops = shortest_next_hops(topology, weights, u);
  std::vector<RowUpdate> rows;
  for (NodeId z = 0; z < topology.num_nodes(); ++z) {
    if (z != u) rows.push_back({z, hops[static_cast<std::size_t>(z)]});
  }
  return rows;
}

std::vector<RowUpdate> table_rows(const ForwardingTable& table, NodeId u) {
  std::vector<RowUpdate> rows;
  for (NodeId z = 0; z < table.num_nodes(); ++z) {
    if (z != u) rows.push_back({z, table.next_hop(u, z)});
  }
  return rows;
}

Metric parse_metric(const std::string& name) {
  if (name == "OSPF" || name == "ospf") return Metric::OSPF;
  if (name == "EIGRP" || name == "eigrp") return Metric::EIGRP;
  if (name == "RIP" || name == "rip") return Metric::RIP;
  throw std::invalid_argument("unknown shortest-path metric: " + name + " (expected OSPF, EIGRP or RIP)");
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::OSPF: return "OSPF";
    case Metric::EIGRP: return "EIGRP";
    case Metric::RIP: return "RIP";
  }
  return "?";
}

std::vector<double> sp_baseline(const Topology& topology, Metric metric) {
  std::vector<double> w(static_cast<std::size_t>(topology.num_edges()));
  for (EdgeId e = 0; e < topology.num_edges(); ++e) {
    const double mbps = topology.datarate_mbps(e);
    switch (metric) {
      case Metric::OSPF: w[static_cast<std::size_t>(e)] = 1e8 / (mbps * 1e6); break;
      case Metric::EIGRP:
        w[static_cast<std::size_t>(e)] = 1e7 / (mbps * 1e3) + static_cast<double>(topology.delay_us(e)) / 10.0;
        break;
      case Metric::RIP: w[static_cast<std::size_t>(e)] = 1.0; break;
    }
  }
  return w;
}

void check_loop_free(const Topology& topology, const ForwardingTable& table) {
  table.validate(topology);
  const int n = topology.num_nodes();
  for (NodeId z = 0; z < n; ++z) {
    for (NodeId u = 0; u < n; ++u) {
      NodeId at = u;
      int hops = 0;
      while (at != z) {
        at = table.next_hop(at, z);
        if (++hops > n) {
          throw RoutingError("forwarding loop towards " + std::to_string(z) + " starting at " + std::to_string(u));
        }
      }
    }
  }
}

}  // namespace telroute::policy
