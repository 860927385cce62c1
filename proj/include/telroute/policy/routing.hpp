#pragma once

#include <span>
#include <string>
#include <vector>

#include "telroute/netsim.hpp"
#include "telroute/topology.hpp"

namespace telroute::policy {

// Next hop of `source` towards every destination under positive per-edge
// weights (indexed by directed edge id). Ties are broken lexicographically on
// (path cost, next-hop id). Entry `source` is -1.
std::vector<NodeId> shortest_next_hops(const Topology& topology, std::span<const double> weights, NodeId source);

// Shortest path cost from source to every node.
std::vector<double> shortest_costs(const Topology& topology, std::span<const double> weights, NodeId source);

// Full table from one shared weight vector.
ForwardingTable to_action_single(const Topology& topology, std::span<const double> weights);
// Rows of router u computed from u's own weights.
std::vector<RowUpdate> to_action_local(const Topology& topology, NodeId u, std::span<const double> weights);

std::vector<RowUpdate> table_rows(const ForwardingTable& table, NodeId u);

enum class Metric { OSPF, EIGRP, RIP };

Metric parse_metric(const std::string& name);
std::string to_string(Metric metric);

// OSPF: 1e8 / bps. EIGRP: 1e7 / kbps + delay_us / 10. RIP: 1.
std::vector<double> sp_baseline(const Topology& topology, Metric metric);

// Throws RoutingError if a next hop is no neighbor or following the rows
// from some router never reaches the destination.
void check_loop_free(const Topology& topology, const ForwardingTable& table);

}  // namespace telroute::policy
