#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace telroute {

using NodeId = int;
using EdgeId = int;

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Link {
  NodeId u = 0;
  NodeId v = 0;
  double datarate_mbps = 0.0;
  double delay_ms = 0.0;

  bool operator==(const Link&) const = default;
};

struct DirectedEdge {
  NodeId src = 0;
  NodeId dst = 0;
  int link = 0;
};

enum class SizeClass { XS, S, M, L };

// Undirected router graph with symmetric links. Every link i expands into the
// directed edges 2i (u->v) and 2i+1 (v->u); that order is shared by the
// simulator, the observation graphs and the policy outputs.
class Topology {
 public:
  Topology() = default;
  // Throws TopologyError if the graph violates an invariant.
  Topology(int num_nodes, std::vector<Link> links);

  int num_nodes() const { return num_nodes_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  std::span<const Link> links() const { return links_; }
  std::span<const DirectedEdge> edges() const { return edges_; }
  const DirectedEdge& edge(EdgeId e) const { return edges_[static_cast<std::size_t>(e)]; }
  const Link& link_of(EdgeId e) const { return links_[static_cast<std::size_t>(edges_[static_cast<std::size_t>(e)].link)]; }

  // Neighbors sorted ascending.
  std::span<const NodeId> neighbors(NodeId u) const { return neighbors_[static_cast<std::size_t>(u)]; }
  // Outgoing edge ids of u, ordered like neighbors(u).
  std::span<const EdgeId> out_edges(NodeId u) const { return out_edges_[static_cast<std::size_t>(u)]; }
  std::span<const EdgeId> in_edges(NodeId u) const { return in_edges_[static_cast<std::size_t>(u)]; }
  // -1 if u and v are not adjacent.
  EdgeId edge_between(NodeId u, NodeId v) const;
  bool adjacent(NodeId u, NodeId v) const { return edge_between(u, v) >= 0; }

  double datarate_mbps(EdgeId e) const { return link_of(e).datarate_mbps; }
  double delay_ms(EdgeId e) const { return link_of(e).delay_ms; }
  std::int64_t delay_us(EdgeId e) const;
  // Drop-tail capacity: datarate times the link's own round-trip time.
  std::int64_t buffer_bytes(EdgeId e) const;

  bool operator==(const Topology& other) const {
    return num_nodes_ == other.num_nodes_ && links_ == other.links_;
  }

 private:
  int num_nodes_ = 0;
  std::vector<Link> links_;
  std::vector<DirectedEdge> edges_;
  std::vector<std::vector<NodeId>> neighbors_;
  std::vector<std::vector<EdgeId>> out_edges_;
  std::vector<std::vector<EdgeId>> in_edges_;
};

std::int64_t buffer_bytes_for(double datarate_mbps, double delay_ms);

bool is_connected(int num_nodes, std::span<const Link> links);

Topology build_mini5();

std::pair<int, int> node_range(SizeClass size_class);
SizeClass parse_size_class(const std::string& name);
std::string to_string(SizeClass size_class);

// Random connected topology: random spanning tree plus extra edges so that the
// mean degree is about three. Pure function of its arguments.
Topology generate_nx(SizeClass size_class, std::uint64_t seed);

void save_topology(const Topology& topology, const std::filesystem::path& path);
Topology load_topology(const std::filesystem::path& path);
std::string topology_to_json(const Topology& topology);
Topology topology_from_json(const std::string& text);

}  // namespace telroute
