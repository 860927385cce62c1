#pragma once

#include <span>
#include <vector>

#include "telroute/nn/matrix.hpp"
#include "telroute/telemetry.hpp"

namespace telroute::policy {

// Disjoint union of observation graphs. Nodes and edges of graph b occupy
// the index ranges [node_offset[b], node_offset[b+1]) and
// [edge_offset[b], edge_offset[b+1]).
struct GraphBatch {
  int num_graphs = 0;
  nn::Matrix nodes;    // total nodes x features::kNode
  nn::Matrix edges;    // total edges x features::kEdge
  nn::Matrix globals;  // num_graphs x features::kGlobal
  std::vector<int> edge_src;
  std::vector<int> edge_dst;
  std::vector<int> node_graph;
  std::vector<int> edge_graph;
  std::vector<int> node_offset;
  std::vector<int> edge_offset;

  int num_nodes() const { return nodes.rows; }
  int num_edges() const { return edges.rows; }

  static GraphBatch from(std::span<const ObservationGraph* const> graphs);
  static GraphBatch from(const ObservationGraph& graph);
};

}  // namespace telroute::policy
