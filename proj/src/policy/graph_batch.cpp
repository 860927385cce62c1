#include "telroute/policy/graph_batch.hpp"

#include <algorithm>

namespace telroute::policy {

GraphBatch GraphBatch::from(std::span<const ObservationGraph* const> graphs) {
  GraphBatch b;
  b.num_graphs = static_cast<int>(graphs.size());
  int total_nodes = 0, total_edges = 0;
  b.node_offset.push_back(0);
  b.edge_offset.push_back(0);
  for (const ObservationGraph* g : graphs) {
    total_nodes += g->num_nodes();
    total_edges += g->num_edges();
    b.node_offset.push_back(total_nodes);
    b.edge_offset.push_back(total_edges);
  }
  b.nodes = nn::Matrix(total_nodes, features::kNode);
  b.edges = nn::Matrix(total_edges, features::kEdge);
  b.globals = nn::Matrix(b.num_graphs, features::kGlobal);
  b.edge_src.reserve(static_cast<std::size_t>(total_edges));
  b.edge_dst.reserve(static_cast<std::size_t>(total_edges));
  b.node_graph.reserve(static_cast<std::size_t>(total_nodes));
  b.edge_graph.reserve(static_cast<std::size_t>(total_edges));
  for (int k = 0; k < b.num_graphs; ++k) {
    const ObservationGraph& g = *graphs[static_cast<std::size_t>(k)];
    if (g.node_features.size() != static_cast<std::size_t>(g.num_nodes()) * features::kNode ||
        g.edge_features.size() != static_cast<std::size_t>(g.num_edges()) * features::kEdge ||
        g.global_features.size() != static_cast<std::size_t>(features::kGlobal)) {
      throw std::invalid_argument("observation graph does not match the feature layout");
    }
    const int n0 = b.node_offset[static_cast<std::size_t>(k)];
    const int e0 = b.edge_offset[static_cast<std::size_t>(k)];
    std::copy(g.node_features.begin(), g.node_features.end(), b.nodes.row(n0));
    std::copy(g.edge_features.begin(), g.edge_features.end(), b.edges.row(e0));
    std::copy(g.global_features.begin(), g.global_features.end(), b.globals.row(k));
    for (int v = 0; v < g.num_nodes(); ++v) b.node_graph.push_back(k);
    for (const DirectedEdge& e : g.topology->edges()) {
      b.edge_src.push_back(n0 + e.src);
      b.edge_dst.push_back(n0 + e.dst);
      b.edge_graph.push_back(k);
    }
  }
  return b;
}

GraphBatch GraphBatch::from(const ObservationGraph& graph) {
  const ObservationGraph* p = &graph;
  return from(std::span<const ObservationGraph* const>(&p, 1));
}

}  // namespace telroute::policy
