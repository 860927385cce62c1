#include "telroute/policy/networks.hpp"

#include <cmath>

namespace telroute::policy {

using nn::Var;

void check_layout(const GraphBatch& batch) {
  if (batch.nodes.cols != features::kNode || batch.edges.cols != features::kEdge ||
      batch.globals.cols != features::kGlobal) {
    throw LayoutError("feature layout mismatch: expected node/edge/global widths " +
                      std::to_string(features::kNode) + "/" + std::to_string(features::kEdge) + "/" +
                      std::to_string(features::kGlobal) + ", got " + std::to_string(batch.nodes.cols) + "/" +
                      std::to_string(batch.edges.cols) + "/" + std::to_string(batch.globals.cols));
  }
}

MessagePassing::MessagePassing(nn::ParameterSet& params, const std::string& name, const MpnConfig& config,
                               Rng& rng)
    : config_(config) {
  if (config.steps < 1 || config.width < 1) throw std::invalid_argument("MpnConfig: steps and width must be >= 1");
  const int d = config.width;
  const std::vector<int> hidden(static_cast<std::size_t>(config.hidden_layers), config.hidden);
  node_enc_ = nn::Linear(params, name + ".enc_node", features::kNode, d, rng);
  edge_enc_ = nn::Linear(params, name + ".enc_edge", features::kEdge, d, rng);
  global_enc_ = nn::Linear(params, name + ".enc_global", features::kGlobal, d, rng);
  for (int l = 0; l < config.steps; ++l) {
    const std::string p = name + ".r" + std::to_string(l);
    Round r;
    r.edge_mlp = nn::Mlp(params, p + ".edge", 4 * d, hidden, d, rng);
    r.edge_norm = nn::LayerNorm(params, p + ".edge_ln", d);
    r.node_mlp = nn::Mlp(params, p + ".node", 3 * d, hidden, d, rng);
    r.node_norm = nn::LayerNorm(params, p + ".node_ln", d);
    r.global_mlp = nn::Mlp(params, p + ".global", 5 * d, hidden, d, rng);
    r.global_norm = nn::LayerNorm(params, p + ".global_ln", d);
    rounds_.push_back(std::move(r));
  }
}

Latents MessagePassing::operator()(nn::Tape& tape, const GraphBatch& batch) const {
  check_layout(batch);
  const int n = batch.num_nodes();
  const int b = batch.num_graphs;
  Var xv = node_enc_(tape, tape.constant(batch.nodes));
  Var xe = edge_enc_(tape, tape.constant(batch.edges));
  Var xg = global_enc_(tape, tape.constant(batch.globals));
  const std::vector<int>& agg = config_.aggregate_incoming ? batch.edge_dst : batch.edge_src;
  for (const Round& r : rounds_) {
    const Var edge_in[] = {nn::gather_rows(xv, batch.edge_src), nn::gather_rows(xv, batch.edge_dst), xe,
                           nn::gather_rows(xg, batch.edge_graph)};
    xe = xe + r.edge_norm(tape, r.edge_mlp(tape, nn::concat_cols(edge_in)));

    const Var node_in[] = {xv, nn::segment_mean(xe, agg, n), nn::segment_min(xe, agg, n)};
    xv = xv + r.node_norm(tape, r.node_mlp(tape, nn::concat_cols(node_in)));

    const Var global_in[] = {nn::segment_mean(xv, batch.node_graph, b), nn::segment_min(xv, batch.node_graph, b),
                             nn::segment_mean(xe, batch.edge_graph, b), nn::segment_min(xe, batch.edge_graph, b), xg};
    xg = xg + r.global_norm(tape, r.global_mlp(tape, nn::concat_cols(global_in)));
  }
  return {xv, xe, xg};
}

PolicyNetwork::PolicyNetwork(const MpnConfig& config, std::uint64_t seed) : config_(config) {
  Rng rng = Rng::derive({seed, 0x70});
  mpn_ = MessagePassing(params_, "pi.mpn", config, rng);
  readout_ = nn::Linear(params_, "pi.readout", config.width, 2, rng);
  // Small initial outputs: mu near 0 (weights near 1), sigma near 0.3.
  for (double& w : readout_.weight().value.data) w *= 0.01;
  readout_.bias().value(0, 0) = 0.0;
  readout_.bias().value(0, 1) = std::log(std::expm1(0.3 - kSigmaFloor));
}

PolicyHeads PolicyNetwork::operator()(nn::Tape& tape, const GraphBatch& batch) const {
  const GraphBatch* input = &batch;
  GraphBatch masked;
  if (!config_.feed_previous_weights) {
    masked = batch;
    for (int e = 0; e < masked.edges.rows; ++e) masked.edges(e, features::kPrevWeight) = 0.0;
    input = &masked;
  }
  const Latents z = mpn_(tape, *input);
  const Var out = readout_(tape, z.edges);
  const Var mu = nn::slice_cols(out, 0, 1);
  const Var sigma = nn::add_scalar(nn::softplus(nn::slice_cols(out, 1, 1)), kSigmaFloor);
  return {mu, sigma};
}

ValueNetwork::ValueNetwork(const MpnConfig& config, std::uint64_t seed) : config_(config) {
  Rng rng = Rng::derive({seed, 0x76});
  mpn_ = MessagePassing(params_, "v.mpn", config, rng);
  const std::vector<int> hidden(static_cast<std::size_t>(config.hidden_layers), config.hidden);
  readout_ = nn::Mlp(params_, "v.readout", config.width, hidden, 1, rng);
}

Var ValueNetwork::operator()(nn::Tape& tape, const GraphBatch& batch) const {
  const Latents z = mpn_(tape, batch);
  return nn::segment_max(readout_(tape, z.nodes), batch.node_graph, batch.num_graphs);
}

}  // namespace telroute::policy
