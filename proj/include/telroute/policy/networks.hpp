#pragma once

#include <string>
#include <vector>

#include "telroute/nn/layers.hpp"
#include "telroute/policy/graph_batch.hpp"

namespace telroute::policy {

struct MpnConfig {
  int steps = 4;   // message-passing rounds L
  int width = 32;  // latent width d
  int hidden = 32;
  int hidden_layers = 2;
  bool log_space = true;
  bool feed_previous_weights = true;
  // Node update aggregates over incoming edges (false: outgoing).
  bool aggregate_incoming = true;
};

class LayoutError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Latents {
  nn::Var nodes;
  nn::Var edges;
  nn::Var globals;
};

// Encoders followed by `steps` rounds of residual edge, node and global
// updates; every update is an MLP followed by layer normalization.
class MessagePassing {
 public:
  MessagePassing() = default;
  MessagePassing(nn::ParameterSet& params, const std::string& name, const MpnConfig& config, Rng& rng);
  Latents operator()(nn::Tape& tape, const GraphBatch& batch) const;

 private:
  struct Round {
    nn::Mlp edge_mlp, node_mlp, global_mlp;
    nn::LayerNorm edge_norm, node_norm, global_norm;
  };
  MpnConfig config_;
  nn::Linear node_enc_, edge_enc_, global_enc_;
  std::vector<Round> rounds_;
};

struct PolicyHeads {
  nn::Var mu;     // num_edges x 1
  nn::Var sigma;  // num_edges x 1, > 0
};

inline constexpr double kSigmaFloor = 1e-4;

// Per-edge (mu, sigma) of the log link weight.
class PolicyNetwork {
 public:
  PolicyNetwork(const MpnConfig& config, std::uint64_t seed);
  // Layers point into params_, so a copy would alias the original.
  PolicyNetwork(const PolicyNetwork&) = delete;
  PolicyNetwork& operator=(const PolicyNetwork&) = delete;
  PolicyHeads operator()(nn::Tape& tape, const GraphBatch& batch) const;

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  const MpnConfig& config() const { return config_; }
  nn::Linear& readout() { return readout_; }

 private:
  MpnConfig config_;
  nn::ParameterSet params_;
  MessagePassing mpn_;
  nn::Linear readout_;
};

// One scalar per graph: node readout MLP followed by max pooling.
class ValueNetwork {
 public:
  ValueNetwork(const MpnConfig& config, std::uint64_t seed);
  ValueNetwork(const ValueNetwork&) = delete;
  ValueNetwork& operator=(const ValueNetwork&) = delete;
  nn::Var operator()(nn::Tape& tape, const GraphBatch& batch) const;  // num_graphs x 1

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  const nn::Mlp& readout() const { return readout_; }

 private:
  MpnConfig config_;
  nn::ParameterSet params_;
  MessagePassing mpn_;
  nn::Mlp readout_;
};

// Validates feature widths against the current layout.
void check_layout(const GraphBatch& batch);

}  // namespace telroute::policy
