#pragma once

// Slow, obviously-correct reference implementations used by the tests.

#include <functional>
#include <span>
#include <vector>

#include "telroute/netsim.hpp"
#include "telroute/nn/autodiff.hpp"
#include "telroute/nn/layers.hpp"
#include "telroute/nn/matrix.hpp"
#include "telroute/rng.hpp"
#include "telroute/topology.hpp"

namespace oracle {

using telroute::NodeId;

struct Route {
  double cost = 0.0;
  NodeId first_hop = -1;
};

// Exhaustive enumeration of simple paths from src to dst. Among minimum-cost
// paths the one with the smallest first hop wins. Costs are summed from the
// source outward.
Route best_route(const telroute::Topology& topology, std::span<const double> weights, NodeId src, NodeId dst);

// Connected graph on n nodes: random spanning tree plus `extra` random links.
telroute::Topology random_topology(telroute::Rng& rng, int n, int extra);

// Advantages by the explicit double sum A_t = sum_l (gamma lambda)^l delta_{t+l}.
std::vector<double> gae_double_sum(const std::vector<double>& rewards, const std::vector<double>& values,
                                   double last_value, double gamma, double lambda);

// Central finite differences of a scalar function with respect to x.
telroute::nn::Matrix numeric_gradient(const std::function<double()>& f, telroute::nn::Matrix& x, double h = 1e-6);

// Relative error |a - b| / max(floor, |a|, |b|), elementwise maximum.
double max_rel_error(const telroute::nn::Matrix& a, const telroute::nn::Matrix& b, double floor = 1.0);

// Worst relative error between tape gradients and central differences of a
// scalar built from the given inputs.
using Builder = std::function<telroute::nn::Var(telroute::nn::Tape&, const std::vector<telroute::nn::Var>&)>;
double input_gradient_error(const Builder& f, std::vector<telroute::nn::Matrix> inputs, double floor = 1e-3);

// Same for parameters; `samples` random entries per parameter are checked.
double parameter_gradient_error(const std::function<telroute::nn::Var(telroute::nn::Tape&)>& f,
                                telroute::nn::ParameterSet& params, telroute::Rng& rng, int samples,
                                double floor = 1e-3);

// Per-node credit of one terminal event: the k-th router counted back from
// the end of the path receives sign * mb * decay^k for k < hops.
std::vector<double> decayed_credit(const std::vector<NodeId>& path, double mb, bool delivered, int num_nodes,
                                   double decay, int hops);

}  // namespace oracle
