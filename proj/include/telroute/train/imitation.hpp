#pragma once

#include <span>
#include <vector>

#include "telroute/nn/optim.hpp"
#include "telroute/policy/networks.hpp"
#include "telroute/policy/routing.hpp"
#include "telroute/train/agent.hpp"

namespace telroute::train {

// Each weight vector is divided by its own mean before the squared error,
// so the loss only sees relative weights.
double il_loss(std::span<const double> student, std::span<const double> expert);
std::vector<double> mean_normalized(std::span<const double> weights);

// Batched version on student weights (num_edges x 1); expert holds the
// concatenated per-graph expert weights.
nn::Var il_loss(nn::Var student_weights, std::span<const double> expert, std::span<const int> edge_graph,
                int num_graphs);

struct ImitationSample {
  ObservationGraph obs;
  std::vector<double> expert;
};

struct ImitationConfig {
  double lr = 0.5e-4;
  int epochs = 10;
  int minibatches = 16;
  double grad_clip = 0.5;
};

class ImitationLearner {
 public:
  ImitationLearner(policy::PolicyNetwork& policy, ImitationConfig config);

  // Minibatch passes over the data; returns the mean loss of the last epoch.
  double train(const std::vector<ImitationSample>& data, const RunningNormalizer& normalizer, Rng& rng);
  // Mean loss of the current student on the data.
  double evaluate(const std::vector<ImitationSample>& data, const RunningNormalizer& normalizer) const;

  nn::Adam& optimizer() { return opt_; }
  const ImitationConfig& config() const { return config_; }

 private:
  policy::PolicyNetwork* policy_;
  ImitationConfig config_;
  nn::Adam opt_;
};

// Plays one episode with the student's deterministic actions, querying the
// expert's weights at every visited state. Returns the mean per-step loss of
// the student along the way.
double collect_imitation_episode(Environment& env, PolicyController& student, policy::Metric expert,
                                 RunningNormalizer& normalizer, std::vector<ImitationSample>& out);

// Offline data: one zero-utilization birds-eye observation per topology,
// paired with the expert's weights.
std::vector<ImitationSample> build_bc_dataset(const std::vector<std::shared_ptr<const Topology>>& topologies,
                                              policy::Metric expert);

}  // namespace telroute::train
