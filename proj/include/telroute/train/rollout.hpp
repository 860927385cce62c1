#pragma once

#include <vector>

#include "telroute/train/agent.hpp"

namespace telroute::train {

// One agent at one step.
struct Transition {
  ObservationGraph obs;  // policy input (previous weights filled, not normalized)
  std::vector<double> log_w;
  std::vector<double> mu;  // behaviour policy outputs
  std::vector<double> sigma;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
  int value_index = -1;  // into RolloutBuffer::value_obs
};

// Samples of all agents and episodes of one iteration. Several transitions
// may share one value observation (the central graph in multi-agent modes).
struct RolloutBuffer {
  std::vector<Transition> samples;
  std::vector<ObservationGraph> value_obs;

  void append(RolloutBuffer&& other);
  std::size_t size() const { return samples.size(); }
};

// Pools per-agent buffers into one.
RolloutBuffer pool(std::vector<RolloutBuffer> buffers);

struct EpisodeSummary {
  EpisodeMetrics metrics;
  double reward_sum = 0.0;  // summed over steps and agents
};

// Plays one exploring episode on a freshly reset environment, records the
// transitions with values and GAE advantages, and feeds the policy inputs to
// the normalizer's pending statistics. In multi-agent modes the value
// function sees the central observer's graph.
EpisodeSummary collect_episode(Environment& env, PolicyController& controller, const policy::ValueNetwork& value,
                               RunningNormalizer& normalizer, Rng& rng, double gamma, double gae_lambda,
                               RolloutBuffer& out);

}  // namespace telroute::train
