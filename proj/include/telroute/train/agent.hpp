#pragma once

#include <vector>

#include "telroute/env.hpp"
#include "telroute/policy/distribution.hpp"
#include "telroute/policy/networks.hpp"
#include "telroute/policy/routing.hpp"
#include "telroute/train/normalizer.hpp"

namespace telroute::train {

// What every agent decided at one step.
struct Decision {
  std::vector<RoutingAction> actions;
  std::vector<double> inference_ms;
  std::vector<ObservationGraph> inputs;  // per agent, previous weights filled in
  std::vector<policy::Sample> samples;   // per agent, one entry per edge
  std::vector<std::vector<double>> mu;
  std::vector<std::vector<double>> sigma;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual void begin_episode(const Environment& env) = 0;
  virtual Decision decide(const Environment& env, const std::vector<ObservationGraph>& observations, Rng& rng) = 0;
};

// Fixed shortest-path routing with zero inference time.
class StaticController : public Controller {
 public:
  explicit StaticController(policy::Metric metric) : metric_(metric) {}
  void begin_episode(const Environment& env) override;
  Decision decide(const Environment& env, const std::vector<ObservationGraph>& observations, Rng& rng) override;

 private:
  policy::Metric metric_;
  RoutingAction action_;
};

struct ActingConfig {
  bool explore = false;
  // Fixed inference time instead of wall-clock measurement (reproducible runs).
  bool synthetic_kappa = true;
  double kappa_ms = 1.0;
};

// Runs the policy network on every agent's observation, then Dijkstra.
// Keeps each agent's previous link weights for the next observation.
class PolicyController : public Controller {
 public:
  PolicyController(const policy::PolicyNetwork& net, const RunningNormalizer& normalizer, ActingConfig config)
      : net_(&net), normalizer_(&normalizer), config_(config) {}

  void begin_episode(const Environment& env) override;
  Decision decide(const Environment& env, const std::vector<ObservationGraph>& observations, Rng& rng) override;

  // Copy of `graph` with agent's previous weights in the edge features.
  ObservationGraph with_previous_weights(const ObservationGraph& graph, int agent) const;
  const ActingConfig& config() const { return config_; }

 private:
  const policy::PolicyNetwork* net_;
  const RunningNormalizer* normalizer_;
  ActingConfig config_;
  std::vector<std::vector<double>> previous_;
};

// Normalized network forward pass without gradient recording; returns per
// graph edge-wise mu and sigma.
void policy_forward(const policy::PolicyNetwork& net, const RunningNormalizer& normalizer,
                    std::span<const ObservationGraph* const> graphs, std::vector<std::vector<double>>& mu,
                    std::vector<std::vector<double>>& sigma);
std::vector<double> value_forward(const policy::ValueNetwork& net, const RunningNormalizer& normalizer,
                                  std::span<const ObservationGraph* const> graphs, std::size_t chunk = 256);

// Plays one full episode from a freshly reset environment.
EpisodeMetrics run_episode(Environment& env, Controller& controller, Rng& rng);

}  // namespace telroute::train
