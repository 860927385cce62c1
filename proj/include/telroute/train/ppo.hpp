#pragma once

#include <string>
#include <vector>

#include "telroute/nn/optim.hpp"
#include "telroute/policy/networks.hpp"
#include "telroute/train/normalizer.hpp"
#include "telroute/train/rollout.hpp"

namespace telroute::train {

struct PPOConfig {
  double lr_policy = 3e-4;
  double lr_value = 1e-3;
  double lr_temperature = 3e-4;
  double gamma = 0.95;
  double clip_policy = 0.5;
  double clip_value = 0.3;
  int minibatches = 16;
  int epochs = 10;
  double grad_clip = 0.5;
  double gae_lambda = 0.9;
  double kl_limit = 10.0;
  double clip_fraction_limit = 0.2;
  double target_entropy = 0.2;  // per edge
  double initial_alpha = 0.01;

  void validate() const;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Entropy temperature alpha = softplus(rho), trained to move the policy
// entropy towards its target: alpha grows while entropy is below target.
class Temperature {
 public:
  Temperature(double initial_alpha, double lr);
  double alpha() const;
  double rho() const { return params_.get("rho").value.item(); }
  // One optimizer step on alpha * (entropy - target); returns that loss.
  double step(double entropy, double target);

  nn::ParameterSet& params() { return params_; }
  nn::Adam& optimizer() { return opt_; }

 private:
  nn::ParameterSet params_;
  nn::Adam opt_;
};

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;  // mean per sample, summed over edges
  double kl = 0.0;
  double clip_fraction = 0.0;
  double alpha = 0.0;
  int policy_epochs = 0;
  int value_epochs = 0;
  bool early_stopped = false;
  std::string stop_reason;
  std::vector<double> epoch_kl;
  std::vector<double> epoch_clip_fraction;
};

// Clipped-surrogate policy updates with an adaptive entropy bonus, clipped
// value regression, per-minibatch advantage normalization and per-epoch
// early stopping of the policy (the value function keeps training).
class PpoLearner {
 public:
  PpoLearner(policy::PolicyNetwork& policy, policy::ValueNetwork& value, PPOConfig config);

  PpoStats update(RolloutBuffer& buffer, const RunningNormalizer& normalizer, Rng& rng);

  const PPOConfig& config() const { return config_; }
  nn::Adam& policy_optimizer() { return pi_opt_; }
  nn::Adam& value_optimizer() { return v_opt_; }
  Temperature& temperature() { return temperature_; }

 private:
  struct MinibatchStats {
    double loss = 0.0, entropy = 0.0, kl = 0.0, clip_fraction = 0.0;
  };
  MinibatchStats policy_step(const RolloutBuffer& buffer, std::span<const std::size_t> idx,
                             const RunningNormalizer& normalizer);
  double value_step(const RolloutBuffer& buffer, std::span<const std::size_t> idx, const RunningNormalizer& normalizer);

  policy::PolicyNetwork* policy_;
  policy::ValueNetwork* value_;
  PPOConfig config_;
  nn::Adam pi_opt_;
  nn::Adam v_opt_;
  Temperature temperature_;
};

// Multi-agent variant: pools the agents' buffers (shared policy, shared
// centralized value) and runs the same update.
PpoStats mappo_update(PpoLearner& learner, std::vector<RolloutBuffer> per_agent, const RunningNormalizer& normalizer,
                      Rng& rng);

}  // namespace telroute::train
