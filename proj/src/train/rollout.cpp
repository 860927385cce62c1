#include "telroute/train/rollout.hpp"

#include "telroute/train/gae.hpp"

namespace telroute::train {

void RolloutBuffer::append(RolloutBuffer&& other) {
  const int offset = static_cast<int>(value_obs.size());
  for (auto& g : other.value_obs) value_obs.push_back(std::move(g));
  for (auto& s : other.samples) {
    s.value_index += offset;
    samples.push_back(std::move(s));
  }
  other.samples.clear();
  other.value_obs.clear();
}

RolloutBuffer pool(std::vector<RolloutBuffer> buffers) {
  RolloutBuffer out;
  for (auto& b : buffers) out.append(std::move(b));
  return out;
}

EpisodeSummary collect_episode(Environment& env, PolicyController& controller, const policy::ValueNetwork& value,
                               RunningNormalizer& normalizer, Rng& rng, double gamma, double gae_lambda,
                               RolloutBuffer& out) {
  const bool multi = is_multi(env.config().mode);
  const auto agents = static_cast<std::size_t>(env.num_agents());
  controller.begin_episode(env);
  std::vector<ObservationGraph> obs = env.observe();
  // Per agent, indices into `local` in step order.
  std::vector<std::vector<std::size_t>> traj(agents);
  RolloutBuffer local;
  EpisodeSummary summary;
  while (!env.done()) {
    Decision d = controller.decide(env, obs, rng);
    const int vi = static_cast<int>(local.value_obs.size());
    local.value_obs.push_back(multi ? env.observe_as(env.central()) : d.inputs[0]);
    StepResult r = env.step(d.actions, d.inference_ms);
    for (std::size_t i = 0; i < agents; ++i) {
      normalizer.observe(d.inputs[i]);
      Transition t;
      t.obs = std::move(d.inputs[i]);
      t.log_w = std::move(d.samples[i].log_weights);
      t.mu = std::move(d.mu[i]);
      t.sigma = std::move(d.sigma[i]);
      t.log_prob = d.samples[i].log_prob;
      t.reward = r.rewards.mixed[i];
      t.value_index = vi;
      summary.reward_sum += t.reward;
      traj[i].push_back(local.samples.size());
      local.samples.push_back(std::move(t));
    }
    obs = std::move(r.observations);
  }

  // Time-limit truncation: bootstrap from the value of the final state.
  std::vector<ObservationGraph> finals;
  if (multi) {
    finals.push_back(env.observe_as(env.central()));
  } else {
    finals.push_back(controller.with_previous_weights(obs[0], 0));
  }
  std::vector<const ObservationGraph*> ptrs;
  for (const auto& g : local.value_obs) ptrs.push_back(&g);
  ptrs.push_back(&finals[0]);
  const std::vector<double> v = value_forward(value, normalizer, ptrs);
  const double last_value = v.back();
  for (std::size_t i = 0; i < agents; ++i) {
    std::vector<double> rewards, values;
    for (std::size_t k : traj[i]) {
      rewards.push_back(local.samples[k].reward);
      values.push_back(v[static_cast<std::size_t>(local.samples[k].value_index)]);
    }
    const GaeResult g = compute_gae(rewards, values, last_value, gamma, gae_lambda);
    for (std::size_t j = 0; j < traj[i].size(); ++j) {
      Transition& t = local.samples[traj[i][j]];
      t.value = values[j];
      t.advantage = g.advantages[j];
      t.ret = g.returns[j];
    }
  }
  summary.metrics = env.metrics();
  out.append(std::move(local));
  return summary;
}

}  // namespace telroute::train
