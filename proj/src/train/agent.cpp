#include "telroute/train/agent.hpp"

#include <chrono>

namespace telroute::train {

void StaticController::begin_episode(const Environment& env) {
  const Topology& topo = env.topology();
  action_ = RoutingAction::from_table(policy::to_action_single(topo, policy::sp_baseline(topo, metric_)));
}

Decision StaticController::decide(const Environment& env, const std::vector<ObservationGraph>&, Rng&) {
  Decision d;
  const int agents = env.num_agents();
  d.actions.assign(static_cast<std::size_t>(agents), action_);
  d.inference_ms.assign(static_cast<std::size_t>(agents), 0.0);
  return d;
}

void policy_forward(const policy::PolicyNetwork& net, const RunningNormalizer& normalizer,
                    std::span<const ObservationGraph* const> graphs, std::vector<std::vector<double>>& mu,
                    std::vector<std::vector<double>>& sigma) {
  policy::GraphBatch batch = policy::GraphBatch::from(graphs);
  normalizer.apply(batch);
  nn::Tape tape(false);
  const policy::PolicyHeads heads = net(tape, batch);
  mu.assign(graphs.size(), {});
  sigma.assign(graphs.size(), {});
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const int e0 = batch.edge_offset[k], e1 = batch.edge_offset[k + 1];
    mu[k].assign(heads.mu.value().data.begin() + e0, heads.mu.value().data.begin() + e1);
    sigma[k].assign(heads.sigma.value().data.begin() + e0, heads.sigma.value().data.begin() + e1);
  }
}

std::vector<double> value_forward(const policy::ValueNetwork& net, const RunningNormalizer& normalizer,
                                  std::span<const ObservationGraph* const> graphs, std::size_t chunk) {
  std::vector<double> out;
  out.reserve(graphs.size());
  for (std::size_t start = 0; start < graphs.size(); start += chunk) {
    const std::size_t len = std::min(chunk, graphs.size() - start);
    policy::GraphBatch batch = policy::GraphBatch::from(graphs.subspan(start, len));
    normalizer.apply(batch);
    nn::Tape tape(false);
    const nn::Var v = net(tape, batch);
    out.insert(out.end(), v.value().data.begin(), v.value().data.end());
  }
  return out;
}

void PolicyController::begin_episode(const Environment& env) {
  previous_.assign(static_cast<std::size_t>(env.num_agents()),
                   std::vector<double>(static_cast<std::size_t>(env.topology().num_edges()), 0.0));
}

ObservationGraph PolicyController::with_previous_weights(const ObservationGraph& graph, int agent) const {
  ObservationGraph g = graph;
  const auto& prev = previous_.at(static_cast<std::size_t>(agent));
  for (EdgeId e = 0; e < g.num_edges(); ++e) g.edge(e, features::kPrevWeight) = prev[static_cast<std::size_t>(e)];
  return g;
}

Decision PolicyController::decide(const Environment& env, const std::vector<ObservationGraph>& observations,
                                  Rng& rng) {
  using Clock = std::chrono::steady_clock;
  const auto agents = static_cast<std::size_t>(env.num_agents());
  if (observations.size() != agents) throw std::invalid_argument("decide: one observation per agent expected");
  const bool multi = is_multi(env.config().mode);
  const int n = env.topology().num_nodes();
  Decision d;
  d.inputs.reserve(agents);
  for (std::size_t i = 0; i < agents; ++i) d.inputs.push_back(with_previous_weights(observations[i], static_cast<int>(i)));
  std::vector<const ObservationGraph*> ptrs;
  for (const auto& g : d.inputs) ptrs.push_back(&g);

  const auto t0 = Clock::now();
  policy_forward(*net_, *normalizer_, ptrs, d.mu, d.sigma);
  const double forward_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / static_cast<double>(agents);

  for (std::size_t i = 0; i < agents; ++i) {
    const auto t1 = Clock::now();
    policy::Sample s = policy::act(d.mu[i], d.sigma[i], config_.explore, rng, net_->config().log_space);
    if (multi) {
      const auto u = static_cast<NodeId>(i);
      d.actions.push_back(RoutingAction::for_router(n, u, policy::to_action_local(env.topology(), u, s.weights)));
    } else {
      d.actions.push_back(RoutingAction::from_table(policy::to_action_single(env.topology(), s.weights)));
    }
    const double own_ms = std::chrono::duration<double, std::milli>(Clock::now() - t1).count();
    d.inference_ms.push_back(config_.synthetic_kappa ? config_.kappa_ms : forward_ms + own_ms);
    previous_[i] = s.weights;
    d.samples.push_back(std::move(s));
  }
  return d;
}

EpisodeMetrics run_episode(Environment& env, Controller& controller, Rng& rng) {
  controller.begin_episode(env);
  std::vector<ObservationGraph> obs = env.observe();
  while (!env.done()) {
    const Decision d = controller.decide(env, obs, rng);
    StepResult r = env.step(d.actions, d.inference_ms);
    obs = std::move(r.observations);
  }
  return env.metrics();
}

}  // namespace telroute::train
