#include "telroute/train/imitation.hpp"

#include <cmath>
#include <numeric>

namespace telroute::train {

using nn::Var;

std::vector<double> mean_normalized(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("mean_normalized: empty weight vector");
  double m = 0.0;
  for (double w : weights) m += w;
  m /= static_cast<double>(weights.size());
  if (!(m > 0.0)) throw std::invalid_argument("mean_normalized: weights must have a positive mean");
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= m;
  return out;
}

double il_loss(std::span<const double> student, std::span<const double> expert) {
  if (student.size() != expert.size()) throw std::invalid_argument("il_loss: size mismatch");
  const auto s = mean_normalized(student);
  const auto e = mean_normalized(expert);
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += (s[i] - e[i]) * (s[i] - e[i]);
  return acc / static_cast<double>(s.size());
}

Var il_loss(Var student_weights, std::span<const double> expert, std::span<const int> edge_graph, int num_graphs) {
  nn::Tape& tape = *student_weights.tape;
  if (static_cast<std::size_t>(student_weights.rows()) != expert.size()) {
    throw std::invalid_argument("il_loss: expert size does not match the batch");
  }
  // Expert normalized per graph.
  std::vector<double> sums(static_cast<std::size_t>(num_graphs), 0.0), counts(static_cast<std::size_t>(num_graphs), 0.0);
  for (std::size_t e = 0; e < expert.size(); ++e) {
    sums[static_cast<std::size_t>(edge_graph[e])] += expert[e];
    counts[static_cast<std::size_t>(edge_graph[e])] += 1.0;
  }
  std::vector<double> target(expert.size());
  for (std::size_t e = 0; e < expert.size(); ++e) {
    const auto g = static_cast<std::size_t>(edge_graph[e]);
    target[e] = expert[e] / (sums[g] / counts[g]);
  }
  const Var mean_w = nn::gather_rows(nn::segment_mean(student_weights, edge_graph, num_graphs), edge_graph);
  const Var normalized = nn::mul(student_weights, nn::exp(nn::neg(nn::log(mean_w))));
  return nn::mean(nn::square(nn::sub(normalized, tape.constant(nn::Matrix::column(std::move(target))))));
}

namespace {

Var student_weights(const policy::PolicyNetwork& policy, nn::Tape& tape, const policy::GraphBatch& batch) {
  const policy::PolicyHeads heads = policy(tape, batch);
  return policy.config().log_space ? nn::exp(heads.mu) : nn::softplus(heads.mu);
}

}  // namespace

ImitationLearner::ImitationLearner(policy::PolicyNetwork& policy, ImitationConfig config)
    : policy_(&policy), config_(config), opt_(policy.params(), {config.lr}) {}

double ImitationLearner::train(const std::vector<ImitationSample>& data, const RunningNormalizer& normalizer,
                               Rng& rng) {
  if (data.empty()) throw std::invalid_argument("imitation: empty dataset");
  const std::size_t n = data.size();
  const std::size_t parts = std::min<std::size_t>(static_cast<std::size_t>(config_.minibatches), n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  double last_epoch = 0.0;
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t p = 0; p < parts; ++p) {
      std::vector<const ObservationGraph*> graphs;
      std::vector<double> expert;
      for (std::size_t k = p * n / parts; k < (p + 1) * n / parts; ++k) {
        const ImitationSample& s = data[order[k]];
        graphs.push_back(&s.obs);
        expert.insert(expert.end(), s.expert.begin(), s.expert.end());
      }
      policy::GraphBatch batch = policy::GraphBatch::from(graphs);
      normalizer.apply(batch);
      policy_->params().zero_grad();
      nn::Tape tape;
      const Var loss = il_loss(student_weights(*policy_, tape, batch), expert, batch.edge_graph, batch.num_graphs);
      if (!std::isfinite(loss.item())) throw std::runtime_error("imitation: non-finite loss");
      tape.backward(loss);
      nn::clip_grad_norm(policy_->params(), config_.grad_clip);
      opt_.step();
      total += loss.item();
    }
    last_epoch = total / static_cast<double>(parts);
  }
  return last_epoch;
}

double ImitationLearner::evaluate(const std::vector<ImitationSample>& data, const RunningNormalizer& normalizer) const {
  double total = 0.0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    std::vector<const ObservationGraph*> graphs;
    std::vector<double> expert;
    for (std::size_t k = start; k < std::min(data.size(), start + kChunk); ++k) {
      graphs.push_back(&data[k].obs);
      expert.insert(expert.end(), data[k].expert.begin(), data[k].expert.end());
    }
    policy::GraphBatch batch = policy::GraphBatch::from(graphs);
    normalizer.apply(batch);
    nn::Tape tape(false);
    const Var w = student_weights(*policy_, tape, batch);
    for (int g = 0; g < batch.num_graphs; ++g) {
      const auto e0 = static_cast<std::size_t>(batch.edge_offset[static_cast<std::size_t>(g)]);
      const auto e1 = static_cast<std::size_t>(batch.edge_offset[static_cast<std::size_t>(g) + 1]);
      total += il_loss(std::span<const double>(w.value().data).subspan(e0, e1 - e0),
                       std::span<const double>(expert).subspan(e0, e1 - e0));
    }
  }
  return data.empty() ? 0.0 : total / static_cast<double>(data.size());
}

double collect_imitation_episode(Environment& env, PolicyController& student, policy::Metric expert,
                                 RunningNormalizer& normalizer, std::vector<ImitationSample>& out) {
  if (student.config().explore) throw std::invalid_argument("imitation: the student must act deterministically");
  const std::vector<double> expert_w = policy::sp_baseline(env.topology(), expert);
  Rng unused(0);
  student.begin_episode(env);
  std::vector<ObservationGraph> obs = env.observe();
  double total = 0.0;
  std::size_t count = 0;
  while (!env.done()) {
    Decision d = student.decide(env, obs, unused);
    for (std::size_t i = 0; i < d.inputs.size(); ++i) {
      total += il_loss(d.samples[i].weights, expert_w);
      ++count;
      normalizer.observe(d.inputs[i]);
      out.push_back({std::move(d.inputs[i]), expert_w});
    }
    StepResult r = env.step(d.actions, d.inference_ms);
    obs = std::move(r.observations);
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

std::vector<ImitationSample> build_bc_dataset(const std::vector<std::shared_ptr<const Topology>>& topologies,
                                              policy::Metric expert) {
  std::vector<ImitationSample> data;
  for (const auto& topo : topologies) {
    SnapshotStore store(topo->num_nodes());
    store.record_idle(*topo, 0);
    const DelayMetrics delays(*topo);
    ObservationGraph g = assemble_observation(store, topo, delays, -1, 0, 0.0);
    data.push_back({std::move(g), policy::sp_baseline(*topo, expert)});
  }
  return data;
}

}  // namespace telroute::train
