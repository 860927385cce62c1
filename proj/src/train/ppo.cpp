#include "telroute/train/ppo.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include "telroute/policy/distribution.hpp"
#include "telroute/train/gae.hpp"

namespace telroute::train {

using nn::Var;

void PPOConfig::validate() const {
  if (!(lr_policy > 0 && lr_value > 0 && lr_temperature > 0)) throw std::invalid_argument("PPOConfig: learning rates must be positive");
  if (!(clip_policy > 0 && clip_policy <= 1 && clip_value > 0 && clip_value <= 1)) {
    throw std::invalid_argument("PPOConfig: clip ranges must lie in (0,1]");
  }
  if (epochs < 1 || minibatches < 1) throw std::invalid_argument("PPOConfig: epochs and minibatches must be >= 1");
  if (!(gamma > 0 && gae_lambda >= 0 && grad_clip > 0 && initial_alpha > 0)) {
    throw std::invalid_argument("PPOConfig: gamma, grad_clip and initial_alpha must be positive");
  }
}

namespace {

// rho has to exist before the optimizer sizes its moments.
nn::ParameterSet& with_rho(nn::ParameterSet& params, double initial_alpha) {
  params.add("rho", nn::Matrix::scalar(std::log(std::expm1(initial_alpha))));
  return params;
}

}  // namespace

Temperature::Temperature(double initial_alpha, double lr) : opt_(with_rho(params_, initial_alpha), {lr}) {}

double Temperature::alpha() const {
  const double r = rho();
  return r > 30.0 ? r : std::log1p(std::exp(r));
}

double Temperature::step(double entropy, double target) {
  params_.zero_grad();
  nn::Tape tape;
  const Var loss = nn::scale(nn::softplus(tape.param(params_.get("rho"))), entropy - target);
  tape.backward(loss);
  opt_.step();
  return loss.item();
}

PpoLearner::PpoLearner(policy::PolicyNetwork& policy, policy::ValueNetwork& value, PPOConfig config)
    : policy_(&policy),
      value_(&value),
      config_(config),
      pi_opt_(policy.params(), {config.lr_policy}),
      v_opt_(value.params(), {config.lr_value}),
      temperature_(config.initial_alpha, config.lr_temperature) {
  config_.validate();
}

namespace {

void check_finite(double v, const char* what, const std::string& detail) {
  if (!std::isfinite(v)) throw TrainingError(std::string("non-finite ") + what + " (" + detail + ")");
}

}  // namespace

PpoLearner::MinibatchStats PpoLearner::policy_step(const RolloutBuffer& buffer, std::span<const std::size_t> idx,
                                                   const RunningNormalizer& normalizer) {
  std::vector<const ObservationGraph*> graphs;
  std::vector<double> log_w, mu_old, sigma_old, logp_old, adv;
  for (std::size_t i : idx) {
    const Transition& t = buffer.samples[i];
    graphs.push_back(&t.obs);
    log_w.insert(log_w.end(), t.log_w.begin(), t.log_w.end());
    mu_old.insert(mu_old.end(), t.mu.begin(), t.mu.end());
    sigma_old.insert(sigma_old.end(), t.sigma.begin(), t.sigma.end());
    logp_old.push_back(t.log_prob);
    adv.push_back(t.advantage);
  }
  normalize_advantages(adv);
  policy::GraphBatch batch = policy::GraphBatch::from(graphs);
  normalizer.apply(batch);
  const int b = batch.num_graphs;
  const double eps = config_.clip_policy;

  policy_->params().zero_grad();
  nn::Tape tape;
  const policy::PolicyHeads heads = (*policy_)(tape, batch);
  const Var lw = tape.constant(nn::Matrix::column(std::move(log_w)));
  const Var logp = nn::segment_sum(policy::lognormal_log_density(heads.mu, heads.sigma, lw), batch.edge_graph, b);
  const Var ratio = nn::exp(nn::sub(logp, tape.constant(nn::Matrix::column(logp_old))));
  const Var a = tape.constant(nn::Matrix::column(adv));
  const Var surrogate = nn::minimum(nn::mul(ratio, a), nn::mul(nn::clamp(ratio, 1.0 - eps, 1.0 + eps), a));
  const Var entropy = nn::segment_sum(policy::lognormal_entropy(heads.mu, heads.sigma), batch.edge_graph, b);
  const double alpha = temperature_.alpha();
  const Var loss = nn::sub(nn::neg(nn::mean(surrogate)), nn::scale(nn::mean(entropy), alpha));

  MinibatchStats st;
  st.loss = loss.item();
  st.entropy = nn::mean(entropy).item();
  check_finite(st.loss, "policy loss", "entropy " + std::to_string(st.entropy));
  const Var kl = nn::segment_sum(
      policy::lognormal_kl(tape.constant(nn::Matrix::column(std::move(mu_old))),
                           tape.constant(nn::Matrix::column(std::move(sigma_old))), heads.mu, heads.sigma),
      batch.edge_graph, b);
  st.kl = nn::mean(kl).item();
  int clipped = 0;
  for (double r : ratio.value().data) clipped += std::abs(r - 1.0) > eps ? 1 : 0;
  st.clip_fraction = static_cast<double>(clipped) / b;

  tape.backward(loss);
  nn::clip_grad_norm(policy_->params(), config_.grad_clip);
  pi_opt_.step();

  const double target = config_.target_entropy * static_cast<double>(batch.num_edges()) / b;
  temperature_.step(st.entropy, target);
  return st;
}

double PpoLearner::value_step(const RolloutBuffer& buffer, std::span<const std::size_t> idx,
                              const RunningNormalizer& normalizer) {
  // Several samples can share a value observation; evaluate each once.
  std::map<int, int> slot;
  std::vector<const ObservationGraph*> graphs;
  std::vector<int> gather;
  std::vector<double> v_old, ret;
  for (std::size_t i : idx) {
    const Transition& t = buffer.samples[i];
    auto [it, inserted] = slot.emplace(t.value_index, static_cast<int>(graphs.size()));
    if (inserted) graphs.push_back(&buffer.value_obs[static_cast<std::size_t>(t.value_index)]);
    gather.push_back(it->second);
    v_old.push_back(t.value);
    ret.push_back(t.ret);
  }
  policy::GraphBatch batch = policy::GraphBatch::from(graphs);
  normalizer.apply(batch);

  value_->params().zero_grad();
  nn::Tape tape;
  const Var v = nn::gather_rows((*value_)(tape, batch), gather);
  const Var old = tape.constant(nn::Matrix::column(std::move(v_old)));
  const Var r = tape.constant(nn::Matrix::column(std::move(ret)));
  const Var v_clipped = nn::add(old, nn::clamp(nn::sub(v, old), -config_.clip_value, config_.clip_value));
  const Var loss = nn::scale(nn::mean(nn::maximum(nn::square(nn::sub(v, r)), nn::square(nn::sub(v_clipped, r)))), 0.5);
  check_finite(loss.item(), "value loss", std::to_string(idx.size()) + " samples");
  tape.backward(loss);
  nn::clip_grad_norm(value_->params(), config_.grad_clip);
  v_opt_.step();
  return loss.item();
}

PpoStats PpoLearner::update(RolloutBuffer& buffer, const RunningNormalizer& normalizer, Rng& rng) {
  PpoStats stats;
  const std::size_t n = buffer.size();
  if (n == 0) throw TrainingError("empty rollout buffer");
  const std::size_t parts = std::min<std::size_t>(static_cast<std::size_t>(config_.minibatches), n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  bool policy_active = true;
  double policy_loss_sum = 0.0, value_loss_sum = 0.0, entropy_sum = 0.0;
  int policy_steps = 0, value_steps = 0;
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_kl = 0.0, epoch_clip = 0.0;
    for (std::size_t p = 0; p < parts; ++p) {
      const std::size_t lo = p * n / parts, hi = (p + 1) * n / parts;
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      if (policy_active) {
        const MinibatchStats st = policy_step(buffer, idx, normalizer);
        epoch_kl += st.kl;
        epoch_clip += st.clip_fraction;
        policy_loss_sum += st.loss;
        entropy_sum += st.entropy;
        ++policy_steps;
      }
      value_loss_sum += value_step(buffer, idx, normalizer);
      ++value_steps;
    }
    ++stats.value_epochs;
    if (policy_active) {
      ++stats.policy_epochs;
      epoch_kl /= static_cast<double>(parts);
      epoch_clip /= static_cast<double>(parts);
      stats.epoch_kl.push_back(epoch_kl);
      stats.epoch_clip_fraction.push_back(epoch_clip);
      if (epoch_clip > config_.clip_fraction_limit || epoch_kl > config_.kl_limit) {
        policy_active = false;
        stats.early_stopped = true;
        stats.stop_reason = epoch_clip > config_.clip_fraction_limit ? "clip_fraction" : "kl";
      }
    }
  }
  stats.policy_loss = policy_steps > 0 ? policy_loss_sum / policy_steps : 0.0;
  stats.entropy = policy_steps > 0 ? entropy_sum / policy_steps : 0.0;
  stats.value_loss = value_loss_sum / value_steps;
  stats.kl = stats.epoch_kl.empty() ? 0.0 : stats.epoch_kl.back();
  stats.clip_fraction = stats.epoch_clip_fraction.empty() ? 0.0 : stats.epoch_clip_fraction.back();
  stats.alpha = temperature_.alpha();
  return stats;
}

PpoStats mappo_update(PpoLearner& learner, std::vector<RolloutBuffer> per_agent, const RunningNormalizer& normalizer,
                      Rng& rng) {
  RolloutBuffer pooled = pool(std::move(per_agent));
  return learner.update(pooled, normalizer, rng);
}

}  // namespace telroute::train
