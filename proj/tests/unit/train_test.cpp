#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "telroute/experiment.hpp"
#include "telroute/train/gae.hpp"
#include "telroute/train/imitation.hpp"
#include "telroute/train/ppo.hpp"
#include "telroute/train/protocol.hpp"
#include "telroute/train/rollout.hpp"

using namespace telroute;
using namespace telroute::train;

namespace {

policy::MpnConfig tiny_mpn() {
  policy::MpnConfig m;
  m.steps = 2;
  m.width = 8;
  m.hidden = 8;
  return m;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.seed = 5;
  c.intensity = 3.0;
  c.env.horizon = 6;
  c.env.mode = DeploymentMode::LocalMulti;
  c.mpn = tiny_mpn();
  c.ppo.epochs = 2;
  c.ppo.minibatches = 2;
  c.il.epochs = 2;
  c.il.minibatches = 2;
  c.il_iterations = 1;
  c.rl_iterations = 2;
  c.episodes_per_iteration = 2;
  c.eval_episodes = 1;
  c.output_dir = "";
  return c;
}

// A short exploring rollout on mini5.
struct RolloutFixture {
  std::shared_ptr<const Topology> topo = std::make_shared<const Topology>(build_mini5());
  // Same seeds as the copies the tests build for comparison.
  policy::PolicyNetwork policy{tiny_mpn(), 1};
  policy::ValueNetwork value{tiny_mpn(), 2};
  RunningNormalizer normalizer;
  RolloutBuffer buffer;

  explicit RolloutFixture(DeploymentMode mode = DeploymentMode::CentralSingle) {
    EnvConfig cfg;
    cfg.horizon = 8;
    cfg.mode = mode;
    Environment env;
    env.reset(topo, generate_schedule(*topo, 3, 2.0, 40), cfg);
    PolicyController ctl(policy, normalizer, ActingConfig{.explore = true});
    Rng rng(4);
    // Pending statistics stay uncommitted so the buffer matches the current policy.
    collect_episode(env, ctl, value, normalizer, rng, 0.95, 0.9, buffer);
  }
};

bool same_values(const nn::ParameterSet& a, const nn::ParameterSet& b) { return a.values() == b.values(); }

}  // namespace

TEST(Gae, MatchesDoubleSum) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(12));
    std::vector<double> r(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));
    for (double& x : r) x = rng.normal();
    for (double& x : v) x = rng.normal();
    const double last = rng.normal(), gamma = rng.uniform(0.5, 1.0), lambda = rng.uniform(0.0, 1.0);
    const GaeResult g = compute_gae(r, v, last, gamma, lambda);
    const auto want = oracle::gae_double_sum(r, v, last, gamma, lambda);
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(g.advantages[static_cast<std::size_t>(i)], want[static_cast<std::size_t>(i)], 1e-10);
      EXPECT_NEAR(g.returns[static_cast<std::size_t>(i)], want[static_cast<std::size_t>(i)] + v[static_cast<std::size_t>(i)], 1e-10);
    }
  }
}

TEST(Gae, LambdaLimits) {
  const std::vector<double> r{1.0, -0.5, 2.0, 0.25}, v{0.3, 0.1, -0.2, 0.7};
  const double gamma = 0.9, last = 0.4;
  const GaeResult td = compute_gae(r, v, last, gamma, 0.0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double next = i + 1 < r.size() ? v[i + 1] : last;
    EXPECT_NEAR(td.advantages[i], r[i] + gamma * next - v[i], 1e-12);
  }
  const GaeResult mc = compute_gae(r, v, last, gamma, 1.0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    double ret = 0.0, disc = 1.0;
    for (std::size_t k = i; k < r.size(); ++k, disc *= gamma) ret += disc * r[k];
    ret += disc * last;
    EXPECT_NEAR(mc.returns[i], ret, 1e-12);
  }
}

TEST(Gae, AdvantageNormalization) {
  std::vector<double> a{1.0, 2.0, 3.0, 6.0};
  normalize_advantages(a);
  double m = 0.0, s = 0.0;
  for (double x : a) m += x;
  for (double x : a) s += x * x;
  EXPECT_NEAR(m / 4, 0.0, 1e-12);
  EXPECT_NEAR(s / 4, 1.0, 1e-12);
  std::vector<double> c(3, 2.5);
  normalize_advantages(c);
  for (double x : c) EXPECT_EQ(x, 0.0);
}

TEST(Ppo, FreshBufferHasUnitRatio) {
  RolloutFixture f;
  PPOConfig cfg;
  cfg.epochs = 1;
  cfg.minibatches = 1;
  PpoLearner learner(f.policy, f.value, cfg);
  Rng rng(2);
  const PpoStats s = learner.update(f.buffer, f.normalizer, rng);
  // Single minibatch: statistics come from the pre-update policy.
  EXPECT_NEAR(s.kl, 0.0, 1e-10);
  EXPECT_EQ(s.clip_fraction, 0.0);
  EXPECT_FALSE(s.early_stopped);
}

TEST(Ppo, ClipFractionStopFreezesPolicy) {
  RolloutFixture f;
  for (Transition& t : f.buffer.samples) t.log_prob -= 1.0;  // ratio e > 1 + eps
  PPOConfig cfg;
  cfg.epochs = 4;
  cfg.minibatches = 2;
  policy::PolicyNetwork policy_one(tiny_mpn(), 1);
  policy::ValueNetwork value_one(tiny_mpn(), 2);
  const auto value_start = f.value.params().values();

  PpoLearner many(f.policy, f.value, cfg);
  Rng rng_a(3);
  const PpoStats s = many.update(f.buffer, f.normalizer, rng_a);
  EXPECT_TRUE(s.early_stopped);
  EXPECT_EQ(s.stop_reason, "clip_fraction");
  EXPECT_GT(s.clip_fraction, 0.2);
  EXPECT_EQ(s.policy_epochs, 1);
  EXPECT_EQ(s.value_epochs, 4);

  PPOConfig one_cfg = cfg;
  one_cfg.epochs = 1;
  PpoLearner one(policy_one, value_one, one_cfg);
  Rng rng_b(3);
  one.update(f.buffer, f.normalizer, rng_b);
  EXPECT_TRUE(same_values(f.policy.params(), policy_one.params()));
  EXPECT_FALSE(same_values(f.value.params(), value_one.params()));
  EXPECT_FALSE(f.value.params().values() == value_start);
}

TEST(Ppo, KlStopFreezesPolicy) {
  RolloutFixture f;
  // Behaviour means far away, log-probs equal to the current policy's: the
  // ratio stays at 1 while the KL is huge.
  std::vector<const ObservationGraph*> graphs;
  for (const Transition& t : f.buffer.samples) graphs.push_back(&t.obs);
  std::vector<std::vector<double>> mu, sigma;
  policy_forward(f.policy, f.normalizer, graphs, mu, sigma);
  for (std::size_t i = 0; i < f.buffer.size(); ++i) {
    Transition& t = f.buffer.samples[i];
    double lp = 0.0;
    for (std::size_t e = 0; e < t.log_w.size(); ++e) {
      lp += policy::lognormal_log_density(mu[i][e], sigma[i][e], t.log_w[e]);
      t.mu[e] = mu[i][e] + 10.0;
      t.sigma[e] = sigma[i][e];
    }
    t.log_prob = lp;
  }
  PPOConfig cfg;
  cfg.epochs = 3;
  cfg.minibatches = 1;
  cfg.lr_policy = 1e-6;
  policy::PolicyNetwork policy_one(tiny_mpn(), 1);
  policy::ValueNetwork value_one(tiny_mpn(), 2);
  PpoLearner many(f.policy, f.value, cfg);
  Rng rng_a(5);
  const PpoStats s = many.update(f.buffer, f.normalizer, rng_a);
  EXPECT_TRUE(s.early_stopped);
  EXPECT_EQ(s.stop_reason, "kl");
  EXPECT_GT(s.kl, 10.0);
  EXPECT_EQ(s.policy_epochs, 1);
  EXPECT_EQ(s.value_epochs, 3);

  PPOConfig one_cfg = cfg;
  one_cfg.epochs = 1;
  PpoLearner one(policy_one, value_one, one_cfg);
  Rng rng_b(5);
  one.update(f.buffer, f.normalizer, rng_b);
  EXPECT_TRUE(same_values(f.policy.params(), policy_one.params()));
  EXPECT_FALSE(same_values(f.value.params(), value_one.params()));
}

TEST(Ppo, TemperatureRisesWhileEntropyIsLow) {
  Temperature t(0.01, 3e-4);
  double prev = t.alpha();
  for (int i = 0; i < 10; ++i) {
    t.step(0.5, 2.0);
    EXPECT_GT(t.alpha(), prev);
    prev = t.alpha();
  }
  Temperature u(0.01, 3e-4);
  u.step(3.0, 2.0);
  EXPECT_LT(u.alpha(), 0.01);
}

TEST(Ppo, MultiAgentWithOneAgentIsPlainPpo) {
  RolloutFixture f;
  policy::PolicyNetwork p2(tiny_mpn(), 1);
  policy::ValueNetwork v2(tiny_mpn(), 2);
  PPOConfig cfg;
  cfg.epochs = 2;
  cfg.minibatches = 2;
  PpoLearner a(f.policy, f.value, cfg), b(p2, v2, cfg);
  Rng ra(6), rb(6);
  RolloutBuffer copy = f.buffer;
  const PpoStats sa = a.update(f.buffer, f.normalizer, ra);
  std::vector<RolloutBuffer> agents;
  agents.push_back(std::move(copy));
  const PpoStats sb = mappo_update(b, std::move(agents), f.normalizer, rb);
  EXPECT_EQ(sa.policy_loss, sb.policy_loss);
  EXPECT_TRUE(same_values(f.policy.params(), p2.params()));
  EXPECT_TRUE(same_values(f.value.params(), v2.params()));
}

TEST(Ppo, MultiAgentSamplesShareCentralValueObservation) {
  RolloutFixture f(DeploymentMode::LocalMulti);
  EXPECT_EQ(f.buffer.size(), 8u * 5u);
  EXPECT_EQ(f.buffer.value_obs.size(), 8u);
  for (std::size_t i = 0; i < f.buffer.size(); ++i) {
    EXPECT_EQ(f.buffer.samples[i].value_index, static_cast<int>(i / 5));
  }
}

TEST(Imitation, ScaleInvariance) {
  const std::vector<double> expert{1.0, 3.0, 0.5, 2.0, 7.0};
  for (double c : {0.5, 1.0, 3.0}) {
    std::vector<double> student = expert;
    for (double& x : student) x *= c;
    EXPECT_NEAR(il_loss(student, expert), 0.0, 1e-12);
  }
}

TEST(Imitation, AgainstUniformExpert) {
  // With a uniform expert the loss is the squared coefficient of variation.
  const std::vector<double> w{1.0, 2.0, 4.0, 5.0};
  const std::vector<double> ones(4, 1.0);
  double m = 0.0, var = 0.0;
  for (double x : w) m += x / 4;
  for (double x : w) var += (x - m) * (x - m) / 4;
  EXPECT_NEAR(il_loss(w, ones), var / (m * m), 1e-12);
}

TEST(Imitation, BatchedLossMatchesScalarLoss) {
  const std::vector<double> s{1.0, 2.0, 3.0, 0.5, 0.7, 1.1, 2.2};
  const std::vector<double> e{2.0, 2.0, 1.0, 1.0, 3.0, 1.0, 4.0};
  const std::vector<int> graph{0, 0, 0, 1, 1, 1, 1};
  nn::Tape tape(false);
  const double batched = il_loss(tape.constant(nn::Matrix::column(s)), e, graph, 2).item();
  const double a = il_loss(std::span(s).first(3), std::span(e).first(3));
  const double b = il_loss(std::span(s).last(4), std::span(e).last(4));
  EXPECT_NEAR(batched, (3 * a + 4 * b) / 7, 1e-12);
}

TEST(Imitation, FitsASingleSample) {
  const auto topo = std::make_shared<const Topology>(build_mini5());
  const auto data = build_bc_dataset({topo}, policy::Metric::EIGRP);
  ASSERT_EQ(data.size(), 1u);
  policy::PolicyNetwork net(tiny_mpn(), 3);
  RunningNormalizer norm;
  ImitationLearner learner(net, {.lr = 3e-3, .epochs = 2000, .minibatches = 1, .grad_clip = 1.0});
  const double before = learner.evaluate(data, norm);
  Rng rng(1);
  learner.train(data, norm, rng);
  const double after = learner.evaluate(data, norm);
  EXPECT_LT(after, 0.05 * before);
}

TEST(Imitation, EvaluationIgnoresSampleOrder) {
  const auto data = build_bc_dataset(
      {std::make_shared<const Topology>(build_mini5()), std::make_shared<const Topology>(generate_nx(SizeClass::XS, 1)),
       std::make_shared<const Topology>(generate_nx(SizeClass::XS, 2))},
      policy::Metric::OSPF);
  std::vector<ImitationSample> shuffled{data[2], data[0], data[1]};
  policy::PolicyNetwork net(tiny_mpn(), 4);
  ImitationLearner learner(net, {});
  RunningNormalizer norm;
  EXPECT_NEAR(learner.evaluate(data, norm), learner.evaluate(shuffled, norm), 1e-12);
}

TEST(Normalizer, CommitSemantics) {
  RolloutFixture f;
  RunningNormalizer norm;
  const ObservationGraph& g = f.buffer.samples[3].obs;
  policy::GraphBatch a = policy::GraphBatch::from(g);
  norm.apply(a);
  norm.observe(g);
  norm.observe(f.buffer.samples[4].obs);
  policy::GraphBatch b = policy::GraphBatch::from(g);
  norm.apply(b);
  EXPECT_EQ(a.edges.data, b.edges.data);
  norm.commit();
  policy::GraphBatch c = policy::GraphBatch::from(g);
  norm.apply(c);
  EXPECT_NE(a.edges.data, c.edges.data);
  EXPECT_DOUBLE_EQ(norm.edge_stats().count, 24.0);
}

TEST(Normalizer, WelfordMergeMatchesTwoPass) {
  Rng rng(8);
  std::vector<std::array<double, 2>> rows(50);
  for (auto& r : rows) r = {rng.normal(), 3.0 * rng.normal() + 1.0};
  FeatureStats left(2), right(2);
  for (std::size_t i = 0; i < rows.size(); ++i) (i < 17 ? left : right).add(rows[i].data());
  left.merge(right);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (const auto& r : rows) m += r[c] / 50;
    for (const auto& r : rows) v += (r[c] - m) * (r[c] - m) / 50;
    EXPECT_NEAR(left.mean[c], m, 1e-12);
    EXPECT_NEAR(left.variance(c), v, 1e-12);
  }
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = tiny_experiment();
  c.env.lambda_ac = 0.35;
  c.ppo.kl_limit = 7.0;
  c.il_mode = DeploymentMode::CentralSingle;
  c.expert = policy::Metric::OSPF;
  const std::string text = config_to_json(c);
  const ExperimentConfig back = config_from_json(text);
  EXPECT_EQ(config_to_json(back), text);
  EXPECT_EQ(back.env.lambda_ac, 0.35);
  EXPECT_EQ(back.imitation_mode(), DeploymentMode::CentralSingle);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(config_from_json(R"({"seeed": 3})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"env": {"horizn": 3}})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"preset": "nx-XXL"})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"env": {"mode": "Sideways"}})"), std::invalid_argument);
  EXPECT_THROW(config_from_json(R"({"env": {"lambda_ac": 2}})"), std::invalid_argument);
  EXPECT_THROW(config_from_json("{not json"), ConfigError);
}

TEST(Trainer, ResumeIsBitIdentical) {
  const ExperimentConfig cfg = tiny_experiment();
  Trainer straight(cfg);
  while (!straight.finished()) straight.run_iteration();

  const auto path = std::filesystem::temp_directory_path() / "telroute_resume_test.ckpt";
  {
    Trainer first(cfg);
    first.run_iteration();
    first.run_iteration();
    first.save_checkpoint(path);
  }
  Trainer resumed(cfg);
  resumed.load_checkpoint(path);
  EXPECT_EQ(resumed.iteration(), 2);
  while (!resumed.finished()) resumed.run_iteration();
  EXPECT_TRUE(straight.state() == resumed.state());
  std::filesystem::remove(path);
}

TEST(Trainer, RejectsCheckpointOfOtherArchitecture) {
  ExperimentConfig cfg = tiny_experiment();
  const auto path = std::filesystem::temp_directory_path() / "telroute_layout_test.ckpt";
  Trainer(cfg).save_checkpoint(path);
  cfg.mpn.width = 12;
  Trainer other(cfg);
  EXPECT_ANY_THROW(other.load_checkpoint(path));
  std::filesystem::remove(path);
}

TEST(Trainer, PhasesAndOutputs) {
  ExperimentConfig cfg = tiny_experiment();
  const auto dir = std::filesystem::temp_directory_path() / "telroute_trainer_test";
  std::filesystem::remove_all(dir);
  cfg.output_dir = dir.string();
  Trainer t(cfg);
  EXPECT_EQ(t.phase_of(0), Phase::Imitation);
  EXPECT_EQ(t.phase_of(1), Phase::Rl);
  std::vector<IterationRecord> seen;
  t.run([&](const IterationRecord& r) { seen.push_back(r); });
  ASSERT_EQ(seen.size(), 3u);
  EXPECT_FALSE(seen[0].ppo.has_value());
  EXPECT_GT(seen[0].imitation_loss, 0.0);
  EXPECT_TRUE(seen[1].ppo.has_value());
  EXPECT_EQ(seen[1].episodes.size(), 2u);
  for (const char* f : {"config.json", "train_log.jsonl", "metrics.csv", "checkpoints/final.ckpt",
                        "checkpoints/iter_002.ckpt", "policy_manifest.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const LoadedPolicy p = load_policy(dir / "checkpoints/final.ckpt");
  EXPECT_EQ(p.iteration, 3);
  std::filesystem::remove_all(dir);
}

TEST(Trainer, WithoutImitationOnlyRl) {
  ExperimentConfig cfg = tiny_experiment();
  cfg.il_iterations = 0;
  cfg.rl_iterations = 1;
  Trainer t(cfg);
  const IterationRecord r = t.run_iteration();
  EXPECT_EQ(r.phase, Phase::Rl);
  EXPECT_TRUE(r.ppo.has_value());
  EXPECT_TRUE(t.finished());
}

TEST(Trainer, BehaviourCloningPhase) {
  ExperimentConfig cfg = tiny_experiment();
  cfg.use_bc = true;
  cfg.rl_iterations = 0;
  Trainer t(cfg);
  const IterationRecord r = t.run_iteration();
  EXPECT_EQ(r.phase, Phase::Cloning);
  EXPECT_GT(r.imitation_loss, 0.0);
}

TEST(Scenarios, DeterministicAndDistinct) {
  ExperimentConfig cfg = tiny_experiment();
  cfg.intensity = 2.0;
  ScenarioSource a(cfg), b(cfg);
  const auto ta = a.training(0, 3), tb = b.training(0, 3);
  ASSERT_EQ(ta.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(ta[i].schedule, tb[i].schedule);
  EXPECT_FALSE(ta[0].schedule == ta[1].schedule);
  const auto t1 = a.training(1, 3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_FALSE(t1[i].schedule == ta[i].schedule);
  EXPECT_EQ(a.evaluation(4).schedule, b.evaluation(4).schedule);
  EXPECT_FALSE(a.evaluation(0).schedule == ta[0].schedule);
}
