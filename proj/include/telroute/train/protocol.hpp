#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "telroute/experiment.hpp"
#include "telroute/train/imitation.hpp"
#include "telroute/train/ppo.hpp"
#include "telroute/train/rollout.hpp"

namespace telroute::train {

struct Scenario {
  std::shared_ptr<const Topology> topology;
  FlowSchedule schedule;
};

// Deterministic topologies, intensities and traffic for training and
// held-out evaluation. Calibrated intensities are cached per topology.
class ScenarioSource {
 public:
  explicit ScenarioSource(const ExperimentConfig& config);

  std::vector<Scenario> training(int iteration, int count);
  std::vector<std::shared_ptr<const Topology>> bc_topologies(int iteration, int count);
  Scenario evaluation(int index);
  double intensity_for(const Topology& topology, std::uint64_t topology_key);

 private:
  Scenario make(std::shared_ptr<const Topology> topology, std::uint64_t topology_key, std::uint64_t traffic_seed);

  ExperimentConfig config_;
  std::shared_ptr<const Topology> fixed_;
  std::map<std::uint64_t, double> intensity_;
};

enum class Phase { Imitation, Cloning, Rl };
std::string to_string(Phase phase);

struct IterationRecord {
  int iteration = 0;  // 0-based over the whole protocol
  Phase phase = Phase::Imitation;
  std::vector<EpisodeMetrics> episodes;
  std::vector<double> episode_rewards;
  double imitation_loss = 0.0;  // mean student loss along the rollouts (IL) or on the data (BC)
  double imitation_train_loss = 0.0;
  std::optional<PpoStats> ppo;
};

// Runs the IL (or BC) phase followed by PPO, or MAPPO in multi-agent modes,
// checkpointing after every iteration.
class Trainer {
 public:
  explicit Trainer(ExperimentConfig config);

  int iteration() const { return iteration_; }
  int total_iterations() const { return config_.il_iterations + config_.rl_iterations; }
  bool finished() const { return iteration_ >= total_iterations(); }
  Phase phase_of(int iteration) const;

  IterationRecord run_iteration();
  // Runs the remaining iterations. With an output directory set, writes logs,
  // a config snapshot and one checkpoint per iteration.
  void run(const std::function<void(const IterationRecord&)>& on_iteration = {});

  std::map<std::string, nn::Matrix> state() const;
  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

  const ExperimentConfig& config() const { return config_; }
  policy::PolicyNetwork& policy() { return policy_; }
  const RunningNormalizer& normalizer() const { return normalizer_; }

 private:
  void warm_up_normalizer();
  IterationRecord imitation_iteration();
  IterationRecord cloning_iteration();
  IterationRecord rl_iteration();
  void write_outputs(const IterationRecord& record, bool fresh);

  ExperimentConfig config_;
  ScenarioSource scenarios_;
  policy::PolicyNetwork policy_;
  policy::ValueNetwork value_;
  RunningNormalizer normalizer_;
  ImitationLearner imitation_;
  PpoLearner ppo_;
  int iteration_ = 0;
};

// Trained policy ready for acting.
struct LoadedPolicy {
  std::unique_ptr<policy::PolicyNetwork> net;
  RunningNormalizer normalizer;
  int iteration = 0;
};
LoadedPolicy load_policy(const std::filesystem::path& checkpoint);

// Plays `episodes` held-out scenarios with the given controller.
std::vector<EpisodeMetrics> evaluate(ScenarioSource& scenarios, const EnvConfig& env, Controller& controller,
                                     int episodes, std::uint64_t seed);

// The four reported metrics plus drops, as plain numbers.
struct MetricRow {
  double delivered_mb = 0.0;
  double delay_ms = 0.0;
  double queue_load_pct = 0.0;
  double tcp_discard_mb = 0.0;
  double dropped_mb = 0.0;
};
MetricRow row_of(const EpisodeMetrics& metrics);
MetricRow mean_row(const std::vector<EpisodeMetrics>& episodes);

}  // namespace telroute::train
