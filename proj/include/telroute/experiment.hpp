#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "telroute/env.hpp"
#include "telroute/policy/networks.hpp"
#include "telroute/policy/routing.hpp"
#include "telroute/train/agent.hpp"
#include "telroute/train/imitation.hpp"
#include "telroute/train/ppo.hpp"

namespace telroute {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Everything one experiment needs; defaults mirror the paper's setup.
struct ExperimentConfig {
  // "mini5", "nx-XS" / "nx-S" / "nx-M" / "nx-L", or a topology file path.
  std::string preset = "mini5";
  std::uint64_t seed = 1;
  // <= 0 calibrates per topology so static routing drops packets.
  double intensity = 0.0;
  EnvConfig env{.mode = DeploymentMode::LocalMulti};
  policy::MpnConfig mpn;
  train::PPOConfig ppo;
  train::ImitationConfig il;
  train::ActingConfig acting;
  policy::Metric expert = policy::Metric::EIGRP;
  // Mode IL episodes run in; empty means the RL training mode.
  std::optional<DeploymentMode> il_mode;
  bool use_bc = false;  // offline cloning instead of interactive IL
  int il_iterations = 10;
  int rl_iterations = 10;
  int episodes_per_iteration = 16;
  int topologies_per_iteration = 4;  // nx presets only
  int bc_scenario_factor = 10;
  int eval_episodes = 30;
  std::string output_dir = "runs/default";

  bool is_nx() const { return preset.rfind("nx-", 0) == 0; }
  DeploymentMode imitation_mode() const { return il_mode.value_or(env.mode); }
  void validate() const;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

// Fixed topology of a non-nx preset (mini5 or a file).
std::shared_ptr<const Topology> preset_topology(const ExperimentConfig& config);

}  // namespace telroute
