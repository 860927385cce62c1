#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "telroute/netsim.hpp"
#include "telroute/telemetry.hpp"
#include "telroute/topology.hpp"
#include "telroute/traffic.hpp"

namespace telroute {

enum class DeploymentMode { BirdseyeSingle, CentralSingle, BirdseyeMulti, CentralMulti, LocalMulti };

DeploymentMode parse_mode(const std::string& name);
std::string to_string(DeploymentMode mode);
bool is_multi(DeploymentMode mode);
bool is_birdseye(DeploymentMode mode);
bool is_central(DeploymentMode mode);

struct EnvConfig {
  int horizon = 400;    // steps H
  double tau_ms = 5.0;  // step length
  DeploymentMode mode = DeploymentMode::BirdseyeSingle;
  double lambda_ac = 0.2;
  double lambda_r = 0.0;
  double decay = 0.8;
  int decay_hops = 3;
  SimConfig sim;

  void validate() const;
};

// Rows per router; routers an agent does not control stay empty.
struct RoutingAction {
  std::vector<std::vector<RowUpdate>> rows;

  static RoutingAction from_table(const ForwardingTable& table);
  static RoutingAction for_router(int num_nodes, NodeId u, std::vector<RowUpdate> rows);
};

struct Rewards {
  double global = 0.0;            // delivered MB this step
  std::vector<double> per_node;   // decayed local credit, length |V|
  std::vector<double> mixed;      // 1 entry (single agent) or |V| (multi agent)
};

Rewards compute_rewards(const StepTrace& trace, int num_nodes, double lambda_r, bool multi_agent,
                        double decay = 0.8, int decay_hops = 3);

struct EpisodeMetrics {
  int steps = 0;
  double delivered_mb = 0.0;
  double dropped_mb = 0.0;
  double tcp_discard_mb = 0.0;
  std::int64_t delivered_packets = 0;
  SimTime delay_sum_us = 0;
  double queue_load_sum = 0.0;  // sum over steps of mean edge occupancy

  double mean_delay_ms() const;
  double queue_load_pct() const;
  void add(const StepTrace& trace, double delivered_mb_step);

  bool operator==(const EpisodeMetrics&) const = default;
};

struct StepResult {
  int step = 0;  // steps taken so far
  std::vector<ObservationGraph> observations;
  Rewards rewards;
  StepTrace trace;
  bool done = false;
};

class Environment {
 public:
  Environment() = default;

  StepResult reset(std::shared_ptr<const Topology> topology, FlowSchedule schedule, EnvConfig config,
                   std::uint64_t seed = 0);
  // One action per agent (1 in single-agent modes, |V| in multi-agent modes,
  // where agent i supplies router i's rows) and the matching inference times.
  StepResult step(std::span<const RoutingAction> actions, std::span<const double> inference_ms);

  // Install delay of router u's rows in microseconds.
  SimTime install_delay_us(NodeId u, std::span<const double> inference_ms) const;

  // Observation of an arbitrary observer (-1 for the birds-eye view) now.
  ObservationGraph observe_as(NodeId observer) const;
  std::vector<ObservationGraph> observe() const;

  int num_agents() const;
  int step_index() const { return t_; }
  bool done() const { return t_ >= config_.horizon; }
  SimTime now() const { return static_cast<SimTime>(t_) * tau_us_; }
  NodeId central() const { return delays_->central_node(); }
  const EnvConfig& config() const { return config_; }
  const Topology& topology() const { return *topology_; }
  std::shared_ptr<const Topology> topology_ptr() const { return topology_; }
  const DelayMetrics& delays() const { return *delays_; }
  const Simulator& simulator() const { return *sim_; }
  const SnapshotStore& store() const { return store_; }
  const EpisodeMetrics& metrics() const { return metrics_; }
  const FlowSchedule& schedule() const { return schedule_; }

 private:
  std::shared_ptr<const Topology> topology_;
  FlowSchedule schedule_;
  EnvConfig config_;
  std::unique_ptr<DelayMetrics> delays_;
  std::unique_ptr<Simulator> sim_;
  SnapshotStore store_;
  EpisodeMetrics metrics_;
  SimTime tau_us_ = 0;
  int t_ = 0;
};

// Dropped bytes of one episode with the EIGRP shortest-path tables kept
// fixed throughout.
std::int64_t static_drop_bytes(std::shared_ptr<const Topology> topology, const FlowSchedule& schedule,
                               const EnvConfig& config);

// Smallest grid intensity at which the static EIGRP routing drops packets.
double calibrate_intensity(const Topology& topology, std::uint64_t seed, const EnvConfig& config,
                           double base = 1.0);

}  // namespace telroute
