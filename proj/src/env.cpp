#include "telroute/env.hpp"

#include <cmath>
#include <sstream>

#include "telroute/policy/routing.hpp"

namespace telroute {

namespace {
constexpr double kBytesPerMB = 1e6;
}

DeploymentMode parse_mode(const std::string& name) {
  if (name == "Birdseye-Single") return DeploymentMode::BirdseyeSingle;
  if (name == "Central-Single") return DeploymentMode::CentralSingle;
  if (name == "Birdseye-Multi") return DeploymentMode::BirdseyeMulti;
  if (name == "Central-Multi") return DeploymentMode::CentralMulti;
  if (name == "Local-Multi") return DeploymentMode::LocalMulti;
  throw std::invalid_argument("unknown deployment mode '" + name +
                              "' (expected Birdseye-Single, Central-Single, Birdseye-Multi, Central-Multi or Local-Multi)");
}

std::string to_string(DeploymentMode mode) {
  switch (mode) {
    case DeploymentMode::BirdseyeSingle: return "Birdseye-Single";
    case DeploymentMode::CentralSingle: return "Central-Single";
    case DeploymentMode::BirdseyeMulti: return "Birdseye-Multi";
    case DeploymentMode::CentralMulti: return "Central-Multi";
    case DeploymentMode::LocalMulti: return "Local-Multi";
  }
  return "?";
}

bool is_multi(DeploymentMode mode) {
  return mode == DeploymentMode::BirdseyeMulti || mode == DeploymentMode::CentralMulti ||
         mode == DeploymentMode::LocalMulti;
}
bool is_birdseye(DeploymentMode mode) {
  return mode == DeploymentMode::BirdseyeSingle || mode == DeploymentMode::BirdseyeMulti;
}
bool is_central(DeploymentMode mode) {
  return mode == DeploymentMode::CentralSingle || mode == DeploymentMode::CentralMulti;
}

void EnvConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("EnvConfig: horizon must be >= 1");
  if (!(tau_ms > 0.0)) throw std::invalid_argument("EnvConfig: tau_ms must be positive");
  if (lambda_ac < 0.0 || lambda_ac > 1.0) throw std::invalid_argument("EnvConfig: lambda_ac must lie in [0,1]");
  if (lambda_r < 0.0 || lambda_r > 1.0) throw std::invalid_argument("EnvConfig: lambda_r must lie in [0,1]");
  if (decay_hops < 0) throw std::invalid_argument("EnvConfig: decay_hops must be >= 0");
}

RoutingAction RoutingAction::from_table(const ForwardingTable& table) {
  RoutingAction a;
  a.rows.resize(static_cast<std::size_t>(table.num_nodes()));
  for (NodeId u = 0; u < table.num_nodes(); ++u) a.rows[static_cast<std::size_t>(u)] = policy::table_rows(table, u);
  return a;
}

RoutingAction RoutingAction::for_router(int num_nodes, NodeId u, std::vector<RowUpdate> rows) {
  RoutingAction a;
  a.rows.resize(static_cast<std::size_t>(num_nodes));
  a.rows[static_cast<std::size_t>(u)] = std::move(rows);
  return a;
}

Rewards compute_rewards(const StepTrace& trace, int num_nodes, double lambda_r, bool multi_agent, double decay,
                        int decay_hops) {
  Rewards r;
  r.global = static_cast<double>(trace.delivered_bytes) / kBytesPerMB;
  r.per_node.assign(static_cast<std::size_t>(num_nodes), 0.0);
  for (const TerminalEvent& ev : trace.events) {
    const double mb = static_cast<double>(ev.payload_bytes) / kBytesPerMB;
    const double base = ev.kind == TerminalKind::Delivered ? mb : -mb;
    double factor = 1.0;
    const int hops = std::min<int>(decay_hops, static_cast<int>(ev.path.size()));
    for (int k = 0; k < hops; ++k) {
      const NodeId u = ev.path[ev.path.size() - 1 - static_cast<std::size_t>(k)];
      r.per_node[static_cast<std::size_t>(u)] += base * factor;
      factor *= decay;
    }
  }
  if (multi_agent) {
    r.mixed.resize(r.per_node.size());
    for (std::size_t i = 0; i < r.per_node.size(); ++i) {
      r.mixed[i] = (1.0 - lambda_r) * r.per_node[i] + lambda_r * r.global;
    }
  } else {
    double mean_local = 0.0;
    for (double v : r.per_node) mean_local += v;
    if (num_nodes > 0) mean_local /= num_nodes;
    r.mixed = {(1.0 - lambda_r) * mean_local + lambda_r * r.global};
  }
  return r;
}

double EpisodeMetrics::mean_delay_ms() const {
  return delivered_packets > 0 ? us_to_ms(delay_sum_us) / static_cast<double>(delivered_packets) : 0.0;
}

double EpisodeMetrics::queue_load_pct() const { return steps > 0 ? 100.0 * queue_load_sum / steps : 0.0; }

void EpisodeMetrics::add(const StepTrace& trace, double delivered_mb_step) {
  ++steps;
  delivered_mb += delivered_mb_step;
  dropped_mb += static_cast<double>(trace.dropped_bytes) / kBytesPerMB;
  tcp_discard_mb += static_cast<double>(trace.discarded_bytes) / kBytesPerMB;
  delivered_packets += trace.delivered_packets;
  delay_sum_us += trace.delay_sum_us;
  double occ = 0.0;
  for (const EdgeCounters& e : trace.edges) occ += e.mean_occupancy;
  if (!trace.edges.empty()) occ /= static_cast<double>(trace.edges.size());
  queue_load_sum += occ;
}

StepResult Environment::reset(std::shared_ptr<const Topology> topology, FlowSchedule schedule, EnvConfig config,
                              std::uint64_t /*seed*/) {
  if (!topology) throw std::invalid_argument("reset: topology is null");
  config.validate();
  topology_ = std::move(topology);
  schedule_ = std::move(schedule);
  config_ = config;
  tau_us_ = ms_to_us(config_.tau_ms);
  delays_ = std::make_unique<DelayMetrics>(*topology_);
  const ForwardingTable initial =
      policy::to_action_single(*topology_, policy::sp_baseline(*topology_, policy::Metric::EIGRP));
  sim_ = std::make_unique<Simulator>(*topology_, schedule_, initial, config_.sim);
  store_ = SnapshotStore(topology_->num_nodes());
  store_.record_idle(*topology_, 0);
  metrics_ = {};
  t_ = 0;
  StepResult r;
  r.observations = observe();
  r.rewards.per_node.assign(static_cast<std::size_t>(topology_->num_nodes()), 0.0);
  r.rewards.mixed.assign(is_multi(config_.mode) ? static_cast<std::size_t>(topology_->num_nodes()) : 1, 0.0);
  return r;
}

int Environment::num_agents() const { return is_multi(config_.mode) ? topology_->num_nodes() : 1; }

ObservationGraph Environment::observe_as(NodeId observer) const {
  return assemble_observation(store_, topology_, *delays_, observer, now(),
                              static_cast<double>(t_) / static_cast<double>(config_.horizon));
}

std::vector<ObservationGraph> Environment::observe() const {
  std::vector<ObservationGraph> out;
  const int n = topology_->num_nodes();
  switch (config_.mode) {
    case DeploymentMode::BirdseyeSingle: out.push_back(observe_as(-1)); break;
    case DeploymentMode::CentralSingle: out.push_back(observe_as(central())); break;
    case DeploymentMode::BirdseyeMulti:
    case DeploymentMode::CentralMulti: {
      const ObservationGraph base = observe_as(is_central(config_.mode) ? central() : -1);
      for (NodeId i = 0; i < n; ++i) out.push_back(for_agent(base, i));
      break;
    }
    case DeploymentMode::LocalMulti:
      for (NodeId i = 0; i < n; ++i) {
        out.push_back(observe_as(i));
        out.back().agent_id = i;
      }
      break;
  }
  return out;
}

SimTime Environment::install_delay_us(NodeId u, std::span<const double> inference_ms) const {
  // Birds-eye deployments act on current state without any delay.
  if (is_birdseye(config_.mode)) return 0;
  const double kappa_ac = inference_ms[is_multi(config_.mode) ? static_cast<std::size_t>(u) : 0];
  SimTime d = ms_to_us(config_.lambda_ac * kappa_ac);
  if (is_central(config_.mode)) d += delays_->delay_us(central(), u);
  return d;
}

StepResult Environment::step(std::span<const RoutingAction> actions, std::span<const double> inference_ms) {
  if (!sim_) throw std::logic_error("step called before reset");
  if (done()) throw std::logic_error("step called after the episode ended");
  const int n = topology_->num_nodes();
  const auto agents = static_cast<std::size_t>(num_agents());
  if (actions.size() != agents || inference_ms.size() != agents) {
    throw std::invalid_argument("step: expected " + std::to_string(agents) + " actions and inference times, got " +
                                std::to_string(actions.size()) + " and " + std::to_string(inference_ms.size()));
  }
  for (double k : inference_ms) {
    if (!(k >= 0.0) || !std::isfinite(k)) throw std::invalid_argument("step: inference times must be finite and >= 0");
  }

  // Each router's rows come from the single agent or from agent u itself.
  std::ostringstream missing;
  int num_missing = 0;
  std::vector<const std::vector<RowUpdate>*> rows(static_cast<std::size_t>(n), nullptr);
  for (NodeId u = 0; u < n; ++u) {
    const RoutingAction& a = actions[is_multi(config_.mode) ? static_cast<std::size_t>(u) : 0];
    const std::vector<RowUpdate>* r =
        static_cast<std::size_t>(u) < a.rows.size() ? &a.rows[static_cast<std::size_t>(u)] : nullptr;
    std::vector<char> have(static_cast<std::size_t>(n), 0);
    if (r != nullptr) {
      for (const RowUpdate& ru : *r) {
        if (ru.dst >= 0 && ru.dst < n) have[static_cast<std::size_t>(ru.dst)] = 1;
      }
    }
    for (NodeId z = 0; z < n; ++z) {
      if (z != u && !have[static_cast<std::size_t>(z)]) {
        if (num_missing++ < 32) missing << " (" << u << "," << z << ")";
      }
    }
    rows[static_cast<std::size_t>(u)] = r;
  }
  if (num_missing > 0) {
    throw RoutingError("missing forwarding rows (" + std::to_string(num_missing) + "):" + missing.str() +
                       (num_missing > 32 ? " ..." : ""));
  }

  const SimTime start = now();
  for (NodeId u = 0; u < n; ++u) {
    sim_->install_forwarding(u, *rows[static_cast<std::size_t>(u)], start + install_delay_us(u, inference_ms));
  }
  const SimTime end = start + tau_us_;
  StepResult res;
  res.trace = sim_->advance(end);
  store_.record(*topology_, res.trace, end);
  ++t_;
  res.step = t_;
  res.rewards = compute_rewards(res.trace, n, config_.lambda_r, is_multi(config_.mode), config_.decay,
                                config_.decay_hops);
  metrics_.add(res.trace, res.rewards.global);
  res.done = done();
  res.observations = observe();
  return res;
}

std::int64_t static_drop_bytes(std::shared_ptr<const Topology> topology, const FlowSchedule& schedule,
                               const EnvConfig& config) {
  EnvConfig c = config;
  c.mode = DeploymentMode::BirdseyeSingle;
  Environment env;
  env.reset(topology, schedule, c);
  const RoutingAction action = RoutingAction::from_table(
      policy::to_action_single(*topology, policy::sp_baseline(*topology, policy::Metric::EIGRP)));
  const double zero = 0.0;
  std::int64_t dropped = 0;
  while (!env.done()) {
    const StepResult r = env.step({&action, 1}, {&zero, 1});
    dropped += r.trace.dropped_bytes;
  }
  return dropped;
}

double calibrate_intensity(const Topology& topology, std::uint64_t seed, const EnvConfig& config, double base) {
  auto topo = std::make_shared<const Topology>(topology);
  const double horizon_ms = config.horizon * config.tau_ms;
  return calibrate_intensity(
      [&](double intensity) {
        return static_drop_bytes(topo, generate_schedule(topology, seed, intensity, horizon_ms), config);
      },
      base);
}

}  // namespace telroute
