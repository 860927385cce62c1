#include "telroute/train/protocol.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "telroute/nn/checkpoint.hpp"

namespace telroute::train {

namespace {

// Stream tags for Rng::derive.
constexpr std::uint64_t kCalibration = 0;
constexpr std::uint64_t kTrainTraffic = 1;
constexpr std::uint64_t kTrainTopology = 2;
constexpr std::uint64_t kEvalTraffic = 3;
constexpr std::uint64_t kWarmUp = 4;
constexpr std::uint64_t kIteration = 5;
constexpr std::uint64_t kEvalTopology = 6;
constexpr std::uint64_t kPolicyInit = 7;
constexpr std::uint64_t kValueInit = 8;
constexpr std::uint64_t kBcTopology = 9;

std::uint64_t seed_of(std::initializer_list<std::uint64_t> parts) { return Rng::derive(parts).next(); }

nn::Matrix scalar_matrix(double v) { return nn::Matrix(1, 1, v); }

std::map<std::string, nn::Matrix> with_prefix(const std::string& prefix, const std::map<std::string, nn::Matrix>& in) {
  std::map<std::string, nn::Matrix> out;
  for (const auto& [k, v] : in) out.emplace(prefix + k, v);
  return out;
}

std::map<std::string, nn::Matrix> strip_prefix(const std::string& prefix, const std::map<std::string, nn::Matrix>& in) {
  std::map<std::string, nn::Matrix> out;
  for (const auto& [k, v] : in) {
    if (k.rfind(prefix, 0) == 0) out.emplace(k.substr(prefix.size()), v);
  }
  return out;
}

const nn::Matrix& require(const std::map<std::string, nn::Matrix>& in, const std::string& key) {
  auto it = in.find(key);
  if (it == in.end()) throw nn::CheckpointError("checkpoint lacks '" + key + "'");
  return it->second;
}

nn::Matrix mpn_meta(const policy::MpnConfig& m) {
  return nn::Matrix(1, 7,
                    {static_cast<double>(m.steps), static_cast<double>(m.width), static_cast<double>(m.hidden),
                     static_cast<double>(m.hidden_layers), m.log_space ? 1.0 : 0.0,
                     m.feed_previous_weights ? 1.0 : 0.0, m.aggregate_incoming ? 1.0 : 0.0});
}

policy::MpnConfig mpn_from_meta(const nn::Matrix& m) {
  if (m.size() != 7) throw nn::CheckpointError("malformed meta.mpn");
  policy::MpnConfig c;
  c.steps = static_cast<int>(m.data[0]);
  c.width = static_cast<int>(m.data[1]);
  c.hidden = static_cast<int>(m.data[2]);
  c.hidden_layers = static_cast<int>(m.data[3]);
  c.log_space = m.data[4] != 0.0;
  c.feed_previous_weights = m.data[5] != 0.0;
  c.aggregate_incoming = m.data[6] != 0.0;
  return c;
}

void check_layout_version(const std::map<std::string, nn::Matrix>& in) {
  const double v = require(in, "meta.layout_version").item();
  if (v != features::kLayoutVersion) {
    throw nn::CheckpointError("checkpoint feature layout version " + std::to_string(static_cast<int>(v)) +
                              " does not match this build (" + std::to_string(features::kLayoutVersion) + ")");
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::Imitation: return "il";
    case Phase::Cloning: return "bc";
    case Phase::Rl: return "rl";
  }
  return "?";
}

ScenarioSource::ScenarioSource(const ExperimentConfig& config) : config_(config) {
  if (!config_.is_nx()) fixed_ = preset_topology(config_);
}

double ScenarioSource::intensity_for(const Topology& topology, std::uint64_t topology_key) {
  if (config_.intensity > 0.0) return config_.intensity;
  auto it = intensity_.find(topology_key);
  if (it != intensity_.end()) return it->second;
  const double v = calibrate_intensity(topology, seed_of({config_.seed, kCalibration, topology_key}), config_.env);
  intensity_.emplace(topology_key, v);
  return v;
}

Scenario ScenarioSource::make(std::shared_ptr<const Topology> topology, std::uint64_t topology_key,
                              std::uint64_t traffic_seed) {
  const double intensity = intensity_for(*topology, topology_key);
  Scenario s;
  s.schedule = generate_schedule(*topology, traffic_seed, intensity, config_.env.horizon * config_.env.tau_ms);
  s.topology = std::move(topology);
  return s;
}

std::vector<Scenario> ScenarioSource::training(int iteration, int count) {
  std::vector<Scenario> out;
  const auto k = static_cast<std::uint64_t>(iteration);
  if (!config_.is_nx()) {
    for (int e = 0; e < count; ++e) {
      out.push_back(make(fixed_, 0, seed_of({config_.seed, kTrainTraffic, k, static_cast<std::uint64_t>(e)})));
    }
    return out;
  }
  const SizeClass size = parse_size_class(config_.preset.substr(3));
  const int topologies = config_.topologies_per_iteration;
  const int per_topology = count / topologies;
  for (int j = 0; j < topologies; ++j) {
    const std::uint64_t key = seed_of({config_.seed, kTrainTopology, k, static_cast<std::uint64_t>(j)});
    auto topo = std::make_shared<const Topology>(generate_nx(size, key));
    for (int e = 0; e < per_topology; ++e) {
      const auto idx = static_cast<std::uint64_t>(j * per_topology + e);
      out.push_back(make(topo, key, seed_of({config_.seed, kTrainTraffic, k, idx})));
    }
  }
  return out;
}

std::vector<std::shared_ptr<const Topology>> ScenarioSource::bc_topologies(int iteration, int count) {
  if (!config_.is_nx()) return {fixed_};
  const SizeClass size = parse_size_class(config_.preset.substr(3));
  std::vector<std::shared_ptr<const Topology>> out;
  for (int j = 0; j < count; ++j) {
    out.push_back(std::make_shared<const Topology>(generate_nx(
        size, seed_of({config_.seed, kBcTopology, static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(j)}))));
  }
  return out;
}

Scenario ScenarioSource::evaluation(int index) {
  const auto i = static_cast<std::uint64_t>(index);
  const std::uint64_t traffic = seed_of({config_.seed, kEvalTraffic, i});
  if (!config_.is_nx()) return make(fixed_, 0, traffic);
  const std::uint64_t key = seed_of({config_.seed, kEvalTopology, i});
  auto topo = std::make_shared<const Topology>(generate_nx(parse_size_class(config_.preset.substr(3)), key));
  return make(topo, key, traffic);
}

Trainer::Trainer(ExperimentConfig config)
    : config_(std::move(config)),
      scenarios_(config_),
      policy_(config_.mpn, seed_of({config_.seed, kPolicyInit})),
      value_(config_.mpn, seed_of({config_.seed, kValueInit})),
      imitation_(policy_, config_.il),
      ppo_(policy_, value_, config_.ppo) {
  config_.validate();
  warm_up_normalizer();
}

Phase Trainer::phase_of(int iteration) const {
  if (iteration < config_.il_iterations) return config_.use_bc ? Phase::Cloning : Phase::Imitation;
  return Phase::Rl;
}

// One deterministic episode of the initial policy seeds the observation
// statistics, so the first update does not see raw megabit-scale inputs.
void Trainer::warm_up_normalizer() {
  const int count = config_.is_nx() ? config_.topologies_per_iteration : 1;
  EnvConfig env_config = config_.env;
  if (config_.il_iterations > 0 && !config_.use_bc) env_config.mode = config_.imitation_mode();
  ActingConfig acting = config_.acting;
  acting.explore = false;
  acting.synthetic_kappa = true;
  PolicyController controller(policy_, normalizer_, acting);
  Rng rng = Rng::derive({config_.seed, kWarmUp});
  for (int j = 0; j < count; ++j) {
    Scenario s = scenarios_.evaluation(-1 - j);
    Environment env;
    env.reset(s.topology, std::move(s.schedule), env_config);
    controller.begin_episode(env);
    std::vector<ObservationGraph> obs = env.observe();
    while (!env.done()) {
      Decision d = controller.decide(env, obs, rng);
      for (const ObservationGraph& g : d.inputs) normalizer_.observe(g);
      obs = env.step(d.actions, d.inference_ms).observations;
    }
  }
  normalizer_.commit();
}

IterationRecord Trainer::imitation_iteration() {
  IterationRecord rec;
  rec.phase = Phase::Imitation;
  EnvConfig env_config = config_.env;
  env_config.mode = config_.imitation_mode();
  ActingConfig acting = config_.acting;
  acting.explore = false;
  PolicyController student(policy_, normalizer_, acting);
  std::vector<ImitationSample> data;
  double loss = 0.0;
  const std::vector<Scenario> scenarios = scenarios_.training(iteration_, config_.episodes_per_iteration);
  for (const Scenario& s : scenarios) {
    Environment env;
    env.reset(s.topology, s.schedule, env_config);
    loss += collect_imitation_episode(env, student, config_.expert, normalizer_, data);
    rec.episodes.push_back(env.metrics());
    rec.episode_rewards.push_back(env.metrics().delivered_mb);
  }
  rec.imitation_loss = loss / static_cast<double>(scenarios.size());
  Rng rng = Rng::derive({config_.seed, kIteration, static_cast<std::uint64_t>(iteration_)});
  rec.imitation_train_loss = imitation_.train(data, normalizer_, rng);
  return rec;
}

IterationRecord Trainer::cloning_iteration() {
  IterationRecord rec;
  rec.phase = Phase::Cloning;
  const int count = config_.topologies_per_iteration * config_.bc_scenario_factor;
  const std::vector<ImitationSample> data =
      build_bc_dataset(scenarios_.bc_topologies(iteration_, count), config_.expert);
  for (const ImitationSample& s : data) normalizer_.observe(s.obs);
  rec.imitation_loss = imitation_.evaluate(data, normalizer_);
  Rng rng = Rng::derive({config_.seed, kIteration, static_cast<std::uint64_t>(iteration_)});
  rec.imitation_train_loss = imitation_.train(data, normalizer_, rng);
  return rec;
}

IterationRecord Trainer::rl_iteration() {
  IterationRecord rec;
  rec.phase = Phase::Rl;
  ActingConfig acting = config_.acting;
  acting.explore = true;
  PolicyController controller(policy_, normalizer_, acting);
  Rng rng = Rng::derive({config_.seed, kIteration, static_cast<std::uint64_t>(iteration_)});
  RolloutBuffer buffer;
  for (const Scenario& s : scenarios_.training(iteration_, config_.episodes_per_iteration)) {
    Environment env;
    env.reset(s.topology, s.schedule, config_.env);
    const EpisodeSummary summary = collect_episode(env, controller, value_, normalizer_, rng, config_.ppo.gamma,
                                                   config_.ppo.gae_lambda, buffer);
    rec.episodes.push_back(summary.metrics);
    rec.episode_rewards.push_back(summary.reward_sum);
  }
  // Multi-agent buffers already hold every agent's samples; pooling them is
  // what the MAPPO update does.
  rec.ppo = ppo_.update(buffer, normalizer_, rng);
  return rec;
}

IterationRecord Trainer::run_iteration() {
  if (finished()) throw std::logic_error("training already finished");
  IterationRecord rec;
  switch (phase_of(iteration_)) {
    case Phase::Imitation: rec = imitation_iteration(); break;
    case Phase::Cloning: rec = cloning_iteration(); break;
    case Phase::Rl: rec = rl_iteration(); break;
  }
  // Statistics gathered during this iteration apply from the next one on,
  // so rollout and update above saw the same normalization.
  normalizer_.commit();
  rec.iteration = iteration_;
  ++iteration_;
  return rec;
}

std::map<std::string, nn::Matrix> Trainer::state() const {
  std::map<std::string, nn::Matrix> out = with_prefix("policy/", policy_.params().values());
  for (auto& [k, v] : with_prefix("value/", value_.params().values())) out.emplace(k, std::move(v));
  auto& self = const_cast<Trainer&>(*this);
  self.imitation_.optimizer().export_state("opt.il/", out);
  self.ppo_.policy_optimizer().export_state("opt.pi/", out);
  self.ppo_.value_optimizer().export_state("opt.v/", out);
  self.ppo_.temperature().optimizer().export_state("opt.temp/", out);
  out.emplace("temp/rho", scalar_matrix(self.ppo_.temperature().rho()));
  normalizer_.export_state("norm/", out);
  out.emplace("meta.iteration", scalar_matrix(iteration_));
  out.emplace("meta.layout_version", scalar_matrix(features::kLayoutVersion));
  out.emplace("meta.mpn", mpn_meta(config_.mpn));
  return out;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { nn::save_arrays(path, state()); }

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  const std::map<std::string, nn::Matrix> in = nn::load_arrays(path);
  check_layout_version(in);
  if (!(require(in, "meta.mpn") == mpn_meta(config_.mpn))) {
    throw nn::CheckpointError("checkpoint network shape differs from the config's mpn section");
  }
  policy_.params().load_values(strip_prefix("policy/", in));
  value_.params().load_values(strip_prefix("value/", in));
  imitation_.optimizer().import_state("opt.il/", in);
  ppo_.policy_optimizer().import_state("opt.pi/", in);
  ppo_.value_optimizer().import_state("opt.v/", in);
  ppo_.temperature().optimizer().import_state("opt.temp/", in);
  ppo_.temperature().params().get("rho").value = require(in, "temp/rho");
  normalizer_.import_state("norm/", in);
  iteration_ = static_cast<int>(require(in, "meta.iteration").item());
}

void Trainer::write_outputs(const IterationRecord& rec, bool fresh) {
  namespace fs = std::filesystem;
  const fs::path out(config_.output_dir);
  const auto mode = fresh ? std::ios::trunc : std::ios::app;
  std::ofstream log(out / "train_log.jsonl", std::ios::out | mode);
  std::ofstream csv(out / "metrics.csv", std::ios::out | mode);
  std::ofstream jsonl(out / "metrics.jsonl", std::ios::out | mode);
  if (fresh) csv << "iteration,phase,episode,delivered_mb,delay_ms,queue_load_pct,tcp_discard_mb,dropped_mb,reward\n";

  nlohmann::ordered_json entry;
  entry["iteration"] = rec.iteration;
  entry["phase"] = to_string(rec.phase);
  if (!rec.episodes.empty()) {
    const MetricRow mean = mean_row(rec.episodes);
    double reward = 0.0;
    for (double r : rec.episode_rewards) reward += r;
    entry["mean_reward"] = reward / static_cast<double>(rec.episode_rewards.size());
    entry["delivered_mb"] = mean.delivered_mb;
    entry["delay_ms"] = mean.delay_ms;
    entry["dropped_mb"] = mean.dropped_mb;
  }
  if (rec.phase != Phase::Rl) {
    entry["il_loss"] = rec.imitation_loss;
    entry["il_train_loss"] = rec.imitation_train_loss;
  }
  if (rec.ppo) {
    const PpoStats& s = *rec.ppo;
    entry["policy_loss"] = s.policy_loss;
    entry["value_loss"] = s.value_loss;
    entry["entropy"] = s.entropy;
    entry["kl"] = s.kl;
    entry["clip_fraction"] = s.clip_fraction;
    entry["alpha"] = s.alpha;
    entry["policy_epochs"] = s.policy_epochs;
    entry["value_epochs"] = s.value_epochs;
    entry["early_stopped"] = s.early_stopped;
    if (s.early_stopped) entry["stop_reason"] = s.stop_reason;
  }
  log << entry.dump() << '\n';

  for (std::size_t e = 0; e < rec.episodes.size(); ++e) {
    const MetricRow r = row_of(rec.episodes[e]);
    csv << rec.iteration << ',' << to_string(rec.phase) << ',' << e << ',' << fmt(r.delivered_mb) << ','
        << fmt(r.delay_ms) << ',' << fmt(r.queue_load_pct) << ',' << fmt(r.tcp_discard_mb) << ','
        << fmt(r.dropped_mb) << ',' << fmt(rec.episode_rewards[e]) << '\n';
    nlohmann::ordered_json row = {{"iteration", rec.iteration},         {"phase", to_string(rec.phase)},
                                  {"episode", e},                       {"delivered_mb", r.delivered_mb},
                                  {"delay_ms", r.delay_ms},             {"queue_load_pct", r.queue_load_pct},
                                  {"tcp_discard_mb", r.tcp_discard_mb}, {"dropped_mb", r.dropped_mb},
                                  {"reward", rec.episode_rewards[e]}};
    jsonl << row.dump() << '\n';
  }

  const fs::path ckpt_dir = out / "checkpoints";
  char name[32];
  std::snprintf(name, sizeof name, "iter_%03d.ckpt", rec.iteration);
  save_checkpoint(ckpt_dir / name);
  if (finished()) {
    save_checkpoint(ckpt_dir / "final.ckpt");
    nlohmann::ordered_json manifest;
    manifest["checkpoint"] = "checkpoints/final.ckpt";
    manifest["iterations"] = iteration_;
    manifest["layout_version"] = features::kLayoutVersion;
    manifest["node_features"] = {"tx_mb", "rx_mb", "drop_mb", "discard_mb", "age_ms", "is_observer", "missing"};
    manifest["edge_features"] = {"datarate_mbps", "delay_ms", "occupancy", "drop_mb", "prev_weight"};
    manifest["global_features"] = {"step_fraction", "delivered_mb"};
    manifest["training_mode"] = to_string(config_.env.mode);
    manifest["algorithm"] = is_multi(config_.env.mode) ? "mappo" : "ppo";
    std::ofstream(out / "policy_manifest.json") << manifest.dump(2) << '\n';
  }
}

void Trainer::run(const std::function<void(const IterationRecord&)>& on_iteration) {
  const bool write = !config_.output_dir.empty();
  bool fresh = iteration_ == 0;
  if (write) {
    std::filesystem::create_directories(std::filesystem::path(config_.output_dir) / "checkpoints");
    if (fresh) std::ofstream(std::filesystem::path(config_.output_dir) / "config.json") << config_to_json(config_);
  }
  while (!finished()) {
    const IterationRecord rec = run_iteration();
    if (write) write_outputs(rec, fresh);
    fresh = false;
    if (on_iteration) on_iteration(rec);
  }
}

LoadedPolicy load_policy(const std::filesystem::path& checkpoint) {
  const std::map<std::string, nn::Matrix> in = nn::load_arrays(checkpoint);
  check_layout_version(in);
  LoadedPolicy p;
  p.net = std::make_unique<policy::PolicyNetwork>(mpn_from_meta(require(in, "meta.mpn")), 0);
  p.net->params().load_values(strip_prefix("policy/", in));
  p.normalizer.import_state("norm/", in);
  p.iteration = static_cast<int>(require(in, "meta.iteration").item());
  return p;
}

std::vector<EpisodeMetrics> evaluate(ScenarioSource& scenarios, const EnvConfig& env_config, Controller& controller,
                                     int episodes, std::uint64_t seed) {
  std::vector<EpisodeMetrics> out;
  for (int i = 0; i < episodes; ++i) {
    Scenario s = scenarios.evaluation(i);
    Environment env;
    env.reset(s.topology, std::move(s.schedule), env_config);
    Rng rng = Rng::derive({seed, kEvalTraffic, 1, static_cast<std::uint64_t>(i)});
    out.push_back(run_episode(env, controller, rng));
  }
  return out;
}

MetricRow row_of(const EpisodeMetrics& m) {
  return {m.delivered_mb, m.mean_delay_ms(), m.queue_load_pct(), m.tcp_discard_mb, m.dropped_mb};
}

MetricRow mean_row(const std::vector<EpisodeMetrics>& episodes) {
  MetricRow mean;
  for (const EpisodeMetrics& m : episodes) {
    const MetricRow r = row_of(m);
    mean.delivered_mb += r.delivered_mb;
    mean.delay_ms += r.delay_ms;
    mean.queue_load_pct += r.queue_load_pct;
    mean.tcp_discard_mb += r.tcp_discard_mb;
    mean.dropped_mb += r.dropped_mb;
  }
  if (!episodes.empty()) {
    const auto n = static_cast<double>(episodes.size());
    mean.delivered_mb /= n;
    mean.delay_ms /= n;
    mean.queue_load_pct /= n;
    mean.tcp_discard_mb /= n;
    mean.dropped_mb /= n;
  }
  return mean;
}

}  // namespace telroute::train
