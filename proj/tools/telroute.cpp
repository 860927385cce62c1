// telroute command-line driver: train, eval, gen-topo, gen-traffic, payload,
// verify-determinism.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "telroute/experiment.hpp"
#include "telroute/nn/kernels.hpp"
#include "telroute/train/protocol.hpp"

namespace fs = std::filesystem;
using namespace telroute;

namespace {

std::shared_ptr<const Topology> topology_arg(const std::string& arg, std::uint64_t seed) {
  if (arg == "mini5") return std::make_shared<const Topology>(build_mini5());
  if (arg.rfind("nx-", 0) == 0) return std::make_shared<const Topology>(generate_nx(parse_size_class(arg.substr(3)), seed));
  if (!fs::exists(arg)) throw ConfigError("topology '" + arg + "' is neither a preset nor an existing file");
  return std::make_shared<const Topology>(load_topology(arg));
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int cmd_train(const std::string& config_path, const std::string& output, const std::string& resume, bool quiet) {
  ExperimentConfig config = load_config(config_path);
  if (!output.empty()) config.output_dir = output;
  train::Trainer trainer(config);
  if (!resume.empty()) trainer.load_checkpoint(resume);
  trainer.run([&](const train::IterationRecord& rec) {
    if (quiet) return;
    const train::MetricRow mean = train::mean_row(rec.episodes);
    std::printf("iter %3d %-2s", rec.iteration, train::to_string(rec.phase).c_str());
    if (!rec.episodes.empty()) std::printf("  delivered %.3f MB", mean.delivered_mb);
    if (rec.phase != train::Phase::Rl) std::printf("  il_loss %.5f", rec.imitation_loss);
    if (rec.ppo) {
      std::printf("  kl %.4f clip %.3f alpha %.4f entropy %.3f%s", rec.ppo->kl, rec.ppo->clip_fraction,
                  rec.ppo->alpha, rec.ppo->entropy, rec.ppo->early_stopped ? " (early stop)" : "");
    }
    std::printf("\n");
    std::fflush(stdout);
  });
  std::printf("final checkpoint: %s\n", (fs::path(config.output_dir) / "checkpoints" / "final.ckpt").c_str());
  return 0;
}

struct EvalArgs {
  std::string config;
  std::string preset = "mini5";
  std::string checkpoint;
  std::string baseline;
  std::string mode = "Local-Multi";
  std::vector<double> lambda_ac{0.2};
  int episodes = 30;
  std::uint64_t seed = 1;
  double intensity = 0.0;
  bool wall_clock = false;
  std::string output = "eval_out";
};

int cmd_eval(const EvalArgs& a) {
  if (a.checkpoint.empty() == a.baseline.empty()) throw ConfigError("eval needs exactly one of --checkpoint or --baseline");
  ExperimentConfig config = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
  if (a.config.empty()) {
    config.preset = a.preset;
    config.seed = a.seed;
    config.intensity = a.intensity;
  }
  config.validate();
  const DeploymentMode mode = parse_mode(a.mode);

  std::unique_ptr<train::Controller> controller;
  train::LoadedPolicy loaded;
  std::string label;
  if (!a.checkpoint.empty()) {
    loaded = train::load_policy(a.checkpoint);
    train::ActingConfig acting = config.acting;
    acting.explore = false;
    acting.synthetic_kappa = !a.wall_clock;
    controller = std::make_unique<train::PolicyController>(*loaded.net, loaded.normalizer, acting);
    label = "policy";
  } else {
    controller = std::make_unique<train::StaticController>(policy::parse_metric(a.baseline));
    label = "SP_" + policy::to_string(policy::parse_metric(a.baseline));
  }

  fs::create_directories(a.output);
  std::ofstream csv(fs::path(a.output) / "metrics.csv");
  std::ofstream jsonl(fs::path(a.output) / "metrics.jsonl");
  csv << "controller,mode,lambda_ac,episode,delivered_mb,delay_ms,queue_load_pct,tcp_discard_mb,dropped_mb\n";
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  train::ScenarioSource scenarios(config);
  std::printf("%-10s %-16s %9s %13s %10s %12s %14s\n", "controller", "mode", "lambda_ac", "delivered_MB",
              "delay_ms", "queue_load_%", "tcp_discard_MB");
  for (double lambda : a.lambda_ac) {
    EnvConfig env = config.env;
    env.mode = mode;
    env.lambda_ac = lambda;
    const std::vector<EpisodeMetrics> runs = train::evaluate(scenarios, env, *controller, a.episodes, config.seed);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const train::MetricRow r = train::row_of(runs[i]);
      csv << label << ',' << a.mode << ',' << lambda << ',' << i << ',' << r.delivered_mb << ',' << r.delay_ms << ','
          << r.queue_load_pct << ',' << r.tcp_discard_mb << ',' << r.dropped_mb << '\n';
      jsonl << nlohmann::ordered_json{{"controller", label},         {"mode", a.mode},
                                      {"lambda_ac", lambda},         {"episode", i},
                                      {"delivered_mb", r.delivered_mb}, {"delay_ms", r.delay_ms},
                                      {"queue_load_pct", r.queue_load_pct},
                                      {"tcp_discard_mb", r.tcp_discard_mb}, {"dropped_mb", r.dropped_mb}}
                   .dump()
            << '\n';
    }
    const train::MetricRow m = train::mean_row(runs);
    csv << label << ',' << a.mode << ',' << lambda << ",mean," << m.delivered_mb << ',' << m.delay_ms << ','
        << m.queue_load_pct << ',' << m.tcp_discard_mb << ',' << m.dropped_mb << '\n';
    summary.push_back({{"controller", label},
                       {"mode", a.mode},
                       {"lambda_ac", lambda},
                       {"episodes", a.episodes},
                       {"delivered_mb", m.delivered_mb},
                       {"delay_ms", m.delay_ms},
                       {"queue_load_pct", m.queue_load_pct},
                       {"tcp_discard_mb", m.tcp_discard_mb},
                       {"dropped_mb", m.dropped_mb}});
    std::printf("%-10s %-16s %9.3f %13.3f %10.3f %12.3f %14.4f\n", label.c_str(), a.mode.c_str(), lambda,
                m.delivered_mb, m.delay_ms, m.queue_load_pct, m.tcp_discard_mb);
  }
  std::ofstream(fs::path(a.output) / "summary.json") << summary.dump(2) << '\n';
  std::ofstream(fs::path(a.output) / "config.json") << config_to_json(config);
  return 0;
}

int cmd_payload(const std::string& topo_arg, std::uint64_t seed, const std::string& mode, std::int64_t extra) {
  const auto topo = topology_arg(topo_arg, seed);
  const std::int64_t n = topo->num_nodes();
  const bool full = mode == "full" || mode == "both";
  const bool compact = mode == "compact" || mode == "both";
  if (!full && !compact) throw ConfigError("--mode must be full, compact or both");
  std::printf("%6s %10s", "node", "neighbors");
  if (full) std::printf(" %10s", "full_B");
  if (compact) std::printf(" %10s", "compact_B");
  std::printf("  note\n");
  std::int64_t total_full = 0, total_compact = 0;
  for (NodeId v = 0; v < n; ++v) {
    const auto deg = static_cast<std::int64_t>(topo->neighbors(v).size());
    std::printf("%6d %10lld", v, static_cast<long long>(deg));
    std::int64_t smallest = 0;
    if (full) {
      const std::int64_t p = payload_size(PayloadMode::Full, n, deg, extra);
      total_full += p;
      std::printf(" %10lld", static_cast<long long>(p));
      smallest = p;
    }
    if (compact) {
      const std::int64_t p = payload_size(PayloadMode::Compact, n, deg, extra);
      total_compact += p;
      std::printf(" %10lld", static_cast<long long>(p));
      smallest = p;
    }
    std::printf("  %s\n", smallest <= kMaxPacketPayload ? "fits in one packet" : "needs fragmentation");
  }
  auto totals = [&](const char* name, std::int64_t sum) {
    std::printf("%s: per-snapshot sum %lld B; central observer %lld B; local observers %lld B\n", name,
                static_cast<long long>(sum), static_cast<long long>(sum), static_cast<long long>((n - 1) * sum));
  };
  if (full) totals("full", total_full);
  if (compact) totals("compact", total_compact);
  return 0;
}

int cmd_verify(const std::string& config_path, const std::string& workdir) {
  ExperimentConfig config = load_config(config_path);
  std::string final_bytes[2], metrics[2];
  for (int run = 0; run < 2; ++run) {
    config.output_dir = (fs::path(workdir) / ("run" + std::to_string(run))).string();
    fs::remove_all(config.output_dir);
    train::Trainer trainer(config);
    trainer.run();
    final_bytes[run] = read_file(fs::path(config.output_dir) / "checkpoints" / "final.ckpt");
    metrics[run] = read_file(fs::path(config.output_dir) / "metrics.csv");
  }
  const bool same_ckpt = !final_bytes[0].empty() && final_bytes[0] == final_bytes[1];
  const bool same_metrics = metrics[0] == metrics[1];
  std::printf("checkpoints %s (%zu bytes)\n", same_ckpt ? "identical" : "DIFFER", final_bytes[0].size());
  std::printf("metrics %s\n", same_metrics ? "identical" : "DIFFER");
  return same_ckpt && same_metrics ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Routing policies trained on a packet-level network simulator"};
  app.require_subcommand(1);

  std::string config_path, output, resume;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Run the IL + PPO/MAPPO training protocol");
  train_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--output", output, "Output directory (overrides the config)");
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_flag("--quiet", quiet, "No per-iteration progress");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a shortest-path baseline");
  eval_cmd->add_option("--config", eval.config, "Experiment config; supplies preset, seed and env settings")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--preset", eval.preset, "Topology preset when no config is given");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Trained policy")->check(CLI::ExistingFile);
  eval_cmd->add_option("--baseline", eval.baseline, "OSPF, EIGRP or RIP");
  eval_cmd->add_option("--mode", eval.mode, "Deployment mode")->capture_default_str();
  eval_cmd->add_option("--lambda-ac", eval.lambda_ac, "Inference delay scaling(s)")->capture_default_str();
  eval_cmd->add_option("--episodes", eval.episodes, "Held-out episodes")->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "Seed when no config is given")->capture_default_str();
  eval_cmd->add_option("--intensity", eval.intensity, "Traffic intensity; 0 calibrates")->capture_default_str();
  eval_cmd->add_flag("--wall-clock-kappa", eval.wall_clock, "Measure inference time instead of the fixed value");
  eval_cmd->add_option("--output", eval.output, "Output directory")->capture_default_str();

  std::string topo_preset = "mini5", topo_out;
  std::uint64_t topo_seed = 1;
  auto* topo_cmd = app.add_subcommand("gen-topo", "Generate a topology file");
  topo_cmd->add_option("--preset", topo_preset, "mini5 or nx-XS|S|M|L")->capture_default_str();
  topo_cmd->add_option("--seed", topo_seed, "Generator seed")->capture_default_str();
  topo_cmd->add_option("--out", topo_out, "Output JSON file (stdout if omitted)");

  std::string traffic_topo = "mini5", traffic_out;
  std::uint64_t traffic_seed = 1;
  double traffic_intensity = 0.0, horizon_ms = 2000.0;
  auto* traffic_cmd = app.add_subcommand("gen-traffic", "Generate a flow schedule");
  traffic_cmd->add_option("--topology", traffic_topo, "Preset or topology file")->capture_default_str();
  traffic_cmd->add_option("--seed", traffic_seed, "Traffic seed (also seeds nx topologies)")->capture_default_str();
  traffic_cmd->add_option("--intensity", traffic_intensity, "Intensity; 0 calibrates")->capture_default_str();
  traffic_cmd->add_option("--horizon-ms", horizon_ms, "Episode length")->capture_default_str();
  traffic_cmd->add_option("--out", traffic_out, "Output JSON file (stdout if omitted)");

  std::string payload_topo = "mini5", payload_mode = "both";
  std::uint64_t payload_seed = 1;
  std::int64_t payload_extra = 0;
  auto* payload_cmd = app.add_subcommand("payload", "Per-node telemetry payload sizes");
  payload_cmd->add_option("--topology", payload_topo, "Preset or topology file")->capture_default_str();
  payload_cmd->add_option("--seed", payload_seed, "Seed for nx presets")->capture_default_str();
  payload_cmd->add_option("--mode", payload_mode, "full, compact or both")->capture_default_str();
  payload_cmd->add_option("--extra", payload_extra, "Count N of extra 232-byte entries in full mode")->capture_default_str();

  std::string verify_config, verify_dir = "verify_out";
  auto* verify_cmd = app.add_subcommand("verify-determinism", "Train twice and compare outputs byte for byte");
  verify_cmd->add_option("--config", verify_config, "Experiment config")->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--workdir", verify_dir, "Scratch directory")->capture_default_str();

  bool show_isa = false;
  app.add_flag("--show-isa", show_isa, "Print the selected dense-kernel ISA");

  CLI11_PARSE(app, argc, argv);
  if (show_isa) std::fprintf(stderr, "kernels: %s\n", nn::kernels::to_string(nn::kernels::active_isa()));
  try {
    if (*train_cmd) return cmd_train(config_path, output, resume, quiet);
    if (*eval_cmd) return cmd_eval(eval);
    if (*topo_cmd) {
      const auto topo = topology_arg(topo_preset, topo_seed);
      if (topo_out.empty()) std::cout << topology_to_json(*topo);
      else save_topology(*topo, topo_out);
      return 0;
    }
    if (*traffic_cmd) {
      const auto topo = topology_arg(traffic_topo, traffic_seed);
      EnvConfig env;
      env.horizon = static_cast<int>(horizon_ms / env.tau_ms);
      const double intensity =
          traffic_intensity > 0 ? traffic_intensity : calibrate_intensity(*topo, traffic_seed, env);
      const FlowSchedule s = generate_schedule(*topo, traffic_seed, intensity, horizon_ms);
      if (traffic_out.empty()) std::cout << schedule_to_json(s);
      else save_schedule(s, traffic_out);
      return 0;
    }
    if (*payload_cmd) return cmd_payload(payload_topo, payload_seed, payload_mode, payload_extra);
    if (*verify_cmd) return cmd_verify(verify_config, verify_dir);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
