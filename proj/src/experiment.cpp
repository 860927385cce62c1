#include "telroute/experiment.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace telroute {

using nlohmann::json;

namespace {

// Rejects keys outside `allowed` so typos do not silently fall back to defaults.
void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (preset.empty()) throw ConfigError("preset must not be empty");
  if (is_nx()) {
    try {
      parse_size_class(preset.substr(3));
    } catch (const std::exception& e) {
      throw ConfigError("unknown preset '" + preset + "': " + e.what());
    }
  }
  else if (preset != "mini5" && !std::filesystem::exists(preset)) {
    throw ConfigError("unknown preset '" + preset + "' (expected mini5, nx-XS|S|M|L or an existing topology file)");
  }
  env.validate();
  ppo.validate();
  if (il_iterations < 0 || rl_iterations < 0) throw ConfigError("iteration counts must be >= 0");
  if (episodes_per_iteration < 1) throw ConfigError("episodes_per_iteration must be >= 1");
  if (is_nx() && (topologies_per_iteration < 1 || episodes_per_iteration % topologies_per_iteration != 0)) {
    throw ConfigError("episodes_per_iteration must be a multiple of topologies_per_iteration");
  }
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (!(il.lr > 0) || il.epochs < 1 || il.minibatches < 1) throw ConfigError("invalid imitation settings");
  if (acting.kappa_ms < 0) throw ConfigError("acting.kappa_ms must be >= 0");
}

ExperimentConfig config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  check_keys(doc, "config",
             {"preset", "seed", "intensity", "env", "mpn", "ppo", "il", "acting", "phases", "eval", "output_dir"});
  read(doc, "preset", c.preset, "config");
  read(doc, "seed", c.seed, "config");
  read(doc, "intensity", c.intensity, "config");
  read(doc, "output_dir", c.output_dir, "config");
  if (doc.contains("env")) {
    const json& e = doc["env"];
    check_keys(e, "env", {"horizon", "tau_ms", "mode", "lambda_ac", "lambda_r", "decay", "decay_hops"});
    read(e, "horizon", c.env.horizon, "env");
    read(e, "tau_ms", c.env.tau_ms, "env");
    read(e, "lambda_ac", c.env.lambda_ac, "env");
    read(e, "lambda_r", c.env.lambda_r, "env");
    read(e, "decay", c.env.decay, "env");
    read(e, "decay_hops", c.env.decay_hops, "env");
    if (e.contains("mode")) c.env.mode = parse_mode(e["mode"].get<std::string>());
  }
  if (doc.contains("mpn")) {
    const json& m = doc["mpn"];
    check_keys(m, "mpn", {"steps", "width", "hidden", "hidden_layers", "log_space", "feed_previous_weights",
                          "aggregate_incoming"});
    read(m, "steps", c.mpn.steps, "mpn");
    read(m, "width", c.mpn.width, "mpn");
    read(m, "hidden", c.mpn.hidden, "mpn");
    read(m, "hidden_layers", c.mpn.hidden_layers, "mpn");
    read(m, "log_space", c.mpn.log_space, "mpn");
    read(m, "feed_previous_weights", c.mpn.feed_previous_weights, "mpn");
    read(m, "aggregate_incoming", c.mpn.aggregate_incoming, "mpn");
  }
  if (doc.contains("ppo")) {
    const json& p = doc["ppo"];
    check_keys(p, "ppo", {"lr_policy", "lr_value", "lr_temperature", "gamma", "clip_policy", "clip_value",
                          "minibatches", "epochs", "grad_clip", "gae_lambda", "kl_limit", "clip_fraction_limit",
                          "target_entropy", "initial_alpha"});
    read(p, "lr_policy", c.ppo.lr_policy, "ppo");
    read(p, "lr_value", c.ppo.lr_value, "ppo");
    read(p, "lr_temperature", c.ppo.lr_temperature, "ppo");
    read(p, "gamma", c.ppo.gamma, "ppo");
    read(p, "clip_policy", c.ppo.clip_policy, "ppo");
    read(p, "clip_value", c.ppo.clip_value, "ppo");
    read(p, "minibatches", c.ppo.minibatches, "ppo");
    read(p, "epochs", c.ppo.epochs, "ppo");
    read(p, "grad_clip", c.ppo.grad_clip, "ppo");
    read(p, "gae_lambda", c.ppo.gae_lambda, "ppo");
    read(p, "kl_limit", c.ppo.kl_limit, "ppo");
    read(p, "clip_fraction_limit", c.ppo.clip_fraction_limit, "ppo");
    read(p, "target_entropy", c.ppo.target_entropy, "ppo");
    read(p, "initial_alpha", c.ppo.initial_alpha, "ppo");
  }
  if (doc.contains("il")) {
    const json& i = doc["il"];
    check_keys(i, "il", {"lr", "epochs", "minibatches", "grad_clip", "expert", "mode"});
    read(i, "lr", c.il.lr, "il");
    read(i, "epochs", c.il.epochs, "il");
    read(i, "minibatches", c.il.minibatches, "il");
    read(i, "grad_clip", c.il.grad_clip, "il");
    if (i.contains("expert")) c.expert = policy::parse_metric(i["expert"].get<std::string>());
    if (i.contains("mode")) c.il_mode = parse_mode(i["mode"].get<std::string>());
  }
  if (doc.contains("acting")) {
    const json& a = doc["acting"];
    check_keys(a, "acting", {"synthetic_kappa", "kappa_ms"});
    read(a, "synthetic_kappa", c.acting.synthetic_kappa, "acting");
    read(a, "kappa_ms", c.acting.kappa_ms, "acting");
  }
  if (doc.contains("phases")) {
    const json& p = doc["phases"];
    check_keys(p, "phases", {"il_iterations", "rl_iterations", "bc", "episodes_per_iteration",
                             "topologies_per_iteration", "bc_scenario_factor"});
    read(p, "il_iterations", c.il_iterations, "phases");
    read(p, "rl_iterations", c.rl_iterations, "phases");
    read(p, "bc", c.use_bc, "phases");
    read(p, "episodes_per_iteration", c.episodes_per_iteration, "phases");
    read(p, "topologies_per_iteration", c.topologies_per_iteration, "phases");
    read(p, "bc_scenario_factor", c.bc_scenario_factor, "phases");
  }
  if (doc.contains("eval")) {
    const json& e = doc["eval"];
    check_keys(e, "eval", {"episodes"});
    read(e, "episodes", c.eval_episodes, "eval");
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json doc;
  doc["preset"] = c.preset;
  doc["seed"] = c.seed;
  doc["intensity"] = c.intensity;
  doc["output_dir"] = c.output_dir;
  doc["env"] = {{"horizon", c.env.horizon},     {"tau_ms", c.env.tau_ms},     {"mode", to_string(c.env.mode)},
                {"lambda_ac", c.env.lambda_ac}, {"lambda_r", c.env.lambda_r}, {"decay", c.env.decay},
                {"decay_hops", c.env.decay_hops}};
  doc["mpn"] = {{"steps", c.mpn.steps},
                {"width", c.mpn.width},
                {"hidden", c.mpn.hidden},
                {"hidden_layers", c.mpn.hidden_layers},
                {"log_space", c.mpn.log_space},
                {"feed_previous_weights", c.mpn.feed_previous_weights},
                {"aggregate_incoming", c.mpn.aggregate_incoming}};
  doc["ppo"] = {{"lr_policy", c.ppo.lr_policy},
                {"lr_value", c.ppo.lr_value},
                {"lr_temperature", c.ppo.lr_temperature},
                {"gamma", c.ppo.gamma},
                {"clip_policy", c.ppo.clip_policy},
                {"clip_value", c.ppo.clip_value},
                {"minibatches", c.ppo.minibatches},
                {"epochs", c.ppo.epochs},
                {"grad_clip", c.ppo.grad_clip},
                {"gae_lambda", c.ppo.gae_lambda},
                {"kl_limit", c.ppo.kl_limit},
                {"clip_fraction_limit", c.ppo.clip_fraction_limit},
                {"target_entropy", c.ppo.target_entropy},
                {"initial_alpha", c.ppo.initial_alpha}};
  nlohmann::ordered_json il = {{"lr", c.il.lr},
                               {"epochs", c.il.epochs},
                               {"minibatches", c.il.minibatches},
                               {"grad_clip", c.il.grad_clip},
                               {"expert", policy::to_string(c.expert)}};
  if (c.il_mode) il["mode"] = to_string(*c.il_mode);
  doc["il"] = il;
  doc["acting"] = {{"synthetic_kappa", c.acting.synthetic_kappa}, {"kappa_ms", c.acting.kappa_ms}};
  doc["phases"] = {{"il_iterations", c.il_iterations},
                   {"rl_iterations", c.rl_iterations},
                   {"bc", c.use_bc},
                   {"episodes_per_iteration", c.episodes_per_iteration},
                   {"topologies_per_iteration", c.topologies_per_iteration},
                   {"bc_scenario_factor", c.bc_scenario_factor}};
  doc["eval"] = {{"episodes", c.eval_episodes}};
  return doc.dump(2) + "\n";
}

std::shared_ptr<const Topology> preset_topology(const ExperimentConfig& config) {
  if (config.preset == "mini5") return std::make_shared<const Topology>(build_mini5());
  if (config.is_nx()) throw ConfigError("nx presets have no fixed topology");
  return std::make_shared<const Topology>(load_topology(config.preset));
}

}  // namespace telroute
