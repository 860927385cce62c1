#include "telroute/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "telroute/rng.hpp"

namespace telroute {

std::int64_t Flow::offered_bytes() const {
  if (protocol == Protocol::TCP) return size_bytes;
  const double bytes = bitrate_mbps * 1e6 / 8.0 * duration_ms / 1000.0;
  return static_cast<std::int64_t>(std::llround(bytes));
}

FlowSchedule generate_schedule(const Topology& topology, std::uint64_t seed,
                               double intensity, double horizon_ms,
                               const TrafficParams& params) {
  if (!(intensity > 0.0)) throw TrafficError("intensity must be positive");
  if (!(horizon_ms > 0.0)) throw TrafficError("horizon must be positive");
  const int n = topology.num_nodes();
  Rng rng = Rng::derive({0x7472, seed});

  FlowSchedule schedule;
  schedule.seed = seed;
  schedule.intensity = intensity;
  schedule.horizon_ms = horizon_ms;

  // Unit-rate arrival gaps are drawn independently of the intensity, which
  // only rescales time.
  const double mean_gap_ms = 1000.0 / (params.arrivals_per_node_per_s * n);
  const double mu_log = std::log(params.tcp_median_bytes);
  double t = 0.0;
  for (int id = 0;; ++id) {
    t += rng.exponential(mean_gap_ms) / intensity;
    Flow f;
    f.id = id;
    f.src = static_cast<NodeId>(rng.below(static_cast<std::uint64_t>(n)));
    f.dst = static_cast<NodeId>(rng.below(static_cast<std::uint64_t>(n - 1)));
    if (f.dst >= f.src) ++f.dst;
    f.protocol = rng.bernoulli(params.tcp_fraction) ? Protocol::TCP : Protocol::UDP;
    if (f.protocol == Protocol::TCP) {
      const double bytes = std::exp(mu_log + params.tcp_sigma_log * rng.normal());
      f.size_bytes = static_cast<std::int64_t>(
          std::llround(std::clamp(bytes, params.tcp_min_bytes, params.tcp_max_bytes)));
    } else {
      f.bitrate_mbps = std::round(rng.uniform(params.udp_min_mbps, params.udp_max_mbps) * 100.0) / 100.0;
      f.duration_ms = std::round(rng.uniform(params.udp_min_ms, params.udp_max_ms));
    }
    // Whole microseconds so replays through the simulator clock are exact.
    f.start_ms = std::floor(t * 1000.0) / 1000.0;
    if (f.start_ms >= horizon_ms) break;
    schedule.flows.push_back(f);
  }
  return schedule;
}

const std::vector<double>& calibration_grid() {
  static const std::vector<double> grid{0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
  return grid;
}

double calibrate_intensity(const DropProbe& probe, double base) {
  for (double m : calibration_grid()) {
    const double intensity = m * base;
    if (probe(intensity) > 0) return intensity;
  }
  std::ostringstream msg;
  msg << "no intensity in [" << calibration_grid().front() * base << ", "
      << calibration_grid().back() * base << "] produced drops";
  throw TrafficError(msg.str());
}

std::string schedule_to_json(const FlowSchedule& schedule) {
  nlohmann::ordered_json doc;
  doc["format"] = "telroute-schedule";
  doc["version"] = 1;
  doc["seed"] = schedule.seed;
  doc["intensity"] = schedule.intensity;
  doc["horizon_ms"] = schedule.horizon_ms;
  auto& arr = doc["flows"] = nlohmann::ordered_json::array();
  for (const Flow& f : schedule.flows) {
    nlohmann::ordered_json j;
    j["id"] = f.id;
    j["src"] = f.src;
    j["dst"] = f.dst;
    j["start_ms"] = f.start_ms;
    if (f.protocol == Protocol::TCP) {
      j["protocol"] = "tcp";
      j["size_bytes"] = f.size_bytes;
    } else {
      j["protocol"] = "udp";
      j["bitrate_mbps"] = f.bitrate_mbps;
      j["duration_ms"] = f.duration_ms;
    }
    arr.push_back(std::move(j));
  }
  return doc.dump(1) + "\n";
}

FlowSchedule schedule_from_json(const std::string& text) {
  FlowSchedule s;
  try {
    auto doc = nlohmann::json::parse(text);
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.intensity = doc.at("intensity").get<double>();
    s.horizon_ms = doc.at("horizon_ms").get<double>();
    for (const auto& j : doc.at("flows")) {
      Flow f;
      f.id = j.at("id").get<int>();
      f.src = j.at("src").get<int>();
      f.dst = j.at("dst").get<int>();
      f.start_ms = j.at("start_ms").get<double>();
      const auto proto = j.at("protocol").get<std::string>();
      if (proto == "tcp") {
        f.protocol = Protocol::TCP;
        f.size_bytes = j.at("size_bytes").get<std::int64_t>();
      } else if (proto == "udp") {
        f.protocol = Protocol::UDP;
        f.bitrate_mbps = j.at("bitrate_mbps").get<double>();
        f.duration_ms = j.at("duration_ms").get<double>();
      } else {
        throw TrafficError("flow " + std::to_string(f.id) + ": unknown protocol '" + proto + "'");
      }
      if (f.src == f.dst) throw TrafficError("flow " + std::to_string(f.id) + ": src == dst");
      s.flows.push_back(f);
    }
  } catch (const nlohmann::json::exception& e) {
    throw TrafficError(std::string("schedule parse error: ") + e.what());
  }
  std::stable_sort(s.flows.begin(), s.flows.end(),
                   [](const Flow& a, const Flow& b) { return a.start_ms < b.start_ms; });
  return s;
}

void save_schedule(const FlowSchedule& schedule, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TrafficError("cannot write " + path.string());
  out << schedule_to_json(schedule);
}

FlowSchedule load_schedule(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TrafficError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return schedule_from_json(buffer.str());
}

}  // namespace telroute
