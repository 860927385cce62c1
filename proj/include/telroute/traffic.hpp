#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "telroute/topology.hpp"

namespace telroute {

enum class Protocol { TCP, UDP };

struct Flow {
  int id = 0;
  NodeId src = 0;
  NodeId dst = 0;
  Protocol protocol = Protocol::TCP;
  std::int64_t size_bytes = 0;  // TCP only
  double bitrate_mbps = 0.0;    // UDP only
  double duration_ms = 0.0;     // UDP only
  double start_ms = 0.0;

  // Payload bytes the source intends to transfer.
  std::int64_t offered_bytes() const;

  bool operator==(const Flow&) const = default;
};

struct FlowSchedule {
  std::vector<Flow> flows;  // sorted by start_ms
  std::uint64_t seed = 0;
  double intensity = 1.0;
  double horizon_ms = 0.0;

  bool operator==(const FlowSchedule&) const = default;
};

struct TrafficParams {
  // Flow arrivals per second per router at intensity 1.
  double arrivals_per_node_per_s = 25.0;
  double tcp_fraction = 0.8;
  double tcp_median_bytes = 100e3;
  double tcp_sigma_log = 1.0;
  double tcp_min_bytes = 1e3;
  double tcp_max_bytes = 20e6;
  double udp_min_mbps = 1.0;
  double udp_max_mbps = 20.0;
  double udp_min_ms = 50.0;
  double udp_max_ms = 500.0;
};

class TrafficError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

FlowSchedule generate_schedule(const Topology& topology, std::uint64_t seed,
                               double intensity, double horizon_ms,
                               const TrafficParams& params = {});

// Multipliers searched by calibrate_intensity, in order.
const std::vector<double>& calibration_grid();

// Dropped bytes of one full episode for a given intensity. Supplied by the
// caller so this module does not depend on the simulator.
using DropProbe = std::function<std::int64_t(double intensity)>;

// Smallest grid intensity whose probe reports dropped bytes > 0.
double calibrate_intensity(const DropProbe& probe, double base = 1.0);

std::string schedule_to_json(const FlowSchedule& schedule);
FlowSchedule schedule_from_json(const std::string& text);
void save_schedule(const FlowSchedule& schedule, const std::filesystem::path& path);
FlowSchedule load_schedule(const std::filesystem::path& path);

}  // namespace telroute
