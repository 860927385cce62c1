#pragma once

#include <map>
#include <string>
#include <vector>

#include "telroute/nn/matrix.hpp"
#include "telroute/policy/graph_batch.hpp"
#include "telroute/telemetry.hpp"

namespace telroute::train {

// Running per-column mean and variance (parallel Welford merge).
struct FeatureStats {
  double count = 0.0;
  std::vector<double> mean;
  std::vector<double> m2;

  explicit FeatureStats(int width = 0) : mean(static_cast<std::size_t>(width), 0.0), m2(static_cast<std::size_t>(width), 0.0) {}
  void add(const double* row);
  void merge(const FeatureStats& other);
  double variance(std::size_t col) const { return count > 0 ? m2[col] / count : 1.0; }
};

// Observation normalizer. Statistics used for normalization are frozen;
// observations seen during rollouts accumulate separately and are folded in
// by commit(), so a rollout and the update that follows see the same
// transformation.
class RunningNormalizer {
 public:
  explicit RunningNormalizer(double clip = 10.0);

  void observe(const ObservationGraph& graph);
  void commit();
  // In place: (x - mean) / sqrt(var + 1e-4), clipped to [-clip, clip].
  void apply(policy::GraphBatch& batch) const;

  const FeatureStats& node_stats() const { return node_; }
  const FeatureStats& edge_stats() const { return edge_; }
  const FeatureStats& global_stats() const { return global_; }
  double clip() const { return clip_; }

  void export_state(const std::string& prefix, std::map<std::string, nn::Matrix>& out) const;
  void import_state(const std::string& prefix, const std::map<std::string, nn::Matrix>& in);

 private:
  double clip_;
  FeatureStats node_, edge_, global_;
  FeatureStats pending_node_, pending_edge_, pending_global_;
};

}  // namespace telroute::train
