#include "telroute/train/normalizer.hpp"

#include <algorithm>
#include <cmath>

namespace telroute::train {

void FeatureStats::add(const double* row) {
  count += 1.0;
  for (std::size_t c = 0; c < mean.size(); ++c) {
    const double d = row[c] - mean[c];
    mean[c] += d / count;
    m2[c] += d * (row[c] - mean[c]);
  }
}

void FeatureStats::merge(const FeatureStats& other) {
  if (other.count == 0.0) return;
  if (count == 0.0) {
    *this = other;
    return;
  }
  const double n = count + other.count;
  for (std::size_t c = 0; c < mean.size(); ++c) {
    const double d = other.mean[c] - mean[c];
    mean[c] += d * other.count / n;
    m2[c] += other.m2[c] + d * d * count * other.count / n;
  }
  count = n;
}

RunningNormalizer::RunningNormalizer(double clip)
    : clip_(clip),
      node_(features::kNode),
      edge_(features::kEdge),
      global_(features::kGlobal),
      pending_node_(features::kNode),
      pending_edge_(features::kEdge),
      pending_global_(features::kGlobal) {}

void RunningNormalizer::observe(const ObservationGraph& g) {
  for (int v = 0; v < g.num_nodes(); ++v) pending_node_.add(&g.node_features[static_cast<std::size_t>(v) * features::kNode]);
  for (int e = 0; e < g.num_edges(); ++e) pending_edge_.add(&g.edge_features[static_cast<std::size_t>(e) * features::kEdge]);
  pending_global_.add(g.global_features.data());
}

void RunningNormalizer::commit() {
  node_.merge(pending_node_);
  edge_.merge(pending_edge_);
  global_.merge(pending_global_);
  pending_node_ = FeatureStats(features::kNode);
  pending_edge_ = FeatureStats(features::kEdge);
  pending_global_ = FeatureStats(features::kGlobal);
}

namespace {

// Keeps near-constant columns (for example the previous weights of a fresh
// policy) from being blown up to the clip bound.
constexpr double kVarianceFloor = 1e-4;

void normalize(nn::Matrix& m, const FeatureStats& s, double clip) {
  if (s.count == 0.0) return;
  std::vector<double> inv(s.mean.size());
  for (std::size_t c = 0; c < inv.size(); ++c) inv[c] = 1.0 / std::sqrt(s.variance(c) + kVarianceFloor);
  for (int r = 0; r < m.rows; ++r) {
    double* row = m.row(r);
    for (int c = 0; c < m.cols; ++c) {
      row[c] = std::clamp((row[c] - s.mean[static_cast<std::size_t>(c)]) * inv[static_cast<std::size_t>(c)], -clip, clip);
    }
  }
}

void put(const std::string& key, const FeatureStats& s, std::map<std::string, nn::Matrix>& out) {
  out[key + ".count"] = nn::Matrix::scalar(s.count);
  out[key + ".mean"] = nn::Matrix(1, static_cast<int>(s.mean.size()), s.mean);
  out[key + ".m2"] = nn::Matrix(1, static_cast<int>(s.m2.size()), s.m2);
}

void get(const std::string& key, FeatureStats& s, const std::map<std::string, nn::Matrix>& in) {
  auto fetch = [&](const std::string& k) -> const nn::Matrix& {
    auto it = in.find(k);
    if (it == in.end()) throw std::invalid_argument("missing normalizer state: " + k);
    return it->second;
  };
  const nn::Matrix& mean = fetch(key + ".mean");
  const nn::Matrix& m2 = fetch(key + ".m2");
  if (mean.size() != s.mean.size() || m2.size() != s.m2.size()) {
    throw std::invalid_argument("normalizer width mismatch for " + key);
  }
  s.count = fetch(key + ".count").item();
  s.mean = mean.data;
  s.m2 = m2.data;
}

}  // namespace

void RunningNormalizer::apply(policy::GraphBatch& batch) const {
  normalize(batch.nodes, node_, clip_);
  normalize(batch.edges, edge_, clip_);
  normalize(batch.globals, global_, clip_);
}

void RunningNormalizer::export_state(const std::string& prefix, std::map<std::string, nn::Matrix>& out) const {
  put(prefix + "node", node_, out);
  put(prefix + "edge", edge_, out);
  put(prefix + "global", global_, out);
}

void RunningNormalizer::import_state(const std::string& prefix, const std::map<std::string, nn::Matrix>& in) {
  get(prefix + "node", node_, in);
  get(prefix + "edge", edge_, in);
  get(prefix + "global", global_, in);
}

}  // namespace telroute::train
