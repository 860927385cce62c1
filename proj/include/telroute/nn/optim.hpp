#pragma once

#include <map>
#include <string>
#include <vector>

#include "telroute/nn/layers.hpp"

namespace telroute::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);

  // Applies one update from the accumulated gradients.
  void step();
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  // Moments and step count, keyed by "<prefix><param>.m" / ".v" / "t".
  void export_state(const std::string& prefix, std::map<std::string, Matrix>& out) const;
  void import_state(const std::string& prefix, const std::map<std::string, Matrix>& in);

 private:
  ParameterSet* params_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

double grad_norm(const ParameterSet& params);
// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

}  // namespace telroute::nn
