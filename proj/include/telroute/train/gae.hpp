#pragma once

#include <span>
#include <vector>

namespace telroute::train {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

// One trajectory. `last_value` bootstraps the state after the final step
// (pass 0 for a true terminal state).
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, double last_value,
                      double gamma, double lambda);

// Shifts and scales to mean 0 and (population) standard deviation 1. A
// constant input becomes all zeros.
void normalize_advantages(std::span<double> advantages);

}  // namespace telroute::train
