#pragma once

#include <span>
#include <vector>

#include "telroute/nn/autodiff.hpp"
#include "telroute/rng.hpp"

namespace telroute::policy {

// Per-edge log-normal link weights: log w ~ Normal(mu, sigma).

// Per-edge log-density of w given its log, as a column.
nn::Var lognormal_log_density(nn::Var mu, nn::Var sigma, nn::Var log_w);
// Per-edge differential entropy mu + 0.5 log(2 pi e sigma^2).
nn::Var lognormal_entropy(nn::Var mu, nn::Var sigma);
// Per-edge KL(old || new) of the log-weight normals.
nn::Var lognormal_kl(nn::Var mu_old, nn::Var sigma_old, nn::Var mu_new, nn::Var sigma_new);

double lognormal_log_density(double mu, double sigma, double log_w);
double lognormal_entropy(double mu, double sigma);
double lognormal_kl(double mu_old, double sigma_old, double mu_new, double sigma_new);

struct Sample {
  std::vector<double> weights;
  std::vector<double> log_weights;
  double log_prob = 0.0;  // summed over edges
};

// explore=false returns the mode in log space, exp(mu) (or softplus(mu) when
// log_space is off), and ignores rng.
Sample act(std::span<const double> mu, std::span<const double> sigma, bool explore, Rng& rng,
           bool log_space = true);

}  // namespace telroute::policy
