#include "telroute/policy/distribution.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace telroute::policy {

using nn::Var;

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
const double kHalfLog2PiE = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
}  // namespace

Var lognormal_log_density(Var mu, Var sigma, Var log_w) {
  const Var log_sigma = nn::log(sigma);
  const Var z = nn::mul(nn::sub(log_w, mu), nn::exp(nn::neg(log_sigma)));
  const Var r = nn::add(nn::add(log_w, log_sigma), nn::scale(nn::square(z), 0.5));
  return nn::add_scalar(nn::neg(r), -kHalfLog2Pi);
}

Var lognormal_entropy(Var mu, Var sigma) {
  return nn::add_scalar(nn::add(mu, nn::log(sigma)), kHalfLog2PiE);
}

Var lognormal_kl(Var mu_old, Var sigma_old, Var mu_new, Var sigma_new) {
  const Var log_new = nn::log(sigma_new);
  const Var inv_var_new = nn::exp(nn::scale(log_new, -2.0));
  const Var num = nn::add(nn::square(sigma_old), nn::square(nn::sub(mu_old, mu_new)));
  const Var quad = nn::scale(nn::mul(num, inv_var_new), 0.5);
  return nn::add_scalar(nn::add(nn::sub(log_new, nn::log(sigma_old)), quad), -0.5);
}

double lognormal_log_density(double mu, double sigma, double log_w) {
  const double z = (log_w - mu) / sigma;
  return -log_w - std::log(sigma) - kHalfLog2Pi - 0.5 * z * z;
}

double lognormal_entropy(double mu, double sigma) { return mu + std::log(sigma) + kHalfLog2PiE; }

double lognormal_kl(double mu_old, double sigma_old, double mu_new, double sigma_new) {
  const double d = mu_old - mu_new;
  return std::log(sigma_new / sigma_old) + (sigma_old * sigma_old + d * d) / (2.0 * sigma_new * sigma_new) - 0.5;
}

Sample act(std::span<const double> mu, std::span<const double> sigma, bool explore, Rng& rng, bool log_space) {
  if (mu.size() != sigma.size()) throw std::invalid_argument("act: mu and sigma sizes differ");
  Sample s;
  s.weights.resize(mu.size());
  s.log_weights.resize(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw std::invalid_argument("act: sigma must be positive");
    if (!log_space) {
      const double w = mu[i] > 30.0 ? mu[i] : std::log1p(std::exp(mu[i]));
      s.weights[i] = w;
      s.log_weights[i] = std::log(w);
      continue;
    }
    const double lw = explore ? mu[i] + sigma[i] * rng.normal() : mu[i];
    s.log_weights[i] = lw;
    s.weights[i] = std::exp(lw);
    s.log_prob += lognormal_log_density(mu[i], sigma[i], lw);
  }
  return s;
}

}  // namespace telroute::policy
