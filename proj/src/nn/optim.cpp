#include "telroute/nn/optim.hpp"

#include <cmath>

#include "telroute/nn/kernels.hpp"

namespace telroute::nn {

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(&params), config_(config) {
  for (const auto& p : params.all()) {
    m_.emplace_back(p.value.rows, p.value.cols);
    v_.emplace_back(p.value.rows, p.value.cols);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& p : params_->all()) {
    Matrix& m = m_[k];
    Matrix& v = v_[k];
    ++k;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      m.data[i] = b1 * m.data[i] + (1.0 - b1) * g;
      v.data[i] = b2 * v.data[i] + (1.0 - b2) * g * g;
      const double mhat = m.data[i] / c1;
      const double vhat = v.data[i] / c2;
      p.value.data[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void Adam::export_state(const std::string& prefix, std::map<std::string, Matrix>& out) const {
  std::size_t k = 0;
  for (const auto& p : params_->all()) {
    out[prefix + p.name + ".m"] = m_[k];
    out[prefix + p.name + ".v"] = v_[k];
    ++k;
  }
  out[prefix + "t"] = Matrix::scalar(static_cast<double>(t_));
}

void Adam::import_state(const std::string& prefix, const std::map<std::string, Matrix>& in) {
  auto fetch = [&](const std::string& key) -> const Matrix& {
    auto it = in.find(key);
    if (it == in.end()) throw std::invalid_argument("missing optimizer state: " + key);
    return it->second;
  };
  std::size_t k = 0;
  for (const auto& p : params_->all()) {
    const Matrix& m = fetch(prefix + p.name + ".m");
    const Matrix& v = fetch(prefix + p.name + ".v");
    if (!m.same_shape(p.value) || !v.same_shape(p.value)) {
      throw std::invalid_argument("optimizer state shape mismatch for " + p.name);
    }
    m_[k] = m;
    v_[k] = v;
    ++k;
  }
  t_ = static_cast<std::int64_t>(fetch(prefix + "t").item());
}

double grad_norm(const ParameterSet& params) {
  double s = 0.0;
  for (const auto& p : params.all()) s += kernels::dot(p.grad.data.data(), p.grad.data.data(), p.grad.size());
  return std::sqrt(s);
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& p : params.all()) {
      for (double& g : p.grad.data) g *= f;
    }
  }
  return norm;
}

}  // namespace telroute::nn
