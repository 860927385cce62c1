#include "telroute/nn/layers.hpp"

#include <cmath>

namespace telroute::nn {

Parameter& ParameterSet::add(const std::string& name, Matrix value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_[name] = params_.size();
  params_.emplace_back(name, std::move(value));
  return params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::map<std::string, Matrix> ParameterSet::values() const {
  std::map<std::string, Matrix> out;
  for (const auto& p : params_) out[p.name] = p.value;
  return out;
}

void ParameterSet::load_values(const std::map<std::string, Matrix>& values) {
  for (auto& p : params_) {
    auto it = values.find(p.name);
    if (it == values.end()) throw std::invalid_argument("missing parameter in checkpoint: " + p.name);
    if (!it->second.same_shape(p.value)) {
      throw std::invalid_argument("shape mismatch for " + p.name + ": expected " + p.value.shape() + ", got " +
                                  it->second.shape());
    }
    p.value = it->second;
  }
}

Linear::Linear(ParameterSet& params, const std::string& name, int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Matrix w(in, out);
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  Matrix b(1, out);
  for (double& v : b.data) v = rng.uniform(-bound, bound);
  w_ = &params.add(name + ".w", std::move(w));
  b_ = &params.add(name + ".b", std::move(b));
}

Var Linear::operator()(Tape& tape, Var x) const {
  return add_row(matmul(x, tape.param(*w_)), tape.param(*b_));
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, int width) {
  gain_ = &params.add(name + ".gain", Matrix(1, width, 1.0));
  bias_ = &params.add(name + ".bias", Matrix(1, width, 0.0));
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return add_row(mul_row(layer_norm(x), tape.param(*gain_)), tape.param(*bias_));
}

Mlp::Mlp(ParameterSet& params, const std::string& name, int in, std::vector<int> hidden, int out, Rng& rng) {
  int prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers_.emplace_back(params, name + ".l" + std::to_string(i), prev, hidden[i], rng);
    prev = hidden[i];
  }
  layers_.emplace_back(params, name + ".l" + std::to_string(hidden.size()), prev, out, rng);
}

Var Mlp::operator()(Tape& tape, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](tape, x);
    if (i + 1 < layers_.size()) x = leaky_relu(x);
  }
  return x;
}

}  // namespace telroute::nn
