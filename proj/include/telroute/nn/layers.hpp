#pragma once

#include <deque>
#include <map>
#include <string>
#include <vector>

#include "telroute/nn/autodiff.hpp"
#include "telroute/rng.hpp"

namespace telroute::nn {

// Owns parameters at stable addresses, in registration order.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Matrix value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }
  std::size_t num_scalars() const;
  void zero_grad();

  std::map<std::string, Matrix> values() const;
  // Throws if a name is missing or a shape differs.
  void load_values(const std::map<std::string, Matrix>& values);

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

// y = x W + b with W stored [in x out].
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, int in, int out, Rng& rng);
  Var operator()(Tape& tape, Var x) const;
  Parameter& weight() const { return *w_; }
  Parameter& bias() const { return *b_; }
  int in() const { return w_->value.rows; }
  int out() const { return w_->value.cols; }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

// Per-row normalization with learned gain and bias.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, int width);
  Var operator()(Tape& tape, Var x) const;

 private:
  Parameter* gain_ = nullptr;
  Parameter* bias_ = nullptr;
};

// Linear layers with LeakyReLU between them and none after the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterSet& params, const std::string& name, int in, std::vector<int> hidden, int out, Rng& rng);
  Var operator()(Tape& tape, Var x) const;
  const Linear& last() const { return layers_.back(); }

 private:
  std::vector<Linear> layers_;
};

}  // namespace telroute::nn
