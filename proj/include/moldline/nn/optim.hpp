#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moldline/nn/tensor.hpp"

namespace moldline::nn {

struct OptimizerSpec {
  std::string name = "adam";  // sgd | rmsprop | adam
  double lr = 0.001;
  double beta1 = 0.9;    // adam
  double beta2 = 0.999;  // adam
  double epsilon = 1e-8;
  double decay = 0.9;    // rmsprop

  nlohmann::json to_json() const;
  static OptimizerSpec from_json(const nlohmann::json& j);
};

/// Update rules, applied elementwise with gradient g:
///   sgd      w -= lr g
///   rmsprop  s = decay s + (1-decay) g^2;  w -= lr g / (sqrt(s) + eps)
///   adam     m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2;
///            w -= lr (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec);

  void step(const std::vector<Param*>& params);
  long long steps() const { return t_; }
  const OptimizerSpec& spec() const { return spec_; }

  nlohmann::json state_json() const;
  void load_state(const nlohmann::json& j);

 private:
  OptimizerSpec spec_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace moldline::nn
