#include "moldline/nn/optim.hpp"

#include <cmath>

#include "moldline/error.hpp"

namespace moldline::nn {

nlohmann::json OptimizerSpec::to_json() const {
  return {{"name", name}, {"lr", lr}, {"beta1", beta1}, {"beta2", beta2}, {"epsilon", epsilon}, {"decay", decay}};
}

OptimizerSpec OptimizerSpec::from_json(const nlohmann::json& j) {
  OptimizerSpec s;
  s.name = j.value("name", s.name);
  s.lr = j.value("lr", s.lr);
  s.beta1 = j.value("beta1", s.beta1);
  s.beta2 = j.value("beta2", s.beta2);
  s.epsilon = j.value("epsilon", s.epsilon);
  s.decay = j.value("decay", s.decay);
  return s;
}

Optimizer::Optimizer(OptimizerSpec spec) : spec_(std::move(spec)) {
  if (spec_.name != "sgd" && spec_.name != "rmsprop" && spec_.name != "adam")
    fail(ErrorCode::BadConfig, "optimizer must be sgd, rmsprop or adam, got '" + spec_.name + "'");
  if (!(spec_.lr >= 0.0)) fail(ErrorCode::BadConfig, "optimizer learning rate must be >= 0");
}

void Optimizer::step(const std::vector<Param*>& params) {
  ++t_;
  if (m_.size() != params.size()) {
    m_.assign(params.size(), {});
    v_.assign(params.size(), {});
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k].assign(params[k]->value.size(), 0.0);
      v_[k].assign(params[k]->value.size(), 0.0);
    }
  }
  const double lr = spec_.lr;
  if (spec_.name == "sgd") {
    for (auto* p : params)
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr * p->grad[i];
  } else if (spec_.name == "rmsprop") {
    const double d = spec_.decay, eps = spec_.epsilon;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& s = v_[k];
      auto* p = params[k];
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad[i];
        s[i] = d * s[i] + (1.0 - d) * g * g;
        p->value[i] -= lr * g / (std::sqrt(s[i]) + eps);
      }
    }
  } else {
    const double b1 = spec_.beta1, b2 = spec_.beta2, eps = spec_.epsilon;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& m = m_[k];
      auto& v = v_[k];
      auto* p = params[k];
      double* w = p->value.data();
      const double* gr = p->grad.data();
      const std::size_t n = p->value.size();
      for (std::size_t i = 0; i < n; ++i) {
        const double g = gr[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }
}

nlohmann::json Optimizer::state_json() const {
  return {{"spec", spec_.to_json()}, {"t", t_}, {"m", m_}, {"v", v_}};
}

void Optimizer::load_state(const nlohmann::json& j) {
  spec_ = OptimizerSpec::from_json(j.at("spec"));
  t_ = j.at("t").get<long long>();
  m_ = j.at("m").get<std::vector<std::vector<double>>>();
  v_ = j.at("v").get<std::vector<std::vector<double>>>();
}

}  // namespace moldline::nn
