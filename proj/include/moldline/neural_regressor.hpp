#pragma once

#include <memory>
#include <optional>
#include <string>

#include "moldline/lstm.hpp"
#include "moldline/nn/network.hpp"
#include "moldline/regress/regressor.hpp"

namespace moldline {

/// Raw-input neural models behind the Regressor contract. Each row of X is
/// one flattened sample: a 28x28 image (row-major) for the image networks,
/// or a sample-major [length x channels] signal block for the LSTMs.
/// Targets are standardized internally and predictions mapped back.
class NeuralRegressor : public regress::Regressor {
 public:
  NeuralRegressor(std::string kind, nlohmann::json hyper);

  std::string kind() const override { return kind_; }
  void fit(const regress::Matrix& X, const regress::Vector& y) override;
  regress::Vector predict(const regress::Matrix& X) const override;
  nlohmann::json hyperparameters() const override { return hyper_; }
  nlohmann::json state() const override;
  void load_state(const nlohmann::json& state) override;

  bool is_lstm() const { return kind_ == "lstm1" || kind_ == "lstm2"; }
  /// Per-sample input width expected in X.
  Eigen::Index input_width() const;
  const std::vector<nn::TrainPoint>& trajectory() const { return trajectory_; }
  /// Network architecture shorthand, e.g. "C(32,5,1)-P-...".
  std::string describe() const;

  nn::NetworkSpec network_spec() const;
  lstm::LstmSpec lstm_spec() const;

 private:
  nn::Tensor to_tensor(const regress::Matrix& X) const;

  std::string kind_;
  nlohmann::json hyper_;
  // Networks mutate caches during forward passes, so predict() works on them
  // through mutable members; a fitted model is otherwise immutable.
  mutable std::unique_ptr<nn::Network> net_;
  mutable std::unique_ptr<lstm::LstmNetwork> lstm_;
  double y_mean_ = 0.0;
  double y_std_ = 1.0;
  std::vector<nn::TrainPoint> trajectory_;
  nlohmann::json optimizer_state_;
};

nlohmann::json neural_default_hyperparameters(const std::string& kind);
std::unique_ptr<regress::Regressor> make_neural_regressor(const std::string& kind,
                                                          const nlohmann::json& hyper);

}  // namespace moldline
