#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "moldline/nn/loss.hpp"
#include "moldline/nn/network.hpp"
#include "moldline/nn/optim.hpp"
#include "moldline/nn/tensor.hpp"

namespace moldline::lstm {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using nn::Param;
using nn::Tensor;

/// One LSTM layer. Gate blocks are stacked in the order i, f, g, o:
///   z = W x + U h_prev + b
///   i, f, o = sigmoid(z_i, z_f, z_o);  g = tanh(z_g)
///   c = f * c_prev + i * g;  h = o * tanh(c)
class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(int input_size, int hidden);

  int input_size() const { return input_size_; }
  int hidden() const { return hidden_; }

  /// xs[t] is [batch x input]; returns the hidden sequence (each [batch x hidden]).
  std::vector<RowMat> forward(const std::vector<RowMat>& xs);
  /// dh[t] is dLoss/dh_t from outside the recurrence (zero matrices allowed).
  /// Returns dLoss/dx_t and accumulates parameter gradients.
  std::vector<RowMat> backward(const std::vector<RowMat>& dh);

  Param W;  // [4H x input]
  Param U;  // [4H x H]
  Param b;  // [4H]

 private:
  int input_size_ = 0;
  int hidden_ = 0;
  std::vector<RowMat> x_, act_, c_, h_;  // per step: input, activated gates, cell, hidden
};

struct StepOutput {
  std::vector<double> h;
  std::vector<double> c;
};

/// Single-sample step with the layer's parameters.
StepOutput lstm_step(const LstmLayer& layer, std::span<const double> x, std::span<const double> h_prev,
                     std::span<const double> c_prev);

struct LstmSpec {
  std::string name = "lstm1";
  int timesteps = 100;
  int input_size = 120;
  int hidden = 30;
  int layers = 1;  // 2 stacks a second layer on the first's hidden sequence
  nn::LossKind loss = nn::LossKind::Mse;
  nn::OptimizerSpec optimizer;
  double l2 = 0.0;
  int batch_size = 17;
  int iterations = 100000;
  int log_every = 100;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables
  double init_std = 0.1;
  double forget_bias = 1.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static LstmSpec from_json(const nlohmann::json& j);
};

/// LSTM stack plus a dense head on the final hidden state.
class LstmNetwork {
 public:
  explicit LstmNetwork(LstmSpec spec);

  const LstmSpec& spec() const { return spec_; }

  /// x is [batch, timesteps, input_size]; returns [batch, 1].
  Tensor forward(const Tensor& x);
  void backward(const Tensor& grad_out);
  std::vector<Param*> params();
  void zero_grad();
  std::vector<double> predict(const Tensor& x, std::size_t chunk = 64);

  LstmLayer& layer(std::size_t i) { return layers_.at(i); }
  Param head_W;  // [1 x H]
  Param head_b;  // [1]

  nlohmann::json to_json();
  static LstmNetwork from_json(const nlohmann::json& j);

 private:
  LstmSpec spec_;
  std::vector<LstmLayer> layers_;
  RowMat last_h_;
  int batch_ = 0;
};

nn::TrainResult train_lstm(LstmNetwork& net, const Tensor& X, std::span<const double> y);

/// Per-sample [timesteps, features] shape for a sample-major block of
/// `length` samples x `channels`: chunked framing groups length/timesteps
/// consecutive samples per step.
nn::Shape framing_shape(int length, int channels, int timesteps);

}  // namespace moldline::lstm
