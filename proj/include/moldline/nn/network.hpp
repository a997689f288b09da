#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moldline/nn/layers.hpp"
#include "moldline/nn/loss.hpp"
#include "moldline/nn/optim.hpp"

namespace moldline::nn {

struct LayerSpec {
  enum class Type { Dense, Conv2d, MaxPool, Relu, Dropout, Flatten };
  Type type = Type::Relu;
  int units = 0;       // dense
  int filters = 0;     // conv2d
  int kernel = 0;      // conv2d
  int stride = 1;      // conv2d, maxpool
  Padding padding = Padding::Same;
  int size = 2;        // maxpool
  double rate = 0.9;   // dropout; meaning set by NetworkSpec::dropout_rate_is_keep
  int expected = 0;    // flatten width check, 0 = none

  static LayerSpec dense(int units);
  static LayerSpec conv(int filters, int kernel, int stride = 1, Padding padding = Padding::Same);
  static LayerSpec pool(int size = 2, int stride = 2);
  static LayerSpec relu();
  static LayerSpec dropout(double rate);
  static LayerSpec flatten(int expected = 0);

  std::string describe() const;  // e.g. "C(32,5,1)", "FC(1024)"
  nlohmann::json to_json() const;
  static LayerSpec from_json(const nlohmann::json& j);
};

struct NetworkSpec {
  std::string name;
  Shape input{28, 28, 1};
  std::vector<LayerSpec> layers;
  LossKind loss = LossKind::L1;
  double huber_delta = 1.0;
  OptimizerSpec optimizer;
  Init init;
  double l2 = 0.01;             // added to weight gradients only
  int batch_size = 17;          // sampled with replacement per iteration
  int iterations = 10000;
  int log_every = 100;
  std::uint64_t seed = 0;
  bool dropout_rate_is_keep = true;

  std::string describe() const;  // layer chain shorthand
  nlohmann::json to_json() const;
  static NetworkSpec from_json(const nlohmann::json& j);
};

/// Per-sample shapes: [0] is the input, [i+1] the output of layer i.
/// Raises ShapeMismatch naming the first layer that breaks the chain, or if
/// the final output is not a single scalar.
std::vector<Shape> validate(const NetworkSpec& spec);

class Network {
 public:
  /// Validates the spec and initializes weights from the spec seed.
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<Shape>& shapes() const { return shapes_; }

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& grad_out);
  std::vector<Param*> params();
  void zero_grad();
  std::size_t parameter_count();

  /// Eval-mode predictions for a batch [N, input...], processed in chunks.
  std::vector<double> predict(const Tensor& x, std::size_t chunk = 64);

  Layer& layer(std::size_t i) { return *layers_.at(i); }
  std::size_t layer_count() const { return layers_.size(); }
  Rng& dropout_rng() { return dropout_rng_; }

  nlohmann::json to_json();
  static Network from_json(const nlohmann::json& j);

 private:
  NetworkSpec spec_;
  std::vector<Shape> shapes_;
  std::vector<std::unique_ptr<Layer>> layers_;
  Rng dropout_rng_;
};

struct TrainPoint {
  int iteration = 0;
  double loss = 0.0;  // mean minibatch data loss over the preceding window
};

struct TrainResult {
  std::vector<TrainPoint> trajectory;
  nlohmann::json optimizer_state;
};

/// Seeded minibatch training for spec().iterations steps. `X` is [N, input...].
/// Raises NonFiniteLoss with the iteration number if the loss diverges.
TrainResult train_network(Network& net, const Tensor& X, std::span<const double> y);

std::string train_log_csv(const std::vector<TrainPoint>& trajectory);

}  // namespace moldline::nn
