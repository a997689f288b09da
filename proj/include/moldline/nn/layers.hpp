#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moldline/nn/tensor.hpp"
#include "moldline/random.hpp"

namespace moldline::nn {

enum class Padding { Same, Valid };

struct Init {
  enum class Kind { Normal, Xavier };
  Kind kind = Kind::Normal;
  double stddev = 0.1;  // Normal only
};

/// A layer maps a batch tensor (sample axis first) to a batch tensor.
/// backward() takes dLoss/dOutput for the most recent forward() and returns
/// dLoss/dInput, adding parameter gradients into params().
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string type() const = 0;
  /// Per-sample output shape; raises ShapeMismatch if `in` is not accepted.
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual void initialize(const Shape& /*in*/, Rng& /*rng*/, const Init& /*init*/) {}
  virtual Tensor forward(const Tensor& x, bool training, Rng& rng) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }
};

class Dense : public Layer {
 public:
  explicit Dense(int units);
  std::string type() const override { return "dense"; }
  Shape output_shape(const Shape& in) const override;
  void initialize(const Shape& in, Rng& rng, const Init& init) override;
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&W, &b}; }

  Param W;  // [units x n_in]
  Param b;  // [units]

 private:
  int units_;
  Tensor x_;
};

/// Cross-correlation with HWIO filters [k, k, C_in, C_out]. Same padding
/// gives ceil(H / stride) outputs with the extra pad row/column at the
/// bottom/right.
class Conv2d : public Layer {
 public:
  Conv2d(int filters, int kernel, int stride, Padding padding);
  std::string type() const override { return "conv2d"; }
  Shape output_shape(const Shape& in) const override;
  void initialize(const Shape& in, Rng& rng, const Init& init) override;
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&W, &b}; }

  Param W;
  Param b;

 private:
  struct Geometry {
    int h, w, c, ho, wo, pad_top, pad_left;
  };
  Geometry geometry(const Shape& in) const;

  int filters_, kernel_, stride_;
  Padding padding_;
  Shape in_shape_;
  Buffer cols_;  // im2col buffer of the last forward
  int batch_ = 0;
};

/// Valid max pooling; gradient goes to the first maximal cell of each window
/// in row-major order.
class MaxPool : public Layer {
 public:
  MaxPool(int size, int stride);
  std::string type() const override { return "maxpool"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  int size_, stride_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

class Relu : public Layer {
 public:
  std::string type() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<char> active_;
};

/// Inverted dropout: at train time each unit survives with probability
/// `keep` and is scaled by 1/keep; identity at eval time.
class Dropout : public Layer {
 public:
  explicit Dropout(double keep);
  std::string type() const override { return "dropout"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;
  double keep() const { return keep_; }

 private:
  double keep_;
  Buffer mask_;  // 0 or 1/keep; empty after an eval pass
};

/// Reshapes each sample to a vector; a non-zero `expected` width is enforced
/// by the shape validator.
class Flatten : public Layer {
 public:
  explicit Flatten(int expected = 0) : expected_(expected) {}
  std::string type() const override { return "flatten"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, bool training, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  int expected_;
  Shape in_shape_;
};

}  // namespace moldline::nn
