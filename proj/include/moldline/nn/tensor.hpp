#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace moldline::nn {

using Shape = std::vector<int>;
// Cache-line aligned storage: Eigen kernels over mapped buffers pick their
// summation order from the base alignment, so this keeps results bitwise
// independent of where the heap placed them.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

std::size_t volume(const Shape& s);
std::string shape_string(const Shape& s);

/// Row-major dense tensor. Batched tensors put the sample axis first and
/// images are NHWC.
struct Tensor {
  Shape shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, Buffer values);
  Tensor(Shape s, const std::vector<double>& values);
  Tensor(Shape s, std::initializer_list<double> values) : Tensor(std::move(s), Buffer(values)) {}

  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  /// Same data under a new shape of identical volume.
  Tensor reshaped(Shape s) const;
  /// Rows [begin, begin+count) along the leading axis.
  Tensor slice_rows(std::size_t begin, std::size_t count) const;
  /// Gathers rows along the leading axis.
  Tensor gather_rows(const std::vector<std::size_t>& rows) const;
};

/// Trainable parameter with its gradient accumulator.
struct Param {
  std::string name;
  Shape shape;
  Buffer value;
  Buffer grad;
  bool decays = true;  // weights take the L2 penalty, biases do not

  Param() = default;
  Param(std::string n, Shape s, bool decay)
      : name(std::move(n)), shape(std::move(s)), value(volume(shape), 0.0), grad(volume(shape), 0.0),
        decays(decay) {}
  void zero_grad();
};

}  // namespace moldline::nn
