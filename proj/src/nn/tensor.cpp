#include "moldline/nn/tensor.hpp"

#include <algorithm>

#include "moldline/error.hpp"

namespace moldline::nn {

std::size_t volume(const Shape& s) {
  std::size_t v = 1;
  for (int d : s) {
    if (d <= 0) fail(ErrorCode::ShapeMismatch, "tensor dimensions must be positive: " + shape_string(s));
    v *= static_cast<std::size_t>(d);
  }
  return v;
}

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(volume(shape), fill) {}

Tensor::Tensor(Shape s, const std::vector<double>& values) : Tensor(std::move(s), Buffer(values.begin(), values.end())) {}

Tensor::Tensor(Shape s, Buffer values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != volume(shape))
    fail(ErrorCode::ShapeMismatch, "tensor data length does not match shape " + shape_string(shape));
}

Tensor Tensor::reshaped(Shape s) const {
  if (volume(s) != data.size())
    fail(ErrorCode::ShapeMismatch, "cannot reshape " + shape_string(shape) + " to " + shape_string(s));
  return Tensor(std::move(s), data);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t count) const {
  const std::size_t row = data.size() / static_cast<std::size_t>(shape.at(0));
  Shape s = shape;
  s[0] = static_cast<int>(count);
  return Tensor(s, Buffer(data.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                       data.begin() + static_cast<std::ptrdiff_t>((begin + count) * row)));
}

Tensor Tensor::gather_rows(const std::vector<std::size_t>& rows) const {
  const std::size_t row = data.size() / static_cast<std::size_t>(shape.at(0));
  Shape s = shape;
  s[0] = static_cast<int>(rows.size());
  Tensor out(s);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(rows[i] * row), row,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * row));
  return out;
}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

}  // namespace moldline::nn
