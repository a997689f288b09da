#include "moldline/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "moldline/error.hpp"

namespace moldline::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

void fill_init(Param& p, int fan_in, int fan_out, Rng& rng, const Init& init) {
  if (init.kind == Init::Kind::Xavier) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& v : p.value) v = u(rng);
  } else {
    std::normal_distribution<double> nd(0.0, init.stddev);
    for (auto& v : p.value) v = nd(rng);
  }
}

int batch_of(const Tensor& x, std::size_t rank, const char* layer) {
  if (x.shape.size() != rank)
    fail(ErrorCode::ShapeMismatch, std::string(layer) + ": expected a rank-" + std::to_string(rank) +
                                       " batch, got " + shape_string(x.shape));
  return x.shape[0];
}

}  // namespace

// ---------------------------------------------------------------- Dense

Dense::Dense(int units) : units_(units) {
  if (units < 1) fail(ErrorCode::InvalidArgument, "dense: units must be >= 1");
}

Shape Dense::output_shape(const Shape& in) const {
  if (in.size() != 1)
    fail(ErrorCode::ShapeMismatch, "dense expects a flat input, got " + shape_string(in));
  return {units_};
}

void Dense::initialize(const Shape& in, Rng& rng, const Init& init) {
  W = Param("W", {units_, in.at(0)}, true);
  b = Param("b", {units_}, false);
  fill_init(W, in[0], units_, rng, init);
}

Tensor Dense::forward(const Tensor& x, bool, Rng&) {
  const int n = batch_of(x, 2, "dense");
  const int n_in = x.shape[1];
  if (n_in != W.shape.at(1))
    fail(ErrorCode::ShapeMismatch, "dense: input width " + std::to_string(n_in) + " != " +
                                       std::to_string(W.shape[1]));
  x_ = x;
  Tensor y({n, units_});
  Map Y(y.data.data(), n, units_);
  Y.noalias() = MapC(x.data.data(), n, n_in) * MapC(W.value.data(), units_, n_in).transpose();
  Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value.data(), units_);
  return y;
}

Tensor Dense::backward(const Tensor& g) {
  const int n = g.shape.at(0);
  const int n_in = W.shape[1];
  MapC G(g.data.data(), n, units_);
  MapC X(x_.data.data(), n, n_in);
  Map(W.grad.data(), units_, n_in).noalias() += G.transpose() * X;
  Eigen::Map<Eigen::RowVectorXd>(b.grad.data(), units_) += G.colwise().sum();
  Tensor dx({n, n_in});
  Map(dx.data.data(), n, n_in).noalias() = G * MapC(W.value.data(), units_, n_in);
  return dx;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int filters, int kernel, int stride, Padding padding)
    : filters_(filters), kernel_(kernel), stride_(stride), padding_(padding) {
  if (filters < 1 || kernel < 1 || stride < 1)
    fail(ErrorCode::InvalidArgument, "conv2d: filters, kernel and stride must be >= 1");
}

Conv2d::Geometry Conv2d::geometry(const Shape& in) const {
  if (in.size() != 3) fail(ErrorCode::ShapeMismatch, "conv2d expects HxWxC input, got " + shape_string(in));
  Geometry g{in[0], in[1], in[2], 0, 0, 0, 0};
  if (padding_ == Padding::Same) {
    g.ho = (g.h + stride_ - 1) / stride_;
    g.wo = (g.w + stride_ - 1) / stride_;
    g.pad_top = std::max((g.ho - 1) * stride_ + kernel_ - g.h, 0) / 2;
    g.pad_left = std::max((g.wo - 1) * stride_ + kernel_ - g.w, 0) / 2;
  } else {
    if (g.h < kernel_ || g.w < kernel_)
      fail(ErrorCode::ShapeMismatch, "conv2d: kernel " + std::to_string(kernel_) +
                                         " larger than input " + shape_string(in));
    g.ho = (g.h - kernel_) / stride_ + 1;
    g.wo = (g.w - kernel_) / stride_ + 1;
  }
  return g;
}

Shape Conv2d::output_shape(const Shape& in) const {
  const auto g = geometry(in);
  return {g.ho, g.wo, filters_};
}

void Conv2d::initialize(const Shape& in, Rng& rng, const Init& init) {
  const int c = in.at(2);
  W = Param("W", {kernel_, kernel_, c, filters_}, true);
  b = Param("b", {filters_}, false);
  fill_init(W, kernel_ * kernel_ * c, kernel_ * kernel_ * filters_, rng, init);
}

Tensor Conv2d::forward(const Tensor& x, bool, Rng&) {
  const int n = batch_of(x, 4, "conv2d");
  in_shape_ = {x.shape[1], x.shape[2], x.shape[3]};
  const auto g = geometry(in_shape_);
  if (g.c != W.shape.at(2)) fail(ErrorCode::ShapeMismatch, "conv2d: channel count mismatch");
  const int K = kernel_ * kernel_ * g.c;
  const long rows = static_cast<long>(n) * g.ho * g.wo;
  batch_ = n;
  cols_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(K), 0.0);
  for (int s = 0; s < n; ++s)
    for (int oy = 0; oy < g.ho; ++oy)
      for (int ox = 0; ox < g.wo; ++ox) {
        double* col = cols_.data() + ((static_cast<long>(s) * g.ho + oy) * g.wo + ox) * K;
        for (int ky = 0; ky < kernel_; ++ky) {
          const int iy = oy * stride_ + ky - g.pad_top;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < kernel_; ++kx) {
            const int ix = ox * stride_ + kx - g.pad_left;
            if (ix < 0 || ix >= g.w) continue;
            const double* src = x.data.data() + ((static_cast<long>(s) * g.h + iy) * g.w + ix) * g.c;
            std::copy_n(src, g.c, col + (ky * kernel_ + kx) * g.c);
          }
        }
      }
  Tensor y({n, g.ho, g.wo, filters_});
  Map Y(y.data.data(), rows, filters_);
  Y.noalias() = MapC(cols_.data(), rows, K) * MapC(W.value.data(), K, filters_);
  Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value.data(), filters_);
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const auto g = geometry(in_shape_);
  const int n = batch_;
  const int K = kernel_ * kernel_ * g.c;
  const long rows = static_cast<long>(n) * g.ho * g.wo;
  MapC G(grad_out.data.data(), rows, filters_);
  MapC C(cols_.data(), rows, K);
  Map(W.grad.data(), K, filters_).noalias() += C.transpose() * G;
  Eigen::Map<Eigen::RowVectorXd>(b.grad.data(), filters_) += G.colwise().sum();
  RowMat dcols = G * MapC(W.value.data(), K, filters_).transpose();

  Tensor dx({n, g.h, g.w, g.c});
  for (int s = 0; s < n; ++s)
    for (int oy = 0; oy < g.ho; ++oy)
      for (int ox = 0; ox < g.wo; ++ox) {
        const double* col = dcols.data() + ((static_cast<long>(s) * g.ho + oy) * g.wo + ox) * K;
        for (int ky = 0; ky < kernel_; ++ky) {
          const int iy = oy * stride_ + ky - g.pad_top;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < kernel_; ++kx) {
            const int ix = ox * stride_ + kx - g.pad_left;
            if (ix < 0 || ix >= g.w) continue;
            double* dst = dx.data.data() + ((static_cast<long>(s) * g.h + iy) * g.w + ix) * g.c;
            const double* src = col + (ky * kernel_ + kx) * g.c;
            for (int c = 0; c < g.c; ++c) dst[c] += src[c];
          }
        }
      }
  return dx;
}

// ---------------------------------------------------------------- MaxPool

MaxPool::MaxPool(int size, int stride) : size_(size), stride_(stride) {
  if (size < 1 || stride < 1) fail(ErrorCode::InvalidArgument, "maxpool: size and stride must be >= 1");
}

Shape MaxPool::output_shape(const Shape& in) const {
  if (in.size() != 3) fail(ErrorCode::ShapeMismatch, "maxpool expects HxWxC input, got " + shape_string(in));
  if (in[0] < size_ || in[1] < size_)
    fail(ErrorCode::ShapeMismatch, "maxpool window larger than input " + shape_string(in));
  return {(in[0] - size_) / stride_ + 1, (in[1] - size_) / stride_ + 1, in[2]};
}

Tensor MaxPool::forward(const Tensor& x, bool, Rng&) {
  const int n = batch_of(x, 4, "maxpool");
  in_shape_ = {x.shape[1], x.shape[2], x.shape[3]};
  const Shape o = output_shape(in_shape_);
  const int h = in_shape_[0], w = in_shape_[1], c = in_shape_[2];
  Tensor y({n, o[0], o[1], c});
  argmax_.assign(y.size(), 0);
  std::size_t k = 0;
  for (int s = 0; s < n; ++s)
    for (int oy = 0; oy < o[0]; ++oy)
      for (int ox = 0; ox < o[1]; ++ox)
        for (int ch = 0; ch < c; ++ch, ++k) {
          std::size_t best = 0;
          double best_v = 0.0;
          bool first = true;
          for (int dy = 0; dy < size_; ++dy)
            for (int dx = 0; dx < size_; ++dx) {
              const std::size_t idx =
                  ((static_cast<std::size_t>(s) * h + oy * stride_ + dy) * w + ox * stride_ + dx) * c + ch;
              if (first || x.data[idx] > best_v) {
                best = idx;
                best_v = x.data[idx];
                first = false;
              }
            }
          y.data[k] = best_v;
          argmax_[k] = best;
        }
  return y;
}

Tensor MaxPool::backward(const Tensor& grad_out) {
  Tensor dx({grad_out.shape.at(0), in_shape_[0], in_shape_[1], in_shape_[2]});
  for (std::size_t k = 0; k < argmax_.size(); ++k) dx.data[argmax_[k]] += grad_out.data[k];
  return dx;
}

// ---------------------------------------------------------------- ReLU / Dropout / Flatten

Tensor Relu::forward(const Tensor& x, bool, Rng&) {
  Tensor y = x;
  active_.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    active_[i] = x.data[i] > 0.0;
    if (!active_[i]) y.data[i] = 0.0;
  }
  return y;
}

Tensor Relu::backward(const Tensor& g) {
  Tensor dx = g;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!active_[i]) dx.data[i] = 0.0;
  return dx;
}

Dropout::Dropout(double keep) : keep_(keep) {
  if (!(keep > 0.0 && keep <= 1.0)) fail(ErrorCode::InvalidArgument, "dropout: keep must be in (0, 1]");
}

Tensor Dropout::forward(const Tensor& x, bool training, Rng& rng) {
  if (!training || keep_ == 1.0) {
    mask_.clear();
    return x;
  }
  Tensor y = x;
  mask_.resize(x.size());
  const double scale = 1.0 / keep_;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = uniform01(rng) < keep_ ? scale : 0.0;
    y.data[i] *= mask_[i];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& g) {
  if (mask_.empty()) return g;
  Tensor dx = g;
  for (std::size_t i = 0; i < g.size(); ++i) dx.data[i] *= mask_[i];
  return dx;
}

Shape Flatten::output_shape(const Shape& in) const {
  const int width = static_cast<int>(volume(in));
  if (expected_ > 0 && width != expected_)
    fail(ErrorCode::ShapeMismatch, "flatten: expected width " + std::to_string(expected_) + ", got " +
                                       std::to_string(width) + " from " + shape_string(in));
  return {width};
}

Tensor Flatten::forward(const Tensor& x, bool, Rng&) {
  in_shape_ = x.shape;
  const int n = x.shape.at(0);
  return x.reshaped({n, static_cast<int>(x.size() / static_cast<std::size_t>(n))});
}

Tensor Flatten::backward(const Tensor& g) { return g.reshaped(in_shape_); }

}  // namespace moldline::nn
