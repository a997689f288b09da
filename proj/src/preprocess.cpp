#include "moldline/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "moldline/error.hpp"

namespace moldline {

std::vector<double> resample_linear(std::span<const double> samples, std::size_t n_out) {
  if (samples.empty()) fail(ErrorCode::EmptyTrace, "cannot resample an empty trace");
  if (n_out < 2) fail(ErrorCode::InvalidArgument, "resample target must be >= 2 points");
  const std::size_t n_in = samples.size();
  std::vector<double> out(n_out);
  if (n_in == 1) {
    std::fill(out.begin(), out.end(), samples[0]);
    return out;
  }
  const double span = static_cast<double>(n_in - 1);
  const double denom = static_cast<double>(n_out - 1);
  for (std::size_t k = 0; k < n_out; ++k) {
    double pos = static_cast<double>(k) * span / denom;
    auto i = static_cast<std::size_t>(std::floor(pos));
    if (i >= n_in - 1) {
      out[k] = samples[n_in - 1];
      continue;
    }
    double frac = pos - static_cast<double>(i);
    out[k] = frac == 0.0 ? samples[i] : samples[i] + frac * (samples[i + 1] - samples[i]);
  }
  out.front() = samples.front();
  out.back() = samples.back();
  return out;
}

std::vector<double> resample_linear(const SignalTrace& trace, std::size_t n_out) {
  return resample_linear(std::span<const double>(trace.samples), n_out);
}

Standardization standardize_fit(std::span<const double> values) {
  if (values.size() < 2) fail(ErrorCode::TooFewValues, "standardization needs at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / static_cast<double>(values.size()));
  if (sd == 0.0) fail(ErrorCode::DegenerateConstant, "values are constant (std = 0)");
  return {mean, sd};
}

std::vector<double> standardize_apply(std::span<const double> values, double mean, double std) {
  if (!(std > 0.0)) fail(ErrorCode::ZeroStd, "standard deviation must be positive");
  std::vector<double> z(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) z[i] = (values[i] - mean) / std;
  return z;
}

std::vector<double> inverse_apply(std::span<const double> z, double mean, double std) {
  if (!(std > 0.0)) fail(ErrorCode::ZeroStd, "standard deviation must be positive");
  std::vector<double> x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = z[i] * std + mean;
  return x;
}

void ColumnStandardizer::fit(std::span<const double> rows, std::size_t n_cols,
                             std::span<const std::size_t> row_subset,
                             std::span<const unsigned char> mask) {
  if (n_cols == 0 || rows.size() % n_cols != 0)
    fail(ErrorCode::ShapeMismatch, "row block is not a multiple of the column count");
  if (!mask.empty() && mask.size() != rows.size())
    fail(ErrorCode::ShapeMismatch, "mask size differs from the row block");
  means_.assign(n_cols, 0.0);
  stds_.assign(n_cols, 1.0);
  constant_.clear();
  std::vector<std::size_t> counts(n_cols, 0);
  for (std::size_t r : row_subset)
    for (std::size_t c = 0; c < n_cols; ++c) {
      std::size_t idx = r * n_cols + c;
      if (!mask.empty() && mask[idx]) continue;
      means_[c] += rows[idx];
      ++counts[c];
    }
  std::vector<double> ss(n_cols, 0.0);
  for (std::size_t c = 0; c < n_cols; ++c)
    if (counts[c]) means_[c] /= static_cast<double>(counts[c]);
  for (std::size_t r : row_subset)
    for (std::size_t c = 0; c < n_cols; ++c) {
      std::size_t idx = r * n_cols + c;
      if (!mask.empty() && mask[idx]) continue;
      double d = rows[idx] - means_[c];
      ss[c] += d * d;
    }
  for (std::size_t c = 0; c < n_cols; ++c) {
    double sd = counts[c] ? std::sqrt(ss[c] / static_cast<double>(counts[c])) : 0.0;
    if (sd > 0.0) {
      stds_[c] = sd;
    } else {
      stds_[c] = 1.0;
      constant_.push_back(c);
    }
  }
}

void ColumnStandardizer::apply_inplace(std::span<double> rows,
                                       std::span<const unsigned char> mask) const {
  const std::size_t n_cols = means_.size();
  if (n_cols == 0 || rows.size() % n_cols != 0)
    fail(ErrorCode::ShapeMismatch, "row block does not match the fitted column count");
  for (std::size_t idx = 0; idx < rows.size(); ++idx) {
    std::size_t c = idx % n_cols;
    // Imputed cells land on the column mean, i.e. zero after scaling.
    rows[idx] = (!mask.empty() && mask[idx]) ? 0.0 : (rows[idx] - means_[c]) / stds_[c];
  }
}

nlohmann::json ColumnStandardizer::to_json() const {
  return {{"means", means_}, {"stds", stds_}, {"constant_columns", constant_}};
}

ColumnStandardizer ColumnStandardizer::from_json(const nlohmann::json& j) {
  ColumnStandardizer s;
  s.means_ = j.at("means").get<std::vector<double>>();
  s.stds_ = j.at("stds").get<std::vector<double>>();
  s.constant_ = j.at("constant_columns").get<std::vector<std::size_t>>();
  return s;
}

namespace {

// weights[o] lists (source index, overlap) pairs of output cell o.
std::vector<std::vector<std::pair<int, double>>> footprints(int n_in, int n_out) {
  std::vector<std::vector<std::pair<int, double>>> w(static_cast<std::size_t>(n_out));
  const double scale = static_cast<double>(n_in) / n_out;
  for (int o = 0; o < n_out; ++o) {
    double a = o * scale;
    double b = (o + 1) * scale;
    int first = static_cast<int>(std::floor(a));
    int last = std::min(n_in - 1, static_cast<int>(std::ceil(b)) - 1);
    for (int s = first; s <= last; ++s) {
      double overlap = std::min(b, s + 1.0) - std::max(a, static_cast<double>(s));
      if (overlap > 0.0) w[static_cast<std::size_t>(o)].emplace_back(s, overlap / scale);
    }
  }
  return w;
}

}  // namespace

ThermoImage downscale_image(const ThermoImage& image, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1 || out_w > image.width || out_h > image.height)
    fail(ErrorCode::BadDims, "downscale target must be within 1..input dimensions");
  const auto wx = footprints(image.width, out_w);
  const auto wy = footprints(image.height, out_h);

  // Separable: rows first, then columns.
  std::vector<double> tmp(static_cast<std::size_t>(image.height) * out_w, 0.0);
  for (int y = 0; y < image.height; ++y)
    for (int ox = 0; ox < out_w; ++ox) {
      double acc = 0.0;
      for (auto [sx, w] : wx[static_cast<std::size_t>(ox)]) acc += w * image.at(y, sx);
      tmp[static_cast<std::size_t>(y) * out_w + ox] = acc;
    }
  ThermoImage out;
  out.width = out_w;
  out.height = out_h;
  out.pixels.assign(static_cast<std::size_t>(out_w) * out_h, 0.0);
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox) {
      double acc = 0.0;
      for (auto [sy, w] : wy[static_cast<std::size_t>(oy)])
        acc += w * tmp[static_cast<std::size_t>(sy) * out_w + ox];
      out.pixels[static_cast<std::size_t>(oy) * out_w + ox] = acc;
    }
  return out;
}

}  // namespace moldline
