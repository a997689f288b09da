#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "moldline/dataset.hpp"

namespace moldline {

/// Linear interpolation onto n_out uniformly spaced positions; endpoints kept.
std::vector<double> resample_linear(std::span<const double> samples, std::size_t n_out);
std::vector<double> resample_linear(const SignalTrace& trace, std::size_t n_out);

struct Standardization {
  double mean = 0.0;
  double std = 1.0;  // population (1/N)
};

/// Throws TooFewValues (< 2 values) or DegenerateConstant (std == 0).
Standardization standardize_fit(std::span<const double> values);
std::vector<double> standardize_apply(std::span<const double> values, double mean, double std);
std::vector<double> inverse_apply(std::span<const double> z, double mean, double std);

/// Per-column z-scoring fitted on a chosen subset of rows. Constant columns get
/// std = 1 and are listed in `constant_columns` rather than raising.
class ColumnStandardizer {
 public:
  ColumnStandardizer() = default;

  /// rows: row-major block of `n_cols` columns; `mask` (same size, optional) marks
  /// cells excluded from the statistics (imputed values).
  void fit(std::span<const double> rows, std::size_t n_cols,
           std::span<const std::size_t> row_subset,
           std::span<const unsigned char> mask = {});

  void apply_inplace(std::span<double> rows, std::span<const unsigned char> mask = {}) const;

  std::size_t n_cols() const { return means_.size(); }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& stds() const { return stds_; }
  const std::vector<std::size_t>& constant_columns() const { return constant_; }

  nlohmann::json to_json() const;
  static ColumnStandardizer from_json(const nlohmann::json& j);

  bool operator==(const ColumnStandardizer&) const = default;

 private:
  std::vector<double> means_;
  std::vector<double> stds_;
  std::vector<std::size_t> constant_;
};

/// Area-average downscale: each output pixel is the mean of its (possibly
/// fractional) source footprint.
ThermoImage downscale_image(const ThermoImage& image, int out_w, int out_h);

}  // namespace moldline
