#pragma once

#include <span>
#include <vector>

namespace moldline::cwt {

/// Mexican-hat (Ricker) wavelet sampled at `points` positions centred on 0.
std::vector<double> ricker(int points, double width);

/// Number of taps used for a given scale before clipping to the signal length.
int support_points(double scale);

struct CwtMatrix {
  std::vector<double> scales;
  std::size_t n_samples = 0;
  std::vector<double> coefficients;  // row-major [scales.size() x n_samples]

  double at(std::size_t row, std::size_t col) const { return coefficients[row * n_samples + col]; }
  std::span<const double> row(std::size_t r) const {
    return {coefficients.data() + r * n_samples, n_samples};
  }
};

/// Same-length convolution of the signal with ricker(support, scale) per row,
/// zero-padded edges.
CwtMatrix cwt_transform(std::span<const double> signal, std::span<const double> scales);

struct Peak {
  std::size_t index = 0;
  double scale = 0.0;
  double snr = 0.0;
  double height = 0.0;
};

struct PeakParams {
  std::vector<double> scales;   // ascending
  int min_ridge_length = 0;     // 0 -> ceil(|scales| / 4)
  double min_snr = 1.0;
  int gap_thresh = 2;           // rows a ridge may skip before it terminates
  int noise_window = 256;       // width of the window for the snr noise estimate
  double noise_percentile = 95.0;

  static PeakParams defaults();
};

std::vector<Peak> find_peaks_cwt(std::span<const double> signal, const PeakParams& params);

std::vector<double> default_scales();

}  // namespace moldline::cwt
