#pragma once

#include <array>
#include <string_view>
#include <utility>
#include <vector>

#include "moldline/dataset.hpp"

namespace moldline::haralick {

struct QuantizedImage {
  int width = 0;
  int height = 0;
  int levels = 0;
  std::vector<int> values;  // row-major, each in [0, levels)

  int at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Linear binning between the image's min and max; the top bin is closed on
/// the right and a constant image maps to level 0.
QuantizedImage quantize(const ThermoImage& image, int levels);

/// Symmetric, normalised gray-level co-occurrence matrix.
struct Glcm {
  int levels = 0;
  std::vector<double> p;  // row-major levels x levels

  double at(int i, int j) const { return p[static_cast<std::size_t>(i) * levels + j]; }
};

using Offset = std::pair<int, int>;  // (dy, dx)

/// The four distance-1 directions 0, 90, 45 and 135 degrees.
std::vector<Offset> default_offsets();

Glcm glcm(const QuantizedImage& image, const std::vector<Offset>& offsets);

inline constexpr std::size_t kNumFeatures = 14;

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "energy",         "contrast",        "correlation",       "variance",
    "idm",            "sum_average",     "sum_variance",      "sum_entropy",
    "entropy",        "diff_variance",   "diff_entropy",      "imc1",
    "imc2",           "max_corr_coeff"};

struct Features {
  std::array<double, kNumFeatures> values{};
  bool degenerate_correlation = false;  // a marginal std was 0; correlation set to 0
  bool mcc_not_converged = false;

  double operator[](std::size_t i) const { return values[i]; }
};

Features features(const Glcm& g);

/// Symmetric matrix whose eigenvalues equal those of Haralick's Q matrix,
/// restricted to gray levels with non-zero marginal probability.
std::vector<double> q_similarity_matrix(const Glcm& g, std::size_t& dim);

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations, descending.
std::vector<double> symmetric_eigenvalues(std::vector<double> a, std::size_t dim, double tol,
                                          bool& converged);

/// Per-offset GLCM features averaged over the offsets.
Features averaged_features(const QuantizedImage& image, const std::vector<Offset>& offsets);

}  // namespace moldline::haralick
