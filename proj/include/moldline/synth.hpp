#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "moldline/dataset.hpp"

namespace moldline::synth {

struct SynthConfig {
  int n_cycles = 204;
  double noise_level = 1.0;    // scales label and measurement noise; 0 = noiseless
  int pressure_peaks = 3;      // planted in-mold pressure peaks
  int trace_length = 3000;     // nominal samples per channel
  double length_jitter = 0.02; // relative +- jitter of each cycle's trace length
  int image_size = 156;
  double sample_rate_hz = 100.0;
  int n_test = 0;              // 0: scale 27/204 with n_cycles

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

/// Process latents, each uniform on [-1, 1]: melt temperature, packing
/// pressure, injection speed.
struct Latents {
  double zT = 0.0;
  double zP = 0.0;
  double zv = 0.0;
};

/// width_mm = 100 + 0.30 zT + 0.20 zP - 0.10 zv + 0.08 zT zP + 0.05 sin(pi zv)
double planted_width(const Latents& z);

inline constexpr double kLabelNoiseMm = 0.05;  // std at noise_level 1
inline constexpr double kImageLo = -0.5;
inline constexpr double kImageHi = 1.5;

struct SynthResult {
  Dataset dataset;
  std::vector<Latents> latents;
  std::vector<double> clean_width;
  nlohmann::json ground_truth;
};

/// Held-out count: n_test, or round(27/204 * n_cycles) clamped to [1, n-1].
std::size_t test_count(const SynthConfig& config);

SynthResult generate(const SynthConfig& config, std::uint64_t seed, int jobs = 1);

/// Writes the dataset files plus ground_truth.json.
void write_synth(const std::filesystem::path& dir, const SynthResult& result);

/// Columns zT, zP, zv, zT*zP, sin(pi*zv): the planted function is linear in these.
Eigen::MatrixXd oracle_features(const std::vector<Latents>& latents);

}  // namespace moldline::synth
