#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "moldline/cwt.hpp"
#include "moldline/dataset.hpp"
#include "moldline/haralick.hpp"

namespace moldline {

enum class DescriptorSource { SignalRaw, SignalCwtPeaks, Image };

std::string_view source_name(DescriptorSource s);

struct DescriptorEntry {
  std::string name;
  DescriptorSource source = DescriptorSource::SignalRaw;
  std::optional<Channel> channel;

  bool operator==(const DescriptorEntry&) const = default;
};

struct DescriptorManifest {
  std::vector<DescriptorEntry> entries;

  std::size_t size() const { return entries.size(); }
  /// 16 hex digits of FNV-1a over names and sources, in order.
  std::string hash() const;
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::vector<std::string> names() const;

  bool operator==(const DescriptorManifest&) const = default;
};

inline constexpr std::size_t kNumOrderStats = 10;
inline constexpr std::array<std::string_view, kNumOrderStats> kOrderStatNames = {
    "mean", "median", "std", "min", "max", "q75", "q90", "mode", "skewness", "kurtosis"};

struct OrderStats {
  std::array<double, kNumOrderStats> values{};
  bool zero_variance = false;  // skewness and kurtosis forced to 0

  double mean() const { return values[0]; }
  double median() const { return values[1]; }
  double std() const { return values[2]; }
  double min() const { return values[3]; }
  double max() const { return values[4]; }
  double q75() const { return values[5]; }
  double q90() const { return values[6]; }
  double mode() const { return values[7]; }
  double skewness() const { return values[8]; }
  double kurtosis() const { return values[9]; }
};

/// Linear interpolation between closest ranks (position q * (N - 1)).
double quantile_sorted(std::span<const double> sorted, double q);

OrderStats order_stats(std::span<const double> values);

struct DescriptorConfig {
  cwt::PeakParams peaks = cwt::PeakParams::defaults();
  std::array<bool, kNumChannels> cwt_channels{true, true, true, true};
  bool include_peak_positions = false;
  int glcm_levels = 8;
  std::vector<haralick::Offset> glcm_offsets = haralick::default_offsets();
};

DescriptorManifest make_manifest(const DescriptorConfig& config);

struct DescriptorRow {
  std::vector<double> values;
  std::vector<unsigned char> imputed;

  void push(double v, bool is_imputed = false) {
    values.push_back(v);
    imputed.push_back(is_imputed ? 1 : 0);
  }
};

using ChannelPeaks = std::array<std::vector<cwt::Peak>, kNumChannels>;

ChannelPeaks detect_peaks(const CycleRecord& record, const DescriptorConfig& config);

/// Per channel: raw order stats, peak count, peak-height order stats (and
/// optionally peak-position order stats). Fewer than 2 peaks -> zeros flagged
/// as imputed.
void signal_descriptors(const CycleRecord& record, const ChannelPeaks& peaks,
                        const DescriptorConfig& config, DescriptorRow& out);

/// Pixel order stats followed by the 14 averaged Haralick features.
void image_descriptors(const ThermoImage& image, const DescriptorConfig& config,
                       DescriptorRow& out);

DescriptorRow extract_descriptors(const CycleRecord& record, const DescriptorConfig& config);

struct FeatureMatrix {
  DescriptorManifest columns;
  std::vector<std::string> cycle_ids;
  std::vector<double> values;          // row-major n_rows x n_cols
  std::vector<unsigned char> imputed;  // same layout

  std::size_t n_rows() const { return cycle_ids.size(); }
  std::size_t n_cols() const { return columns.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * n_cols() + c]; }
  std::string manifest_hash() const { return columns.hash(); }

  FeatureMatrix select_columns(std::span<const std::size_t> cols) const;
  FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
  Eigen::MatrixXd to_eigen() const;
};

FeatureMatrix build_feature_matrix(std::span<const CycleRecord> records,
                                   const DescriptorConfig& config, int jobs = 1);

/// cycle_id column then one column per descriptor; imputed cells are empty.
std::string write_features_csv(const FeatureMatrix& fm);
FeatureMatrix read_features_csv(std::string_view text);

enum class Regime { Signals, Thermo, Both };
std::string_view regime_name(Regime r);
std::optional<Regime> parse_regime(std::string_view name);
std::vector<std::size_t> regime_columns(const DescriptorManifest& m, Regime r);

}  // namespace moldline
