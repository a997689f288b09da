#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace moldline {

enum class Channel : int {
  InMoldPressure = 0,
  InMoldTemperature = 1,
  HydraulicPressure = 2,
  ScrewPosition = 3,
};

inline constexpr std::size_t kNumChannels = 4;
inline constexpr std::array<Channel, kNumChannels> kChannels = {
    Channel::InMoldPressure, Channel::InMoldTemperature,
    Channel::HydraulicPressure, Channel::ScrewPosition};

std::string_view channel_name(Channel channel);
std::optional<Channel> parse_channel(std::string_view name);

struct SignalTrace {
  Channel channel = Channel::InMoldPressure;
  std::vector<double> samples;
  double sample_rate_hz = 100.0;

  void validate() const;
};

/// Single-valued (grayscale-equivalent) thermal frame, row-major.
struct ThermoImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  void validate() const;
};

struct CycleRecord {
  std::string cycle_id;
  std::array<SignalTrace, kNumChannels> traces;  // indexed by Channel
  ThermoImage image;
  std::optional<double> width_mm;

  const SignalTrace& trace(Channel c) const { return traces[static_cast<std::size_t>(c)]; }
  SignalTrace& trace(Channel c) { return traces[static_cast<std::size_t>(c)]; }
  void validate() const;
};

struct ManifestEntry {
  std::string cycle_id;
  std::string trace_path;  // relative to the manifest directory
  std::string image_path;
  double image_lo = 0.0;   // intensity mapped to PGM code 0
  double image_hi = 1.0;   // intensity mapped to PGM code 65535
  std::optional<double> width_mm;
};

struct DatasetManifest {
  int schema_version = 1;
  double sample_rate_hz = 100.0;
  std::uint64_t split_seed = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<ManifestEntry> records;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<CycleRecord> records;  // manifest order
};

struct Split {
  std::vector<std::size_t> train;  // ascending record indices
  std::vector<std::size_t> test;
};

inline constexpr int kManifestSchemaVersion = 1;

/// Accepts the manifest file itself or the directory holding manifest.json.
Dataset load_dataset(const std::filesystem::path& manifest_path, int jobs = 1);

DatasetManifest parse_manifest(const std::filesystem::path& manifest_path);

/// Writes manifest.json, cycles/<id>.csv and images/<id>.pgm under dir.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

std::string write_trace_csv(const CycleRecord& record);
std::array<SignalTrace, kNumChannels> parse_trace_csv(std::string_view text,
                                                      const std::string& cycle_id,
                                                      double sample_rate_hz);

/// 16-bit binary PGM (P5, maxval 65535) with linear mapping [lo, hi] -> [0, 65535].
std::string encode_pgm16(const ThermoImage& image, double lo, double hi);
ThermoImage decode_pgm16(std::string_view bytes, double lo, double hi);

/// Snaps intensities onto the 16-bit grid so that write/read is exact.
ThermoImage snap_to_pgm_grid(const ThermoImage& image, double lo, double hi);

/// Seeded uniform partition; deterministic for a fixed seed.
Split split(std::size_t n_records, std::uint64_t seed, std::size_t n_test);
Split split(const DatasetManifest& manifest);

std::vector<double> labels_of(const Dataset& dataset);

}  // namespace moldline
