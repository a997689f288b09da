#include "moldline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "moldline/error.hpp"
#include "moldline/random.hpp"
#include "moldline/text_io.hpp"

namespace moldline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kNumChannels> kChannelNames = {
    "InMoldPressure", "InMoldTemperature", "HydraulicPressure", "ScrewPosition"};

constexpr double kPgmMax = 65535.0;

std::uint16_t to_code(double v, double lo, double hi) {
  double t = (hi > lo) ? (v - lo) / (hi - lo) : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(t * kPgmMax));
}

double from_code(std::uint16_t code, double lo, double hi) {
  return lo + (static_cast<double>(code) / kPgmMax) * (hi - lo);
}

}  // namespace

std::string_view channel_name(Channel channel) {
  return kChannelNames[static_cast<std::size_t>(channel)];
}

std::optional<Channel> parse_channel(std::string_view name) {
  for (std::size_t i = 0; i < kNumChannels; ++i)
    if (kChannelNames[i] == name) return kChannels[i];
  return std::nullopt;
}

void SignalTrace::validate() const {
  if (samples.empty())
    fail(ErrorCode::EmptyTrace, std::string("empty trace for ") + std::string(channel_name(channel)));
  if (!(sample_rate_hz > 0.0)) fail(ErrorCode::InvalidArgument, "sample rate must be positive");
  for (double v : samples)
    if (!std::isfinite(v))
      fail(ErrorCode::MalformedRecord,
           std::string("non-finite sample in ") + std::string(channel_name(channel)));
}

void ThermoImage::validate() const {
  if (width <= 0 || height <= 0) fail(ErrorCode::BadDims, "image dimensions must be positive");
  if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    fail(ErrorCode::BadDims, "pixel count does not match width x height");
  for (double v : pixels)
    if (!std::isfinite(v)) fail(ErrorCode::MalformedRecord, "non-finite pixel");
}

void CycleRecord::validate() const {
  try {
    for (std::size_t i = 0; i < kNumChannels; ++i) {
      if (traces[i].channel != kChannels[i])
        fail(ErrorCode::ChannelMismatch, "trace slot holds the wrong channel");
      traces[i].validate();
    }
    image.validate();
    if (width_mm && !std::isfinite(*width_mm))
      fail(ErrorCode::MalformedRecord, "non-finite width_mm");
  } catch (const Error& e) {
    throw Error(e.code(), "cycle " + cycle_id + ": " + e.what());
  }
}

std::string write_trace_csv(const CycleRecord& record) {
  std::string out;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    if (c) out += ',';
    out += channel_name(kChannels[c]);
  }
  out += '\n';
  std::size_t rows = 0;
  for (const auto& t : record.traces) rows = std::max(rows, t.samples.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      if (c) out += ',';
      const auto& s = record.traces[c].samples;
      if (r < s.size()) out += format_double(s[r]);
    }
    out += '\n';
  }
  return out;
}

std::array<SignalTrace, kNumChannels> parse_trace_csv(std::string_view text,
                                                      const std::string& cycle_id,
                                                      double sample_rate_hz) {
  auto malformed = [&](const std::string& why) {
    fail(ErrorCode::MalformedRecord, "cycle " + cycle_id + ": " + why);
  };
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = text.substr(pos, end - pos);
    pos = end + 1;
    return true;
  };

  std::string_view line;
  if (!next_line(line)) malformed("trace file is empty");
  auto header = split_csv_line(line);
  std::array<int, kNumChannels> column_of{-1, -1, -1, -1};
  for (std::size_t col = 0; col < header.size(); ++col) {
    auto ch = parse_channel(header[col]);
    if (!ch) malformed("unknown channel column '" + std::string(header[col]) + "'");
    auto& slot = column_of[static_cast<std::size_t>(*ch)];
    if (slot >= 0)
      fail(ErrorCode::ChannelMismatch, "cycle " + cycle_id + ": duplicate channel " +
                                           std::string(header[col]));
    slot = static_cast<int>(col);
  }
  for (std::size_t c = 0; c < kNumChannels; ++c)
    if (column_of[c] < 0)
      fail(ErrorCode::ChannelMismatch,
           "cycle " + cycle_id + ": missing channel " + std::string(channel_name(kChannels[c])));

  std::array<SignalTrace, kNumChannels> traces;
  std::array<bool, kNumChannels> ended{};
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    traces[c].channel = kChannels[c];
    traces[c].sample_rate_hz = sample_rate_hz;
  }
  while (next_line(line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) malformed("ragged row in trace file");
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      auto cell = cells[static_cast<std::size_t>(column_of[c])];
      if (cell.empty()) {
        ended[c] = true;
        continue;
      }
      if (ended[c]) malformed("value after padding in " + std::string(channel_name(kChannels[c])));
      double v;
      if (!parse_double(cell, v)) malformed("unparsable number '" + std::string(cell) + "'");
      traces[c].samples.push_back(v);
    }
  }
  return traces;
}

std::string encode_pgm16(const ThermoImage& image, double lo, double hi) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n65535\n";
  out.reserve(out.size() + image.pixels.size() * 2);
  for (double v : image.pixels) {
    auto code = to_code(v, lo, hi);
    out += static_cast<char>(code >> 8);
    out += static_cast<char>(code & 0xff);
  }
  return out;
}

ThermoImage decode_pgm16(std::string_view bytes, double lo, double hi) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != "P5") fail(ErrorCode::MalformedRecord, "not a binary PGM (P5)");
  ThermoImage img;
  try {
    img.width = std::stoi(std::string(token()));
    img.height = std::stoi(std::string(token()));
    if (std::stoi(std::string(token())) != 65535)
      fail(ErrorCode::MalformedRecord, "PGM maxval must be 65535");
  } catch (const std::invalid_argument&) {
    fail(ErrorCode::MalformedRecord, "bad PGM header");
  }
  ++pos;  // single whitespace before raster
  std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (img.width <= 0 || img.height <= 0 || bytes.size() < pos + 2 * n)
    fail(ErrorCode::MalformedRecord, "truncated PGM raster");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto hi_byte = static_cast<unsigned char>(bytes[pos + 2 * i]);
    auto lo_byte = static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    img.pixels[i] = from_code(static_cast<std::uint16_t>((hi_byte << 8) | lo_byte), lo, hi);
  }
  return img;
}

ThermoImage snap_to_pgm_grid(const ThermoImage& image, double lo, double hi) {
  ThermoImage out = image;
  for (auto& v : out.pixels) v = from_code(to_code(v, lo, hi), lo, hi);
  return out;
}

DatasetManifest parse_manifest(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path))
    fail(ErrorCode::MissingFile, "manifest not found: " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedRecord, std::string("manifest is not valid JSON: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.schema_version = doc.at("schema_version").get<int>();
    if (m.schema_version != kManifestSchemaVersion)
      fail(ErrorCode::MalformedRecord,
           "unsupported manifest schema_version " + std::to_string(m.schema_version));
    m.sample_rate_hz = doc.value("sample_rate_hz", 100.0);
    if (doc.contains("split")) {
      const auto& s = doc.at("split");
      m.split_seed = s.value("seed", std::uint64_t{0});
      m.n_train = s.value("n_train", std::size_t{0});
      m.n_test = s.value("n_test", std::size_t{0});
    }
    std::set<std::string> seen;
    for (const auto& r : doc.at("records")) {
      ManifestEntry e;
      e.cycle_id = r.at("cycle_id").get<std::string>();
      if (!seen.insert(e.cycle_id).second)
        fail(ErrorCode::MalformedRecord, "duplicate cycle_id " + e.cycle_id);
      e.trace_path = r.at("trace").get<std::string>();
      e.image_path = r.at("image").get<std::string>();
      const auto& range = r.at("image_range");
      e.image_lo = range.at(0).get<double>();
      e.image_hi = range.at(1).get<double>();
      if (r.contains("width_mm") && !r.at("width_mm").is_null())
        e.width_mm = r.at("width_mm").get<double>();
      m.records.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedRecord, std::string("manifest field error: ") + e.what());
  }
  if (m.records.empty()) fail(ErrorCode::MalformedRecord, "manifest lists no records");
  if (m.n_train + m.n_test == 0) {
    m.n_test = 0;
    m.n_train = m.records.size();
  }
  if (m.n_train + m.n_test != m.records.size())
    fail(ErrorCode::MalformedRecord, "n_train + n_test does not equal the record count");
  return m;
}

namespace {

CycleRecord load_record(const fs::path& root, const ManifestEntry& e, double rate) {
  auto trace_file = root / e.trace_path;
  auto image_file = root / e.image_path;
  if (!fs::exists(trace_file))
    fail(ErrorCode::MissingFile, "cycle " + e.cycle_id + ": missing " + trace_file.string());
  if (!fs::exists(image_file))
    fail(ErrorCode::MissingFile, "cycle " + e.cycle_id + ": missing " + image_file.string());
  CycleRecord rec;
  rec.cycle_id = e.cycle_id;
  rec.traces = parse_trace_csv(read_file(trace_file), e.cycle_id, rate);
  try {
    rec.image = decode_pgm16(read_file(image_file), e.image_lo, e.image_hi);
  } catch (const Error& err) {
    throw Error(err.code(), "cycle " + e.cycle_id + ": " + err.what());
  }
  rec.width_mm = e.width_mm;
  rec.validate();
  return rec;
}

}  // namespace

Dataset load_dataset(const fs::path& manifest_path, int jobs) {
  fs::path path = manifest_path;
  if (fs::is_directory(path)) path /= "manifest.json";
  Dataset ds;
  ds.manifest = parse_manifest(path);
  const fs::path root = path.parent_path();
  const auto& entries = ds.manifest.records;
  ds.records.resize(entries.size());

  const std::size_t workers = std::clamp<std::size_t>(jobs < 1 ? 1 : jobs, 1, entries.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < entries.size(); ++i)
      ds.records[i] = load_record(root, entries[i], ds.manifest.sample_rate_hz);
    return ds;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < entries.size(); i += workers)
          ds.records[i] = load_record(root, entries[i], ds.manifest.sample_rate_hz);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return ds;
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir / "cycles");
  fs::create_directories(dir / "images");
  const auto& m = dataset.manifest;
  if (m.records.size() != dataset.records.size())
    fail(ErrorCode::InvalidArgument, "manifest and record count differ");
  json doc;
  doc["schema_version"] = kManifestSchemaVersion;
  doc["sample_rate_hz"] = m.sample_rate_hz;
  doc["split"] = {{"seed", m.split_seed}, {"n_train", m.n_train}, {"n_test", m.n_test}};
  json records = json::array();
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& rec = dataset.records[i];
    const auto& e = m.records[i];
    write_file(dir / e.trace_path, write_trace_csv(rec));
    write_file(dir / e.image_path, encode_pgm16(rec.image, e.image_lo, e.image_hi));
    json r = {{"cycle_id", e.cycle_id},
              {"trace", e.trace_path},
              {"image", e.image_path},
              {"image_range", {e.image_lo, e.image_hi}}};
    r["width_mm"] = e.width_mm ? json(*e.width_mm) : json(nullptr);
    records.push_back(std::move(r));
  }
  doc["records"] = std::move(records);
  write_file(dir / "manifest.json", doc.dump(2) + "\n");
}

Split split(std::size_t n_records, std::uint64_t seed, std::size_t n_test) {
  if (n_test == 0 || n_test >= n_records)
    fail(ErrorCode::BadSplitSize, "n_test must satisfy 0 < n_test < " + std::to_string(n_records) +
                                      " (got " + std::to_string(n_test) + ")");
  std::vector<std::size_t> order(n_records);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  // Fisher-Yates with an explicit draw so the partition does not depend on std::shuffle.
  for (std::size_t i = n_records - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  Split s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

Split split(const DatasetManifest& manifest) {
  return split(manifest.records.size(), manifest.split_seed, manifest.n_test);
}

std::vector<double> labels_of(const Dataset& dataset) {
  std::vector<double> y;
  y.reserve(dataset.records.size());
  for (const auto& r : dataset.records) {
    if (!r.width_mm) fail(ErrorCode::MalformedRecord, "cycle " + r.cycle_id + " has no width_mm label");
    y.push_back(*r.width_mm);
  }
  return y;
}

}  // namespace moldline
