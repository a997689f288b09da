#include "moldline/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include "moldline/error.hpp"
#include "moldline/random.hpp"
#include "moldline/text_io.hpp"

namespace moldline {

std::string_view source_name(DescriptorSource s) {
  switch (s) {
    case DescriptorSource::SignalRaw: return "SignalRaw";
    case DescriptorSource::SignalCwtPeaks: return "SignalCwtPeaks";
    case DescriptorSource::Image: return "Image";
  }
  return "?";
}

std::string DescriptorManifest::hash() const {
  std::uint64_t h = fnv1a("");
  for (const auto& e : entries) {
    h = fnv1a(e.name, h);
    h = fnv1a("|", h);
    h = fnv1a(source_name(e.source), h);
    h = fnv1a(";", h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::optional<std::size_t> DescriptorManifest::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return i;
  return std::nullopt;
}

std::vector<std::string> DescriptorManifest::names() const {
  std::vector<std::string> n;
  for (const auto& e : entries) n.push_back(e.name);
  return n;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(sorted.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  return frac == 0.0 ? sorted[lo] : sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

OrderStats order_stats(std::span<const double> values) {
  if (values.size() < 2) fail(ErrorCode::TooFewValues, "order statistics need at least 2 values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(values.size());

  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;

  OrderStats s;
  const double lo = sorted.front();
  const double hi = sorted.back();
  if (hi == lo) {
    mean = lo;
    m2 = 0.0;
  }
  double mode = lo;
  if (hi > lo) {
    const auto bins = static_cast<std::size_t>(std::ceil(std::sqrt(n)));
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::size_t> counts(bins, 0);
    for (double v : values)
      ++counts[std::min(bins - 1, static_cast<std::size_t>((v - lo) / width))];
    const auto best = static_cast<std::size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    mode = lo + (static_cast<double>(best) + 0.5) * width;
  }

  double skew = 0.0, kurt = 0.0;
  if (m2 > 0.0) {
    skew = m3 / std::pow(m2, 1.5);
    kurt = m4 / (m2 * m2) - 3.0;
  } else {
    s.zero_variance = true;
  }
  s.values = {mean,
              quantile_sorted(sorted, 0.5),
              std::sqrt(m2),
              lo,
              hi,
              quantile_sorted(sorted, 0.75),
              quantile_sorted(sorted, 0.90),
              mode,
              skew,
              kurt};
  return s;
}

DescriptorManifest make_manifest(const DescriptorConfig& config) {
  DescriptorManifest m;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    const Channel ch = kChannels[c];
    const std::string prefix(channel_name(ch));
    for (auto stat : kOrderStatNames)
      m.entries.push_back({prefix + "." + std::string(stat), DescriptorSource::SignalRaw, ch});
    if (!config.cwt_channels[c]) continue;
    m.entries.push_back({prefix + ".peaks.count", DescriptorSource::SignalCwtPeaks, ch});
    for (auto stat : kOrderStatNames)
      m.entries.push_back({prefix + ".peaks." + std::string(stat), DescriptorSource::SignalCwtPeaks, ch});
    if (config.include_peak_positions)
      for (auto stat : kOrderStatNames)
        m.entries.push_back(
            {prefix + ".peaks.pos." + std::string(stat), DescriptorSource::SignalCwtPeaks, ch});
  }
  for (auto stat : kOrderStatNames)
    m.entries.push_back({"img." + std::string(stat), DescriptorSource::Image, std::nullopt});
  for (auto name : haralick::kFeatureNames)
    m.entries.push_back(
        {"img.haralick." + std::string(name), DescriptorSource::Image, std::nullopt});
  return m;
}

ChannelPeaks detect_peaks(const CycleRecord& record, const DescriptorConfig& config) {
  ChannelPeaks peaks;
  for (std::size_t c = 0; c < kNumChannels; ++c)
    if (config.cwt_channels[c])
      peaks[c] = cwt::find_peaks_cwt(record.traces[c].samples, config.peaks);
  return peaks;
}

namespace {

void push_stats(DescriptorRow& out, std::span<const double> values) {
  if (values.size() < 2) {
    for (std::size_t k = 0; k < kNumOrderStats; ++k) out.push(0.0, true);
    return;
  }
  for (double v : order_stats(values).values) out.push(v);
}

}  // namespace

void signal_descriptors(const CycleRecord& record, const ChannelPeaks& peaks,
                        const DescriptorConfig& config, DescriptorRow& out) {
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    push_stats(out, record.traces[c].samples);
    if (!config.cwt_channels[c]) continue;
    const auto& pk = peaks[c];
    out.push(static_cast<double>(pk.size()));
    std::vector<double> heights, positions;
    for (const auto& p : pk) {
      heights.push_back(p.height);
      positions.push_back(static_cast<double>(p.index));
    }
    push_stats(out, heights);
    if (config.include_peak_positions) push_stats(out, positions);
  }
}

void image_descriptors(const ThermoImage& image, const DescriptorConfig& config,
                       DescriptorRow& out) {
  for (double v : order_stats(image.pixels).values) out.push(v);
  const auto q = haralick::quantize(image, config.glcm_levels);
  for (double v : haralick::averaged_features(q, config.glcm_offsets).values) out.push(v);
}

DescriptorRow extract_descriptors(const CycleRecord& record, const DescriptorConfig& config) {
  DescriptorRow row;
  try {
    signal_descriptors(record, detect_peaks(record, config), config, row);
    image_descriptors(record.image, config, row);
  } catch (const Error& e) {
    throw Error(e.code(), "cycle " + record.cycle_id + ": " + e.what());
  }
  return row;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> cols) const {
  FeatureMatrix out;
  for (auto c : cols) out.columns.entries.push_back(columns.entries.at(c));
  out.cycle_ids = cycle_ids;
  out.values.reserve(n_rows() * cols.size());
  out.imputed.reserve(n_rows() * cols.size());
  for (std::size_t r = 0; r < n_rows(); ++r)
    for (auto c : cols) {
      out.values.push_back(values[r * n_cols() + c]);
      out.imputed.push_back(imputed[r * n_cols() + c]);
    }
  return out;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.columns = columns;
  const std::size_t p = n_cols();
  for (auto r : rows) {
    out.cycle_ids.push_back(cycle_ids.at(r));
    out.values.insert(out.values.end(), values.begin() + static_cast<std::ptrdiff_t>(r * p),
                      values.begin() + static_cast<std::ptrdiff_t>((r + 1) * p));
    out.imputed.insert(out.imputed.end(), imputed.begin() + static_cast<std::ptrdiff_t>(r * p),
                       imputed.begin() + static_cast<std::ptrdiff_t>((r + 1) * p));
  }
  return out;
}

Eigen::MatrixXd FeatureMatrix::to_eigen() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n_rows()), static_cast<Eigen::Index>(n_cols()));
  for (std::size_t r = 0; r < n_rows(); ++r)
    for (std::size_t c = 0; c < n_cols(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = at(r, c);
  return m;
}

FeatureMatrix build_feature_matrix(std::span<const CycleRecord> records,
                                   const DescriptorConfig& config, int jobs) {
  FeatureMatrix fm;
  fm.columns = make_manifest(config);
  const std::size_t n = records.size();
  std::vector<DescriptorRow> rows(n);
  const std::size_t workers = std::clamp<std::size_t>(jobs < 1 ? 1 : jobs, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) rows[i] = extract_descriptors(records[i], config);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) rows[i] = extract_descriptors(records[i], config);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].values.size() != fm.n_cols())
      fail(ErrorCode::ShapeMismatch, "cycle " + records[i].cycle_id +
                                         ": descriptor row does not match the manifest");
    fm.cycle_ids.push_back(records[i].cycle_id);
    fm.values.insert(fm.values.end(), rows[i].values.begin(), rows[i].values.end());
    fm.imputed.insert(fm.imputed.end(), rows[i].imputed.begin(), rows[i].imputed.end());
  }
  return fm;
}

std::string write_features_csv(const FeatureMatrix& fm) {
  std::string out = "cycle_id";
  for (const auto& e : fm.columns.entries) out += "," + e.name;
  out += '\n';
  for (std::size_t r = 0; r < fm.n_rows(); ++r) {
    out += fm.cycle_ids[r];
    for (std::size_t c = 0; c < fm.n_cols(); ++c) {
      out += ',';
      if (!fm.imputed[r * fm.n_cols() + c]) out += format_double(fm.at(r, c));
    }
    out += '\n';
  }
  return out;
}

namespace {

DescriptorEntry entry_from_name(const std::string& name) {
  if (name.rfind("img.", 0) == 0) return {name, DescriptorSource::Image, std::nullopt};
  auto dot = name.find('.');
  auto ch = parse_channel(std::string_view(name).substr(0, dot));
  if (!ch || dot == std::string::npos)
    fail(ErrorCode::MalformedRecord, "unrecognised descriptor column '" + name + "'");
  const bool peaks = name.find(".peaks.") != std::string::npos;
  return {name, peaks ? DescriptorSource::SignalCwtPeaks : DescriptorSource::SignalRaw, ch};
}

}  // namespace

FeatureMatrix read_features_csv(std::string_view text) {
  FeatureMatrix fm;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (header) {
      if (cells.empty() || cells[0] != "cycle_id")
        fail(ErrorCode::MalformedRecord, "features.csv must start with a cycle_id column");
      for (std::size_t c = 1; c < cells.size(); ++c)
        fm.columns.entries.push_back(entry_from_name(std::string(cells[c])));
      header = false;
      continue;
    }
    if (cells.size() != fm.n_cols() + 1)
      fail(ErrorCode::MalformedRecord, "ragged row in features.csv");
    fm.cycle_ids.emplace_back(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (cells[c].empty()) {
        fm.values.push_back(0.0);
        fm.imputed.push_back(1);
        continue;
      }
      double v;
      if (!parse_double(cells[c], v))
        fail(ErrorCode::MalformedRecord, "cycle " + std::string(cells[0]) + ": bad number '" +
                                             std::string(cells[c]) + "'");
      fm.values.push_back(v);
      fm.imputed.push_back(0);
    }
  }
  return fm;
}

std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::Signals: return "signals";
    case Regime::Thermo: return "thermo";
    case Regime::Both: return "both";
  }
  return "?";
}

std::optional<Regime> parse_regime(std::string_view name) {
  if (name == "signals") return Regime::Signals;
  if (name == "thermo") return Regime::Thermo;
  if (name == "both") return Regime::Both;
  return std::nullopt;
}

std::vector<std::size_t> regime_columns(const DescriptorManifest& m, Regime r) {
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const bool image = m.entries[i].source == DescriptorSource::Image;
    if (r == Regime::Both || (r == Regime::Thermo && image) || (r == Regime::Signals && !image))
      cols.push_back(i);
  }
  return cols;
}

}  // namespace moldline
