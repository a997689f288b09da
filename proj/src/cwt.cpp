#include "moldline/cwt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "moldline/error.hpp"

namespace moldline::cwt {

std::vector<double> ricker(int points, double width) {
  if (!(width > 0.0) || !std::isfinite(width))
    fail(ErrorCode::BadWidth, "ricker width must be positive");
  if (points < 3 || points % 2 == 0)
    fail(ErrorCode::InvalidArgument, "ricker needs an odd number of points >= 3");
  const double amp = 2.0 / (std::sqrt(3.0 * width) * std::pow(std::numbers::pi, 0.25));
  const double wsq = width * width;
  const int half = points / 2;
  std::vector<double> w(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) {
    double t = static_cast<double>(k - half);
    double tsq = t * t;
    w[static_cast<std::size_t>(k)] = amp * (1.0 - tsq / wsq) * std::exp(-tsq / (2.0 * wsq));
  }
  return w;
}

int support_points(double scale) { return 2 * static_cast<int>(std::ceil(8.0 * scale)) + 1; }

std::vector<double> default_scales() {
  std::vector<double> s;
  for (int i = 1; i <= 32; ++i) s.push_back(i);
  return s;
}

PeakParams PeakParams::defaults() {
  PeakParams p;
  p.scales = default_scales();
  return p;
}

CwtMatrix cwt_transform(std::span<const double> signal, std::span<const double> scales) {
  if (scales.empty()) fail(ErrorCode::InvalidArgument, "cwt needs at least one scale");
  double max_scale = *std::max_element(scales.begin(), scales.end());
  for (double s : scales)
    if (!(s > 0.0)) fail(ErrorCode::BadWidth, "cwt scales must be positive");
  const int needed = support_points(max_scale);
  if (signal.size() < static_cast<std::size_t>(needed))
    fail(ErrorCode::SignalTooShort, "signal of " + std::to_string(signal.size()) +
                                        " samples is shorter than the largest wavelet support (" +
                                        std::to_string(needed) + ")");
  CwtMatrix m;
  m.scales.assign(scales.begin(), scales.end());
  m.n_samples = signal.size();
  m.coefficients.assign(scales.size() * signal.size(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(signal.size());
  for (std::size_t r = 0; r < scales.size(); ++r) {
    const int pts = support_points(scales[r]);
    const auto kernel = ricker(pts, scales[r]);
    const std::ptrdiff_t half = pts / 2;
    double* out = m.coefficients.data() + r * signal.size();
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      // Even kernel: convolution and correlation coincide.
      std::ptrdiff_t k_lo = std::max<std::ptrdiff_t>(0, half - i);
      std::ptrdiff_t k_hi = std::min<std::ptrdiff_t>(pts - 1, n - 1 - i + half);
      double acc = 0.0;
      const double* x = signal.data() + (i - half);
      for (std::ptrdiff_t k = k_lo; k <= k_hi; ++k) acc += kernel[static_cast<std::size_t>(k)] * x[k];
      out[i] = acc;
    }
  }
  return m;
}

namespace {

struct Ridge {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  int gap = 0;
};

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(v.size() - 1, lo + 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

std::vector<Peak> find_peaks_cwt(std::span<const double> signal, const PeakParams& params) {
  if (params.scales.empty()) fail(ErrorCode::InvalidArgument, "peak search needs scales");
  if (!std::is_sorted(params.scales.begin(), params.scales.end()))
    fail(ErrorCode::InvalidArgument, "peak search scales must be ascending");
  const auto m = cwt_transform(signal, params.scales);
  const std::size_t n = m.n_samples;
  const std::size_t n_rows = m.scales.size();

  double gmax = 0.0;
  for (double c : m.coefficients) gmax = std::max(gmax, std::abs(c));
  if (gmax == 0.0) return {};
  const double floor_level = 1e-9 * gmax;

  std::vector<std::vector<std::size_t>> maxima(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) {
    auto row = m.row(r);
    for (std::size_t i = 1; i + 1 < n; ++i)
      if (row[i] > row[i - 1] && row[i] >= row[i + 1] && row[i] > floor_level)
        maxima[r].push_back(i);
  }

  // Link maxima from the coarsest scale down to the finest.
  std::vector<Ridge> active;
  std::vector<Ridge> done;
  for (std::size_t step = 0; step < n_rows; ++step) {
    const std::size_t r = n_rows - 1 - step;
    const auto max_dist =
        static_cast<std::size_t>(std::max(1.0, std::ceil(m.scales[r] / 4.0)));
    std::vector<bool> extended(active.size(), false);
    std::vector<Ridge> born;
    for (std::size_t col : maxima[r]) {
      std::size_t best = active.size();
      std::size_t best_dist = std::numeric_limits<std::size_t>::max();
      for (std::size_t a = 0; a < active.size(); ++a) {
        if (extended[a]) continue;
        std::size_t last = active[a].cols.back();
        std::size_t d = last > col ? last - col : col - last;
        if (d > max_dist) continue;
        // Tie toward the ridge sitting at the smaller index.
        if (d < best_dist || (d == best_dist && last < active[best].cols.back())) {
          best = a;
          best_dist = d;
        }
      }
      if (best < active.size()) {
        active[best].rows.push_back(r);
        active[best].cols.push_back(col);
        active[best].gap = 0;
        extended[best] = true;
      } else {
        born.push_back(Ridge{{r}, {col}, 0});
      }
    }
    std::vector<Ridge> keep;
    for (std::size_t a = 0; a < active.size(); ++a) {
      if (!extended[a]) ++active[a].gap;
      if (active[a].gap > params.gap_thresh)
        done.push_back(std::move(active[a]));
      else
        keep.push_back(std::move(active[a]));
    }
    for (auto& b : born) keep.push_back(std::move(b));
    active = std::move(keep);
  }
  for (auto& a : active) done.push_back(std::move(a));

  const std::size_t min_len = params.min_ridge_length > 0
                                  ? static_cast<std::size_t>(params.min_ridge_length)
                                  : (n_rows + 3) / 4;
  const auto edge = static_cast<std::size_t>(std::ceil(m.scales.back()));
  const auto row0 = m.row(0);
  const std::size_t half_window = static_cast<std::size_t>(std::max(1, params.noise_window / 2));

  std::vector<Peak> peaks;
  for (const auto& ridge : done) {
    if (ridge.rows.size() < min_len) continue;
    const std::size_t idx = ridge.cols.back();
    if (idx < edge || idx + edge >= n) continue;
    std::size_t lo = idx > half_window ? idx - half_window : 0;
    std::size_t hi = std::min(n - 1, idx + half_window);
    std::vector<double> window;
    window.reserve(hi - lo + 1);
    for (std::size_t i = lo; i <= hi; ++i) window.push_back(std::abs(row0[i]));
    const double noise = percentile(std::move(window), params.noise_percentile);
    const double numer = std::abs(row0[idx]);
    double snr = noise > 0.0 ? numer / noise
                             : (numer > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    if (!(snr >= params.min_snr)) continue;

    std::size_t best_row = ridge.rows.front();
    double best_coef = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < ridge.rows.size(); ++k) {
      double c = m.at(ridge.rows[k], ridge.cols[k]);
      if (c > best_coef) {
        best_coef = c;
        best_row = ridge.rows[k];
      }
    }
    peaks.push_back(Peak{idx, m.scales[best_row], snr, signal[idx]});
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    return a.index != b.index ? a.index < b.index : a.snr > b.snr;
  });
  peaks.erase(std::unique(peaks.begin(), peaks.end(),
                          [](const Peak& a, const Peak& b) { return a.index == b.index; }),
              peaks.end());
  return peaks;
}

}  // namespace moldline::cwt
