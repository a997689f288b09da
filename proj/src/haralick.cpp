#include "moldline/haralick.hpp"

#include <algorithm>
#include <cmath>

#include "moldline/error.hpp"

namespace moldline::haralick {

namespace {

double xlogx_sum(const std::vector<double>& v) {
  double h = 0.0;
  for (double x : v)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

}  // namespace

QuantizedImage quantize(const ThermoImage& image, int levels) {
  if (levels < 2) fail(ErrorCode::InvalidArgument, "quantization needs at least 2 levels");
  QuantizedImage q;
  q.width = image.width;
  q.height = image.height;
  q.levels = levels;
  q.values.assign(image.pixels.size(), 0);
  if (image.pixels.empty()) return q;
  auto [mn_it, mx_it] = std::minmax_element(image.pixels.begin(), image.pixels.end());
  const double lo = *mn_it;
  const double range = *mx_it - lo;
  if (!(range > 0.0)) return q;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    double t = (image.pixels[i] - lo) / range * levels;
    q.values[i] = std::clamp(static_cast<int>(std::floor(t)), 0, levels - 1);
  }
  return q;
}

std::vector<Offset> default_offsets() { return {{0, 1}, {1, 0}, {1, 1}, {1, -1}}; }

Glcm glcm(const QuantizedImage& image, const std::vector<Offset>& offsets) {
  if (offsets.empty()) fail(ErrorCode::InvalidArgument, "glcm needs at least one offset");
  const int g = image.levels;
  Glcm out;
  out.levels = g;
  out.p.assign(static_cast<std::size_t>(g) * g, 0.0);
  double total = 0.0;
  for (auto [dy, dx] : offsets) {
    std::size_t pairs = 0;
    for (int y = 0; y < image.height; ++y) {
      int y2 = y + dy;
      if (y2 < 0 || y2 >= image.height) continue;
      for (int x = 0; x < image.width; ++x) {
        int x2 = x + dx;
        if (x2 < 0 || x2 >= image.width) continue;
        int a = image.at(y, x);
        int b = image.at(y2, x2);
        out.p[static_cast<std::size_t>(a) * g + b] += 1.0;
        out.p[static_cast<std::size_t>(b) * g + a] += 1.0;
        ++pairs;
      }
    }
    if (pairs == 0)
      fail(ErrorCode::NoValidPairs, "offset (" + std::to_string(dy) + "," + std::to_string(dx) +
                                        ") yields no pixel pairs");
    total += 2.0 * static_cast<double>(pairs);
  }
  for (auto& v : out.p) v /= total;
  return out;
}

std::vector<double> q_similarity_matrix(const Glcm& g, std::size_t& dim) {
  const int n = g.levels;
  std::vector<double> px(static_cast<std::size_t>(n), 0.0), py(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      px[static_cast<std::size_t>(i)] += g.at(i, j);
      py[static_cast<std::size_t>(j)] += g.at(i, j);
    }
  std::vector<int> support;
  for (int i = 0; i < n; ++i)
    if (px[static_cast<std::size_t>(i)] > 0.0) support.push_back(i);
  dim = support.size();
  std::vector<double> s(dim * dim, 0.0);
  for (std::size_t a = 0; a < dim; ++a)
    for (std::size_t b = a; b < dim; ++b) {
      const int i = support[a];
      const int j = support[b];
      double acc = 0.0;
      for (int k = 0; k < n; ++k)
        if (py[static_cast<std::size_t>(k)] > 0.0)
          acc += g.at(i, k) * g.at(j, k) / py[static_cast<std::size_t>(k)];
      acc /= std::sqrt(px[static_cast<std::size_t>(i)] * px[static_cast<std::size_t>(j)]);
      s[a * dim + b] = acc;
      s[b * dim + a] = acc;
    }
  return s;
}

std::vector<double> symmetric_eigenvalues(std::vector<double> a, std::size_t dim, double tol,
                                          bool& converged) {
  converged = false;
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        if (i != j) s += a[i * dim + j] * a[i * dim + j];
    return std::sqrt(s);
  };
  for (int sweep = 0; sweep < 100; ++sweep) {
    if (off_norm() < tol) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < dim; ++p)
      for (std::size_t q = p + 1; q < dim; ++q) {
        const double apq = a[p * dim + q];
        if (apq == 0.0) continue;
        const double app = a[p * dim + p];
        const double aqq = a[q * dim + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < dim; ++k) {
          const double akp = a[k * dim + p];
          const double akq = a[k * dim + q];
          a[k * dim + p] = c * akp - s * akq;
          a[k * dim + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < dim; ++k) {
          const double apk = a[p * dim + k];
          const double aqk = a[q * dim + k];
          a[p * dim + k] = c * apk - s * aqk;
          a[q * dim + k] = s * apk + c * aqk;
        }
      }
  }
  if (!converged && off_norm() < tol) converged = true;
  std::vector<double> ev(dim);
  for (std::size_t i = 0; i < dim; ++i) ev[i] = a[i * dim + i];
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

Features features(const Glcm& g) {
  const int n = g.levels;
  const auto N = static_cast<std::size_t>(n);
  std::vector<double> px(N, 0.0), py(N, 0.0), psum(2 * N - 1, 0.0), pdiff(N, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double p = g.at(i, j);
      px[static_cast<std::size_t>(i)] += p;
      py[static_cast<std::size_t>(j)] += p;
      psum[static_cast<std::size_t>(i + j)] += p;
      pdiff[static_cast<std::size_t>(std::abs(i - j))] += p;
    }

  // Gray tones are indexed 1..levels.
  double mux = 0.0, muy = 0.0;
  for (int i = 0; i < n; ++i) {
    mux += (i + 1) * px[static_cast<std::size_t>(i)];
    muy += (i + 1) * py[static_cast<std::size_t>(i)];
  }
  double varx = 0.0, vary = 0.0;
  for (int i = 0; i < n; ++i) {
    varx += (i + 1 - mux) * (i + 1 - mux) * px[static_cast<std::size_t>(i)];
    vary += (i + 1 - muy) * (i + 1 - muy) * py[static_cast<std::size_t>(i)];
  }

  Features f;
  double energy = 0.0, cov = 0.0, variance = 0.0, idm = 0.0, entropy = 0.0, hxy1 = 0.0,
         hxy2 = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double p = g.at(i, j);
      const double pi = px[static_cast<std::size_t>(i)];
      const double pj = py[static_cast<std::size_t>(j)];
      energy += p * p;
      cov += (i + 1 - mux) * (j + 1 - muy) * p;
      variance += (i + 1 - mux) * (i + 1 - mux) * p;
      idm += p / (1.0 + static_cast<double>((i - j) * (i - j)));
      if (p > 0.0) {
        entropy -= p * std::log(p);
        hxy1 -= p * std::log(pi * pj);
      }
      if (pi * pj > 0.0) hxy2 -= pi * pj * std::log(pi * pj);
    }

  double contrast = 0.0;
  double diff_mean = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    contrast += static_cast<double>(k * k) * pdiff[k];
    diff_mean += static_cast<double>(k) * pdiff[k];
  }
  double diff_var = 0.0;
  for (std::size_t k = 0; k < N; ++k)
    diff_var += (static_cast<double>(k) - diff_mean) * (static_cast<double>(k) - diff_mean) * pdiff[k];

  double sum_avg = 0.0;
  for (std::size_t k = 0; k < psum.size(); ++k) sum_avg += static_cast<double>(k + 2) * psum[k];
  double sum_var = 0.0;
  for (std::size_t k = 0; k < psum.size(); ++k)
    sum_var += (static_cast<double>(k + 2) - sum_avg) * (static_cast<double>(k + 2) - sum_avg) * psum[k];

  const double sum_entropy = xlogx_sum(psum);
  const double diff_entropy = xlogx_sum(pdiff);
  const double hx = xlogx_sum(px);
  const double hy = xlogx_sum(py);

  double correlation = 0.0;
  const double sxsy = std::sqrt(varx * vary);
  if (sxsy > 0.0) {
    correlation = cov / sxsy;
  } else {
    f.degenerate_correlation = true;
  }

  const double hmax = std::max(hx, hy);
  const double imc1 = hmax > 0.0 ? (entropy - hxy1) / hmax : 0.0;
  const double imc2 = std::sqrt(std::max(0.0, 1.0 - std::exp(-2.0 * (hxy2 - entropy))));

  std::size_t dim = 0;
  auto q = q_similarity_matrix(g, dim);
  double mcc = 0.0;
  if (dim >= 2) {
    bool converged = false;
    auto ev = symmetric_eigenvalues(std::move(q), dim, 1e-10, converged);
    mcc = std::sqrt(std::max(0.0, ev[1]));
    f.mcc_not_converged = !converged;
  }

  f.values = {energy,      contrast,  correlation, variance,     idm,
              sum_avg,     sum_var,   sum_entropy, entropy,      diff_var,
              diff_entropy, imc1,     imc2,        mcc};
  return f;
}

Features averaged_features(const QuantizedImage& image, const std::vector<Offset>& offsets) {
  Features avg;
  for (const auto& off : offsets) {
    auto f = features(glcm(image, {off}));
    for (std::size_t k = 0; k < kNumFeatures; ++k) avg.values[k] += f.values[k];
    avg.degenerate_correlation |= f.degenerate_correlation;
    avg.mcc_not_converged |= f.mcc_not_converged;
  }
  for (auto& v : avg.values) v /= static_cast<double>(offsets.size());
  return avg;
}

}  // namespace moldline::haralick
