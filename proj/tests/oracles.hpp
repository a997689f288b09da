#pragma once
// Independent reference implementations used by the unit tests and the
// acceptance runner. Nothing here calls into the code under test except to
// drive it (layers are perturbed through their public Params).

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "moldline/haralick.hpp"
#include "moldline/lstm.hpp"
#include "moldline/nn/layers.hpp"
#include "moldline/nn/loss.hpp"
#include "moldline/random.hpp"

namespace oracle {

using moldline::Rng;

inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradTol = 1e-4;

// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero
// up to rounding from turning cancellation noise into a huge ratio.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = moldline::normal(rng, 0.0, scale);
  return v;
}

struct GradReport {
  double max_rel = 0.0;
  std::size_t checked = 0;
  void add(double analytic, double numeric) {
    max_rel = std::max(max_rel, rel_error(analytic, numeric));
    ++checked;
  }
};

// Gradient check of one layer with scalar objective sum(r * forward(x)).
// `seed_forward` pins stochastic layers (dropout) to the same mask on every pass.
inline GradReport check_layer(moldline::nn::Layer& layer, moldline::nn::Tensor x, std::uint64_t seed_forward,
                              Rng& rng) {
  using moldline::nn::Tensor;
  auto run = [&](const Tensor& in) {
    Rng fr(seed_forward);
    return layer.forward(in, true, fr);
  };
  Tensor out = run(x);
  const auto r = random_vector(out.size(), rng);
  auto objective = [&](const Tensor& in) {
    Tensor o = run(in);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += r[i] * o[i];
    return s;
  };

  for (auto* p : layer.params()) p->zero_grad();
  out = run(x);
  Tensor grad_out(out.shape, std::vector<double>(r));
  const Tensor dx = layer.backward(grad_out);
  std::vector<moldline::nn::Buffer> pgrads;
  for (auto* p : layer.params()) pgrads.push_back(p->grad);

  GradReport rep;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += kFdStep;
    xm[i] -= kFdStep;
    rep.add(dx[i], (objective(xp) - objective(xm)) / (2 * kFdStep));
  }
  auto params = layer.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& v = params[k]->value;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + kFdStep;
      const double fp = objective(x);
      v[i] = keep - kFdStep;
      const double fm = objective(x);
      v[i] = keep;
      rep.add(pgrads[k][i], (fp - fm) / (2 * kFdStep));
    }
  }
  return rep;
}

// LSTM layer over T steps with objective sum_t sum(r_t * h_t).
inline GradReport check_lstm_layer(moldline::lstm::LstmLayer& layer, int batch, int steps, Rng& rng) {
  using moldline::lstm::RowMat;
  std::vector<RowMat> xs(static_cast<std::size_t>(steps));
  for (auto& x : xs) {
    x.resize(batch, layer.input_size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = moldline::normal(rng);
  }
  std::vector<RowMat> r(xs.size());
  for (auto& m : r) {
    m.resize(batch, layer.hidden());
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = moldline::normal(rng);
  }
  auto objective = [&](const std::vector<RowMat>& in) {
    const auto hs = layer.forward(in);
    double s = 0.0;
    for (std::size_t t = 0; t < hs.size(); ++t) s += (hs[t].array() * r[t].array()).sum();
    return s;
  };
  layer.W.zero_grad();
  layer.U.zero_grad();
  layer.b.zero_grad();
  layer.forward(xs);
  const auto dx = layer.backward(r);
  const std::vector<moldline::nn::Buffer> pg = {layer.W.grad, layer.U.grad, layer.b.grad};

  GradReport rep;
  for (std::size_t t = 0; t < xs.size(); ++t)
    for (Eigen::Index i = 0; i < xs[t].size(); ++i) {
      auto xp = xs, xm = xs;
      xp[t].data()[i] += kFdStep;
      xm[t].data()[i] -= kFdStep;
      rep.add(dx[t].data()[i], (objective(xp) - objective(xm)) / (2 * kFdStep));
    }
  moldline::nn::Param* ps[] = {&layer.W, &layer.U, &layer.b};
  for (std::size_t k = 0; k < 3; ++k) {
    auto& v = ps[k]->value;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + kFdStep;
      const double fp = objective(xs);
      v[i] = keep - kFdStep;
      const double fm = objective(xs);
      v[i] = keep;
      rep.add(pg[k][i], (fp - fm) / (2 * kFdStep));
    }
  }
  return rep;
}

inline GradReport check_loss(moldline::nn::LossKind kind, const std::vector<double>& pred,
                             const std::vector<double>& target, double delta = 1.0) {
  const auto lv = moldline::nn::compute_loss(kind, pred, target, delta);
  GradReport rep;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto p = pred, m = pred;
    p[i] += kFdStep;
    m[i] -= kFdStep;
    const double fp = moldline::nn::compute_loss(kind, p, target, delta).value;
    const double fm = moldline::nn::compute_loss(kind, m, target, delta).value;
    rep.add(lv.grad[i], (fp - fm) / (2 * kFdStep));
  }
  return rep;
}

// ------------------------------------------------------------------ KNN

inline double minkowski_pow(const Eigen::MatrixXd& X, Eigen::Index row, const Eigen::VectorXd& q, double p) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) s += std::pow(std::abs(X(row, j) - q(j)), p);
  return s;
}

// k nearest training rows by (distance, index), nearest first.
inline std::vector<Eigen::Index> brute_neighbors(const Eigen::MatrixXd& X, const Eigen::VectorXd& q, int k,
                                                 double p) {
  std::vector<std::pair<double, Eigen::Index>> all;
  for (Eigen::Index i = 0; i < X.rows(); ++i) all.emplace_back(minkowski_pow(X, i, q, p), i);
  std::sort(all.begin(), all.end());
  std::vector<Eigen::Index> out;
  for (int i = 0; i < k; ++i) out.push_back(all[static_cast<std::size_t>(i)].second);
  return out;
}

// ------------------------------------------------------------------ GLCM

// Pair counts over all offsets, both orders, normalised by the number of
// ordered pairs.
inline std::vector<double> brute_glcm(const std::vector<std::vector<int>>& img, int levels,
                                      const std::vector<std::pair<int, int>>& offsets) {
  std::vector<double> p(static_cast<std::size_t>(levels * levels), 0.0);
  double total = 0.0;
  const int h = static_cast<int>(img.size());
  const int w = static_cast<int>(img[0].size());
  for (auto [dy, dx] : offsets)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int y2 = y + dy, x2 = x + dx;
        if (y2 < 0 || y2 >= h || x2 < 0 || x2 >= w) continue;
        p[static_cast<std::size_t>(img[y][x] * levels + img[y2][x2])] += 1;
        p[static_cast<std::size_t>(img[y2][x2] * levels + img[y][x])] += 1;
        total += 2;
      }
  for (auto& v : p) v /= total;
  return p;
}

// Second largest eigenvalue of Haralick's Q by power iteration on the
// symmetric similarity D^-1/2 P Dy^-1 P' D^-1/2 with the known top pair
// (1, sqrt(px)) deflated. Returns sqrt(lambda2).
inline double max_corr_coeff_power(const moldline::haralick::Glcm& g, int iters = 200000) {
  const int L = g.levels;
  std::vector<double> px(static_cast<std::size_t>(L), 0.0);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) px[static_cast<std::size_t>(i)] += g.at(i, j);
  std::vector<int> live;
  for (int i = 0; i < L; ++i)
    if (px[static_cast<std::size_t>(i)] > 0) live.push_back(i);
  const auto n = static_cast<Eigen::Index>(live.size());
  if (n < 2) return 0.0;
  Eigen::MatrixXd S(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) {
      double s = 0.0;
      for (int k : live)
        s += g.at(live[a], k) * g.at(live[b], k) / px[static_cast<std::size_t>(k)];
      S(a, b) = s / std::sqrt(px[static_cast<std::size_t>(live[a])] * px[static_cast<std::size_t>(live[b])]);
    }
  Eigen::VectorXd v1(n);
  for (Eigen::Index a = 0; a < n; ++a) v1(a) = std::sqrt(px[static_cast<std::size_t>(live[a])]);
  v1.normalize();
  const Eigen::MatrixXd B = S - v1 * v1.transpose();

  Rng rng(12345);
  Eigen::VectorXd v(n);
  for (Eigen::Index a = 0; a < n; ++a) v(a) = moldline::normal(rng);
  v -= v1 * v1.dot(v);
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd w = B * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double next = w.dot(B * w);
    if (it > 50 && std::abs(next - lambda) < 1e-16) {
      lambda = next;
      break;
    }
    lambda = next;
    v = w;
  }
  return std::sqrt(std::max(0.0, lambda));
}

// ------------------------------------------------------------------ trees and AdaBoost.R2

struct Stump {
  double threshold = 0.0;
  double left = 0.0;
  double right = 0.0;
  bool split = false;
  double operator()(double x) const { return !split || x <= threshold ? left : right; }
};

// Exhaustive least-squares stump on a 1-D multiset: every midpoint between
// consecutive distinct values; first (lowest) threshold wins ties.
inline Stump brute_stump(const std::vector<double>& x, const std::vector<double>& y) {
  Stump best;
  double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  best.left = best.right = mean;
  double sse0 = 0.0;
  for (double v : y) sse0 += (v - mean) * (v - mean);
  double best_sse = sse0;
  std::vector<double> xs = x;
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double t = xs[i] + (xs[i + 1] - xs[i]) / 2.0;
    double sl = 0, sr = 0;
    int nl = 0, nr = 0;
    for (std::size_t k = 0; k < x.size(); ++k) (x[k] <= t ? (sl += y[k], ++nl) : (sr += y[k], ++nr));
    const double ml = sl / nl, mr = sr / nr;
    double sse = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) sse += std::pow(y[k] - (x[k] <= t ? ml : mr), 2);
    if (sse < best_sse - 1e-12) {
      best_sse = sse;
      best = {t, ml, mr, true};
    }
  }
  return best;
}

struct AdaRound {
  std::vector<std::size_t> sample;
  Stump stump;
  double avg_loss = 0.0;
  double beta = 0.0;
  double weight = 0.0;
  std::vector<double> next_weights;
};

// AdaBoost.R2 with linear loss on 1-D data, stepped the way one would by
// hand: normalise weights, draw the weighted bootstrap from the given Rng by
// inverse-CDF lookup, fit a stump, compute L_i = |e_i| / max|e|, the
// weighted average loss, beta = avg / (1 - avg), weight = ln(1/beta) and
// w_i <- p_i * beta^(1 - L_i).
inline std::vector<AdaRound> adaboost_trace(const std::vector<double>& x, const std::vector<double>& y, int rounds,
                                            Rng rng) {
  const std::size_t n = x.size();
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<AdaRound> trace;
  for (int m = 0; m < rounds; ++m) {
    AdaRound r;
    double total = 0.0;
    for (double v : w) total += v;
    std::vector<double> p(n), cdf(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = w[i] / total;
      acc += p[i];
      cdf[i] = acc;
    }
    std::vector<double> bx, by;
    for (std::size_t d = 0; d < n; ++d) {
      const double u = moldline::uniform01(rng) * acc;
      std::size_t idx = 0;
      while (idx < n - 1 && cdf[idx] <= u) ++idx;
      r.sample.push_back(idx);
      bx.push_back(x[idx]);
      by.push_back(y[idx]);
    }
    r.stump = brute_stump(bx, by);
    std::vector<double> err(n);
    double emax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = std::abs(r.stump(x[i]) - y[i]);
      emax = std::max(emax, err[i]);
    }
    for (std::size_t i = 0; i < n; ++i) r.avg_loss += p[i] * (emax > 0 ? err[i] / emax : 0.0);
    if (r.avg_loss <= 0.0 || r.avg_loss >= 0.5) {
      trace.push_back(r);
      break;
    }
    r.beta = r.avg_loss / (1.0 - r.avg_loss);
    r.weight = std::log(1.0 / r.beta);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = p[i] * std::pow(r.beta, 1.0 - err[i] / emax);
      s += w[i];
    }
    for (std::size_t i = 0; i < n; ++i) r.next_weights.push_back(w[i] / s);
    trace.push_back(r);
  }
  return trace;
}

// Weighted median over rounds: sort predictions, first whose cumulative
// weight reaches half the total.
inline double weighted_median_oracle(std::vector<std::pair<double, double>> pw) {
  std::stable_sort(pw.begin(), pw.end(), [](auto& a, auto& b) { return a.first < b.first; });
  double total = 0.0;
  for (auto& e : pw) total += e.second;
  double c = 0.0;
  for (auto& e : pw) {
    c += e.second;
    if (c >= 0.5 * total) return e.first;
  }
  return pw.back().first;
}

}  // namespace oracle
