#include "moldline/regress/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moldline/error.hpp"

namespace moldline::regress {

namespace {

bool closer(const KdTree::Neighbor& a, const KdTree::Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

}  // namespace

KdTree::KdTree(const Matrix& points, double p, int leaf_size)
    : points_(points), p_(p), leaf_size_(std::max(1, leaf_size)) {
  if (!(p_ >= 1.0)) fail(ErrorCode::InvalidArgument, "knn: Minkowski p must be >= 1");
  perm_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(perm_.begin(), perm_.end(), 0);
  if (points_.rows() > 0) build(0, static_cast<int>(points_.rows()), 0);
}

int KdTree::build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{-1, 0.0, -1, -1, begin, end});
  if (end - begin <= leaf_size_ || points_.cols() == 0) return id;

  int dim = 0;
  double best_spread = -1.0;
  for (Eigen::Index d = 0; d < points_.cols(); ++d) {
    double lo = points_(perm_[static_cast<std::size_t>(begin)], d), hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      const double v = points_(perm_[static_cast<std::size_t>(i)], d);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      dim = static_cast<int>(d);
    }
  }
  if (best_spread <= 0.0) return id;

  const int mid = begin + (end - begin) / 2;
  std::nth_element(perm_.begin() + begin, perm_.begin() + mid, perm_.begin() + end,
                   [&](Eigen::Index a, Eigen::Index b) {
                     return points_(a, dim) < points_(b, dim) ||
                            (points_(a, dim) == points_(b, dim) && a < b);
                   });
  nodes_[static_cast<std::size_t>(id)].dim = dim;
  nodes_[static_cast<std::size_t>(id)].split = points_(perm_[static_cast<std::size_t>(mid)], dim);
  const int l = build(begin, mid, depth + 1);
  nodes_[static_cast<std::size_t>(id)].left = l;
  const int r = build(mid, end, depth + 1);
  nodes_[static_cast<std::size_t>(id)].right = r;
  return id;
}

double KdTree::axis_term(double d) const {
  d = std::abs(d);
  return p_ == 1.0 ? d : std::pow(d, p_);
}

double KdTree::point_distance(const double* q, Eigen::Index row) const {
  double s = 0.0;
  for (Eigen::Index d = 0; d < points_.cols(); ++d) s += axis_term(q[d] - points_(row, d));
  return s;
}

void KdTree::search(int node_id, const double* q, std::vector<double>& offsets, double rect,
                    std::vector<Neighbor>& best, int k) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.dim < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const Eigen::Index row = perm_[static_cast<std::size_t>(i)];
      Neighbor cand{point_distance(q, row), row};
      if (static_cast<int>(best.size()) < k || closer(cand, best.back())) {
        best.insert(std::upper_bound(best.begin(), best.end(), cand, closer), cand);
        if (static_cast<int>(best.size()) > k) best.pop_back();
      }
    }
    return;
  }
  const auto dim = static_cast<std::size_t>(node.dim);
  const double diff = q[dim] - node.split;
  const int near = diff < 0 ? node.left : node.right;
  const int far = diff < 0 ? node.right : node.left;
  search(near, q, offsets, rect, best, k);

  const double old = offsets[dim];
  const double far_rect = rect - axis_term(old) + axis_term(diff);
  // Equal bounds are still explored so distance ties resolve by index.
  if (static_cast<int>(best.size()) < k || !(far_rect > best.back().distance)) {
    offsets[dim] = diff;
    search(far, q, offsets, far_rect, best, k);
    offsets[dim] = old;
  }
}

std::vector<KdTree::Neighbor> KdTree::query(const double* q, int k) const {
  std::vector<Neighbor> best;
  if (nodes_.empty() || k <= 0) return best;
  best.reserve(static_cast<std::size_t>(k) + 1);
  std::vector<double> offsets(static_cast<std::size_t>(points_.cols()), 0.0);
  search(0, q, offsets, 0.0, best, k);
  return best;
}

KnnRegressor::KnnRegressor(nlohmann::json hyper) : hyper_(std::move(hyper)) {
  k_ = hyper_.at("k").get<int>();
  p_ = hyper_.value("p", 1.0);
  leaf_size_ = hyper_.value("leaf_size", 16);
  if (k_ < 1) fail(ErrorCode::InvalidArgument, "knn: k must be >= 1");
}

void KnnRegressor::rebuild() { tree_ = KdTree(X_, p_, leaf_size_); }

void KnnRegressor::fit(const Matrix& X, const Vector& y) {
  check_fit_input(X, y);
  reset_flags();
  if (k_ > X.rows()) fail(ErrorCode::InvalidArgument, "knn: k exceeds the number of training rows");
  X_ = X;
  y_ = y;
  rebuild();
  fitted_ = true;
}

Vector KnnRegressor::predict(const Matrix& X) const {
  require_fitted();
  check_predict_input(X, X_.cols());
  Vector out(X.rows());
  std::vector<double> q(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index d = 0; d < X.cols(); ++d) q[static_cast<std::size_t>(d)] = X(i, d);
    double s = 0.0;
    const auto nb = tree_.query(q.data(), k_);
    for (const auto& n : nb) s += y_(n.index);
    out(i) = s / static_cast<double>(nb.size());
  }
  return out;
}

nlohmann::json KnnRegressor::state() const {
  require_fitted();
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < X_.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(X_.cols()));
    for (Eigen::Index d = 0; d < X_.cols(); ++d) r[static_cast<std::size_t>(d)] = X_(i, d);
    rows.push_back(r);
  }
  return {{"n_features", X_.cols()}, {"X", rows},
          {"y", std::vector<double>(y_.data(), y_.data() + y_.size())}};
}

void KnnRegressor::load_state(const nlohmann::json& state) {
  const auto cols = state.at("n_features").get<Eigen::Index>();
  const auto& rows = state.at("X");
  X_.resize(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index d = 0; d < cols; ++d)
      X_(static_cast<Eigen::Index>(i), d) = rows[i].at(static_cast<std::size_t>(d)).get<double>();
  const auto y = state.at("y").get<std::vector<double>>();
  y_ = Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size()));
  rebuild();
  fitted_ = true;
}

}  // namespace moldline::regress
