#include "moldline/regress/tree.hpp"

#include <algorithm>
#include <numeric>

#include "moldline/error.hpp"

namespace moldline::regress {

struct RegressionTree::Builder {
  const Matrix& X;
  const TreeParams& params;
  std::vector<Eigen::Index> rows;     // position -> data row
  std::vector<double> yv;             // position -> target
  std::vector<std::vector<int>> order;  // per feature, positions sorted by value
  std::vector<char> goes_left;
  std::vector<int> scratch;
  std::vector<Node>& nodes;
  Rng rng;

  Builder(const Matrix& x, const Vector& y, std::span<const Eigen::Index> r, const TreeParams& p,
          std::vector<Node>& out)
      : X(x), params(p), rows(r.begin(), r.end()), nodes(out), rng(derive_seed(p.seed, "tree")) {
    const auto n = static_cast<int>(rows.size());
    yv.resize(rows.size());
    for (std::size_t s = 0; s < rows.size(); ++s) yv[s] = y(rows[s]);
    order.resize(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index f = 0; f < X.cols(); ++f) {
      auto& o = order[static_cast<std::size_t>(f)];
      o.resize(rows.size());
      std::iota(o.begin(), o.end(), 0);
      std::stable_sort(o.begin(), o.end(),
                       [&](int a, int b) { return X(rows[a], f) < X(rows[b], f); });
    }
    goes_left.assign(rows.size(), 0);
    scratch.resize(rows.size());
    (void)n;
  }

  std::vector<Eigen::Index> candidate_features() {
    const auto p = static_cast<int>(X.cols());
    std::vector<Eigen::Index> feats(static_cast<std::size_t>(p));
    std::iota(feats.begin(), feats.end(), 0);
    if (params.max_features <= 0 || params.max_features >= p) return feats;
    for (int i = 0; i < params.max_features; ++i) {
      std::uniform_int_distribution<int> pick(i, p - 1);
      std::swap(feats[static_cast<std::size_t>(i)], feats[static_cast<std::size_t>(pick(rng))]);
    }
    feats.resize(static_cast<std::size_t>(params.max_features));
    std::sort(feats.begin(), feats.end());
    return feats;
  }

  int build(int begin, int end, int depth) {
    const int n = end - begin;
    const auto& seg = order[0];
    // Shifted by the first value, so a constant node's mean is exact.
    const double pivot = yv[static_cast<std::size_t>(seg[static_cast<std::size_t>(begin)])];
    double sum = 0.0;
    for (int k = begin; k < end; ++k) sum += yv[static_cast<std::size_t>(seg[static_cast<std::size_t>(k)])] - pivot;
    const double mean = pivot + sum / n;
    double sse = 0.0;
    for (int k = begin; k < end; ++k) {
      double d = yv[static_cast<std::size_t>(seg[static_cast<std::size_t>(k)])] - mean;
      sse += d * d;
    }

    const int id = static_cast<int>(nodes.size());
    nodes.push_back(Node{-1, 0.0, -1, -1, mean, n});

    const bool depth_ok = params.max_depth < 0 || depth < params.max_depth;
    const bool pure = sse <= 1e-24 * n * std::max(1.0, mean * mean);
    if (!depth_ok || n < params.min_samples_split || n < 2 || pure) return id;

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 0.0;
    for (Eigen::Index f : candidate_features()) {
      const auto& o = order[static_cast<std::size_t>(f)];
      double left = 0.0;
      for (int k = begin; k < end - 1; ++k) {
        const int pos = o[static_cast<std::size_t>(k)];
        left += yv[static_cast<std::size_t>(pos)] - mean;
        const double v_here = X(rows[static_cast<std::size_t>(pos)], f);
        const double v_next = X(rows[static_cast<std::size_t>(o[static_cast<std::size_t>(k + 1)])], f);
        if (!(v_here < v_next)) continue;
        const int nl = k - begin + 1;
        const int nr = n - nl;
        const double gain = left * left * n / (static_cast<double>(nl) * nr);
        if (gain > best_gain * (1.0 + 1e-12) && gain > 1e-12 * sse) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          double thr = v_here + (v_next - v_here) / 2.0;
          if (!(thr < v_next)) thr = v_here;
          best_threshold = thr;
        }
      }
    }
    if (best_feature < 0) return id;

    for (int k = begin; k < end; ++k) {
      const int pos = seg[static_cast<std::size_t>(k)];
      goes_left[static_cast<std::size_t>(pos)] =
          X(rows[static_cast<std::size_t>(pos)], best_feature) <= best_threshold ? 1 : 0;
    }
    int n_left = 0;
    for (auto& o : order) {
      int w = begin;
      int r = 0;
      for (int k = begin; k < end; ++k) {
        const int pos = o[static_cast<std::size_t>(k)];
        if (goes_left[static_cast<std::size_t>(pos)])
          o[static_cast<std::size_t>(w++)] = pos;
        else
          scratch[static_cast<std::size_t>(r++)] = pos;
      }
      std::copy(scratch.begin(), scratch.begin() + r, o.begin() + w);
      n_left = w - begin;
    }

    nodes[static_cast<std::size_t>(id)].feature = best_feature;
    nodes[static_cast<std::size_t>(id)].threshold = best_threshold;
    const int l = build(begin, begin + n_left, depth + 1);
    nodes[static_cast<std::size_t>(id)].left = l;
    const int r = build(begin + n_left, end, depth + 1);
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }
};

void RegressionTree::fit(const Matrix& X, const Vector& y) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(X.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  fit(X, y, rows);
}

void RegressionTree::fit(const Matrix& X, const Vector& y, std::span<const Eigen::Index> rows) {
  if (X.rows() != y.size()) fail(ErrorCode::ShapeMismatch, "tree: X rows must match y");
  if (rows.empty()) fail(ErrorCode::InvalidArgument, "tree: no training rows");
  if (X.cols() == 0) fail(ErrorCode::ShapeMismatch, "tree: no features");
  nodes_.clear();
  n_features_ = X.cols();
  Builder b(X, y, rows, params_, nodes_);
  b.build(0, static_cast<int>(rows.size()), 0);
}

int RegressionTree::apply(const Matrix& X, Eigen::Index row) const {
  int id = 0;
  while (nodes_[static_cast<std::size_t>(id)].feature >= 0) {
    const Node& nd = nodes_[static_cast<std::size_t>(id)];
    id = X(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
  }
  return id;
}

double RegressionTree::predict_row(const Matrix& X, Eigen::Index row) const {
  return nodes_[static_cast<std::size_t>(apply(X, row))].value;
}

Vector RegressionTree::predict(const Matrix& X) const {
  if (nodes_.empty()) fail(ErrorCode::NotFitted, "tree used before fit");
  if (X.cols() != n_features_) fail(ErrorCode::ShapeMismatch, "tree: feature count mismatch");
  Vector out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict_row(X, i);
  return out;
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& nd = nodes_[i];
    if (nd.feature >= 0) {
      d[static_cast<std::size_t>(nd.left)] = d[i] + 1;
      d[static_cast<std::size_t>(nd.right)] = d[i] + 1;
    }
    best = std::max(best, d[i]);
  }
  return best;
}

nlohmann::json RegressionTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : nodes_)
    nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.n_samples});
  return {{"n_features", n_features_}, {"nodes", nodes}};
}

RegressionTree RegressionTree::from_json(const nlohmann::json& j, TreeParams params) {
  RegressionTree t(params);
  t.n_features_ = j.at("n_features").get<Eigen::Index>();
  for (const auto& n : j.at("nodes"))
    t.nodes_.push_back(Node{n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                            n.at(3).get<int>(), n.at(4).get<double>(), n.at(5).get<int>()});
  return t;
}

TreeParams tree_params_from_json(const nlohmann::json& j, std::uint64_t seed) {
  TreeParams p;
  p.max_depth = j.value("max_depth", -1);
  p.min_samples_split = j.value("min_samples_split", 2);
  p.max_features = j.value("max_features", 0);
  p.seed = seed;
  return p;
}

TreeRegressor::TreeRegressor(nlohmann::json hyper)
    : hyper_(std::move(hyper)),
      params_(tree_params_from_json(hyper_, hyper_.value("seed", std::uint64_t{0}))),
      tree_(params_) {}

void TreeRegressor::fit(const Matrix& X, const Vector& y) {
  check_fit_input(X, y);
  reset_flags();
  tree_ = RegressionTree(params_);
  tree_.fit(X, y);
  fitted_ = true;
}

Vector TreeRegressor::predict(const Matrix& X) const {
  require_fitted();
  return tree_.predict(X);
}

nlohmann::json TreeRegressor::state() const {
  require_fitted();
  return tree_.to_json();
}

void TreeRegressor::load_state(const nlohmann::json& state) {
  tree_ = RegressionTree::from_json(state, params_);
  fitted_ = true;
}

}  // namespace moldline::regress
