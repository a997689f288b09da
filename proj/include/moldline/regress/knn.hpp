#pragma once

#include <vector>

#include "moldline/regress/regressor.hpp"

namespace moldline::regress {

/// Exact k-nearest-neighbour search over a k-d tree with Minkowski-p
/// distance (p = 1 by default). Distances are compared as sum |d|^p, which
/// orders neighbours identically to the true metric. Ties in distance go to
/// the lower training index.
class KdTree {
 public:
  struct Neighbor {
    double distance;  // sum |d|^p
    Eigen::Index index;
  };

  KdTree() = default;
  KdTree(const Matrix& points, double p, int leaf_size = 16);

  /// The k nearest training points, nearest first.
  std::vector<Neighbor> query(const double* q, int k) const;

  Eigen::Index size() const { return points_.rows(); }

 private:
  struct Node {
    int dim = -1;  // -1: leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
    int begin = 0;
    int end = 0;
  };

  int build(int begin, int end, int depth);
  double point_distance(const double* q, Eigen::Index row) const;
  double axis_term(double d) const;
  void search(int node, const double* q, std::vector<double>& offsets, double rect,
              std::vector<Neighbor>& heap, int k) const;

  Matrix points_;
  double p_ = 1.0;
  int leaf_size_ = 16;
  std::vector<Eigen::Index> perm_;
  std::vector<Node> nodes_;
};

/// Unweighted mean of the targets of the k nearest training samples.
class KnnRegressor : public Regressor {
 public:
  explicit KnnRegressor(nlohmann::json hyper);

  std::string kind() const override { return "knn"; }
  void fit(const Matrix& X, const Vector& y) override;
  Vector predict(const Matrix& X) const override;
  nlohmann::json hyperparameters() const override { return hyper_; }
  nlohmann::json state() const override;
  void load_state(const nlohmann::json& state) override;

 private:
  void rebuild();

  nlohmann::json hyper_;
  int k_ = 2;
  double p_ = 1.0;
  int leaf_size_ = 16;
  Matrix X_;
  Vector y_;
  KdTree tree_;
};

}  // namespace moldline::regress
