#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "moldline/random.hpp"
#include "moldline/regress/regressor.hpp"

namespace moldline::regress {

struct TreeParams {
  int max_depth = -1;          // -1: unlimited
  int min_samples_split = 2;
  int max_features = 0;        // 0: all features considered at every split
  std::uint64_t seed = 0;      // only used when max_features subsamples
};

/// CART regression tree: greedy split on the largest reduction of summed
/// squared error, thresholds at midpoints of consecutive distinct values,
/// `x <= threshold` goes left. Gain ties keep the lower feature index, then
/// the lower threshold.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    int n_samples = 0;
  };

  RegressionTree() = default;
  explicit RegressionTree(TreeParams params) : params_(params) {}

  void fit(const Matrix& X, const Vector& y);
  /// Fit on a multiset of rows (bootstrap draws may repeat rows).
  void fit(const Matrix& X, const Vector& y, std::span<const Eigen::Index> rows);

  double predict_row(const Matrix& X, Eigen::Index row) const;
  Vector predict(const Matrix& X) const;
  /// Index of the leaf node the row falls into.
  int apply(const Matrix& X, Eigen::Index row) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  void set_leaf_value(int node, double v) { nodes_.at(static_cast<std::size_t>(node)).value = v; }
  int depth() const;
  Eigen::Index n_features() const { return n_features_; }

  nlohmann::json to_json() const;
  static RegressionTree from_json(const nlohmann::json& j, TreeParams params = {});

 private:
  struct Builder;

  TreeParams params_;
  std::vector<Node> nodes_;
  Eigen::Index n_features_ = 0;
};

class TreeRegressor : public Regressor {
 public:
  explicit TreeRegressor(nlohmann::json hyper);

  std::string kind() const override { return "tree"; }
  void fit(const Matrix& X, const Vector& y) override;
  Vector predict(const Matrix& X) const override;
  nlohmann::json hyperparameters() const override { return hyper_; }
  nlohmann::json state() const override;
  void load_state(const nlohmann::json& state) override;

  const RegressionTree& tree() const { return tree_; }

 private:
  nlohmann::json hyper_;
  TreeParams params_;
  RegressionTree tree_;
};

TreeParams tree_params_from_json(const nlohmann::json& j, std::uint64_t seed);

}  // namespace moldline::regress
