#pragma once

#include <span>
#include <vector>

#include "moldline/regress/tree.hpp"

namespace moldline::regress {

/// Smallest value whose cumulative weight reaches half of the total weight
/// (values visited in ascending order; equal values keep input order).
double weighted_median(std::span<const double> values, std::span<const double> weights);

double median(std::vector<double> values);

/// Draws `count` row indices with probability proportional to `weights`
/// by inverse-CDF lookup of uniform01 draws.
std::vector<Eigen::Index> weighted_bootstrap(std::span<const double> weights, std::size_t count,
                                             Rng& rng);

/// Bootstrap-aggregated trees; random forest adds per-split feature sampling.
class BaggedTrees : public Regressor {
 public:
  BaggedTrees(std::string kind, nlohmann::json hyper);

  std::string kind() const override { return kind_; }
  void fit(const Matrix& X, const Vector& y) override;
  Vector predict(const Matrix& X) const override;
  nlohmann::json hyperparameters() const override { return hyper_; }
  nlohmann::json state() const override;
  void load_state(const nlohmann::json& state) override;

  const std::vector<RegressionTree>& members() const { return members_; }

 private:
  std::string kind_;
  nlohmann::json hyper_;
  std::vector<RegressionTree> members_;
};

/// Least-absolute-deviation gradient boosting: F0 = median(y); each stage
/// fits a tree to sign(y - F) and replaces its leaf values with the median
/// residual in the leaf; F += learning_rate * tree.
class GradientBoostingLad : public Regressor {
 public:
  explicit GradientBoostingLad(nlohmann::json hyper);

  std::string kind() const override { return "gbm"; }
  void fit(const Matrix& X, const Vector& y) override;
  Vector predict(const Matrix& X) const override;
  nlohmann::json hyperparameters() const override { return hyper_; }
  nlohmann::json state() const override;
  void load_state(const nlohmann::json& state) override;

  double initial() const { return init_; }
  const std::vector<RegressionTree>& stages() const { return stages_; }
  /// Mean absolute training residual after each stage (index 0: F0 only).
  const std::vector<double>& train_loss() const { return train_loss_; }

 private:
  nlohmann::json hyper_;
  double init_ = 0.0;
  double learning_rate_ = 0.1;
  std::vector<RegressionTree> stages_;
  std::vector<double> train_loss_;
};

/// Drucker's AdaBoost.R2 with weighted-median aggregation.
class AdaBoostR2 : public Regressor {
 public:
  struct Round {
    double average_loss = 0.0;
    double beta = 0.0;
    double estimator_weight = 0.0;
    std::vector<double> sample_weights;  // normalised, after this round's update
    bool retained = false;
  };

  explicit AdaBoostR2(nlohmann::json hyper);

  std::string kind() const override { return "adaboost"; }
  void fit(const Matrix& X, const Vector& y) override;
  Vector predict(const Matrix& X) const override;
  nlohmann::json hyperparameters() const override { return hyper_; }
  nlohmann::json state() const override;
  void load_state(const nlohmann::json& state) override;

  const std::vector<RegressionTree>& estimators() const { return estimators_; }
  const std::vector<double>& estimator_weights() const { return weights_; }
  const std::vector<Round>& rounds() const { return rounds_; }

 private:
  nlohmann::json hyper_;
  std::vector<RegressionTree> estimators_;
  std::vector<double> weights_;
  std::vector<Round> rounds_;
  double fallback_ = 0.0;  // median(y), used when no round was retained
};

}  // namespace moldline::regress
