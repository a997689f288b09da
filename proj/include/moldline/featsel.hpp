#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moldline/descriptors.hpp"

namespace moldline {

struct Correlation {
  Eigen::MatrixXd r;           // Pearson; constant columns are 0 off the diagonal
  std::vector<bool> constant;  // per column
};

Correlation correlation_matrix(const Eigen::MatrixXd& X);
Correlation correlation_matrix(const FeatureMatrix& fm);

/// Features with |r| >= threshold against at least one other feature.
int count_correlated(const Eigen::MatrixXd& cm, double threshold = 0.95);

/// Header row of names, then one row per feature (name first).
std::string correlation_csv(const Eigen::MatrixXd& cm, const std::vector<std::string>& names);

/// Seeded shuffled fold label (0..k-1) for each of n rows.
std::vector<int> fold_assignment(std::size_t n, int k, std::uint64_t seed);

struct RfeStep {
  std::size_t cardinality = 0;
  double mean_r2 = 0.0;
  double std_r2 = 0.0;         // population std over folds
  std::string eliminated;      // dropped after scoring this cardinality; empty at the end
};

struct RfeResult {
  std::vector<RfeStep> curve;  // cardinality n_features down to 1
  std::vector<std::size_t> best_columns;  // ascending column indices
  std::vector<std::string> best_names;
  double best_score = 0.0;
  bool ridge_fallback = false;
};

struct RfeParams {
  int folds = 5;
  std::uint64_t seed = 0;
  double tie_tolerance = 1e-12;  // relative, for |coef| ties and equal curve scores
};

/// Recursive feature elimination: OLS on the remaining columns, drop the
/// smallest |standardized coefficient| (ties: lexicographically first name),
/// score every cardinality by k-fold CV R². Best = highest mean, ties to the
/// smaller subset.
RfeResult rfe(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
              const std::vector<std::string>& names, const RfeParams& params = {});

std::string rfe_curve_csv(const RfeResult& r);

}  // namespace moldline
