#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "moldline/regress/regressor.hpp"

namespace moldline::regress {

struct LinearModel {
  double intercept = 0.0;
  Vector coef;

  Vector predict(const Matrix& X) const;
  nlohmann::json to_json() const;
  static LinearModel from_json(const nlohmann::json& j);
};

double soft_threshold(double x, double lambda);

struct OlsFit {
  LinearModel model;
  bool ridge_fallback = false;
};

/// Normal equations on internally standardized columns; falls back to a
/// 1e-8 ridge when the Gram matrix is singular.
OlsFit fit_ols(const Matrix& X, const Vector& y);

struct CdParams {
  double l1 = 0.0;
  double l2 = 0.0;
  double tol = 1e-10;
  int max_iter = 10000;
};

struct CdFit {
  LinearModel model;
  Vector standardized_coef;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective;  // after each full cycle
};

/// Cyclic coordinate descent on
///   (1/2N)||y - Xb||^2 + l1 ||b||_1 + (l2/2) ||b||^2
/// over standardized columns and a centred response.
CdFit fit_coordinate_descent(const Matrix& X, const Vector& y, const CdParams& params);

/// Largest l1 that leaves a nonzero coefficient: max_j |x_j' y| / N on the
/// standardized/centred problem.
double lasso_lambda_max(const Matrix& X, const Vector& y);

struct SvrParams {
  double C = 1.0;
  double epsilon = 0.1;
  int epochs = 10000;
  std::uint64_t seed = 0;
};

/// Primal epsilon-insensitive linear SVR by seeded stochastic subgradient
/// steps of size 1/(lambda t), lambda = 1/(C N).
LinearModel fit_linear_svr(const Matrix& X, const Vector& y, const SvrParams& params);

struct SgdParams {
  double l1 = 0.0001;
  double l2 = 0.00067;
  int epochs = 5;
  double eta0 = 0.01;
  double power_t = 0.25;
  std::uint64_t seed = 0;
  std::optional<Vector> initial_coef;
  double initial_intercept = 0.0;
};

struct SgdFit {
  LinearModel model;
  std::vector<Vector> epoch_coef;  // coefficients after each epoch
};

/// Sample-shuffled SGD on squared loss with elastic-net penalty and
/// eta(t) = eta0 / t^power_t, t counting updates from 1.
SgdFit fit_sgd_linear(const Matrix& X, const Vector& y, const SgdParams& params);

class LinearRegressor : public Regressor {
 public:
  enum class Method { Ols, CoordinateDescent, Svr, Sgd };

  LinearRegressor(std::string kind, Method method, nlohmann::json hyper);

  std::string kind() const override { return kind_; }
  void fit(const Matrix& X, const Vector& y) override;
  Vector predict(const Matrix& X) const override;
  nlohmann::json hyperparameters() const override { return hyper_; }
  nlohmann::json state() const override;
  void load_state(const nlohmann::json& state) override;

  const LinearModel& model() const { return model_; }

 private:
  std::string kind_;
  Method method_;
  nlohmann::json hyper_;
  LinearModel model_;
};

}  // namespace moldline::regress
