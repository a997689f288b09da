#include "moldline/regress/linear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moldline/error.hpp"
#include "moldline/random.hpp"

namespace moldline::regress {

namespace {

struct Scaled {
  Matrix Z;        // standardized columns (constant columns left at 0)
  Vector mean;
  Vector scale;    // population std; 0 marks a constant column
  Vector yc;
  double ymean = 0.0;
};

Scaled standardize(const Matrix& X, const Vector& y) {
  Scaled s;
  const auto n = static_cast<double>(X.rows());
  s.mean = X.colwise().mean();
  s.Z = X.rowwise() - s.mean.transpose();
  s.scale = (s.Z.colwise().squaredNorm() / n).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (s.scale(j) > 0.0)
      s.Z.col(j) /= s.scale(j);
    else
      s.Z.col(j).setZero();
  }
  s.ymean = y.mean();
  s.yc = y.array() - s.ymean;
  return s;
}

LinearModel unscale(const Scaled& s, const Vector& beta) {
  LinearModel m;
  m.coef = Vector::Zero(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (s.scale(j) > 0.0) m.coef(j) = beta(j) / s.scale(j);
  m.intercept = s.ymean - m.coef.dot(s.mean);
  return m;
}

}  // namespace

Vector LinearModel::predict(const Matrix& X) const {
  return (X * coef).array() + intercept;
}

nlohmann::json LinearModel::to_json() const {
  return {{"intercept", intercept}, {"coef", std::vector<double>(coef.data(), coef.data() + coef.size())}};
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
  LinearModel m;
  m.intercept = j.at("intercept").get<double>();
  auto c = j.at("coef").get<std::vector<double>>();
  m.coef = Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
  return m;
}

double soft_threshold(double x, double lambda) {
  if (x > lambda) return x - lambda;
  if (x < -lambda) return x + lambda;
  return 0.0;
}

OlsFit fit_ols(const Matrix& X, const Vector& y) {
  if (X.rows() != y.size() || X.rows() < 1)
    fail(ErrorCode::ShapeMismatch, "OLS: X rows must match y and be non-empty");
  if (!X.allFinite() || !y.allFinite()) fail(ErrorCode::SingularDesign, "OLS: non-finite input");
  const Scaled s = standardize(X, y);
  const auto n = static_cast<double>(X.rows());
  Matrix gram = (s.Z.transpose() * s.Z) / n;
  Vector rhs = (s.Z.transpose() * s.yc) / n;

  OlsFit fit;
  const Eigen::Index p = X.cols();
  if (p == 0) {
    fit.model.coef = Vector::Zero(0);
    fit.model.intercept = s.ymean;
    return fit;
  }
  // Constant columns contribute nothing; give them a unit pivot so the solve is well posed.
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(s.scale(j) > 0.0)) gram(j, j) = 1.0;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double max_ev = eig.eigenvalues().maxCoeff();
  const double min_ev = eig.eigenvalues().minCoeff();
  if (!(min_ev > 1e-12 * std::max(1.0, max_ev))) {
    gram.diagonal().array() += 1e-8;
    fit.ridge_fallback = true;
  }
  Eigen::LDLT<Matrix> ldlt(gram);
  Vector beta = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !beta.allFinite())
    fail(ErrorCode::SingularDesign, "OLS: normal equations could not be solved");
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(s.scale(j) > 0.0)) beta(j) = 0.0;
  fit.model = unscale(s, beta);
  return fit;
}

double lasso_lambda_max(const Matrix& X, const Vector& y) {
  const Scaled s = standardize(X, y);
  // Same per-column dot as the coordinate update, so l1 = lambda_max gives exact zeros.
  double m = 0.0;
  for (Eigen::Index j = 0; j < s.Z.cols(); ++j)
    if (s.scale(j) > 0.0) m = std::max(m, std::abs(s.Z.col(j).dot(s.yc) / static_cast<double>(X.rows())));
  return m;
}

CdFit fit_coordinate_descent(const Matrix& X, const Vector& y, const CdParams& params) {
  if (X.rows() != y.size() || X.rows() < 1)
    fail(ErrorCode::ShapeMismatch, "coordinate descent: X rows must match y");
  if (params.l1 < 0.0 || params.l2 < 0.0)
    fail(ErrorCode::InvalidArgument, "coordinate descent: penalties must be non-negative");
  const Scaled s = standardize(X, y);
  const auto n = static_cast<double>(X.rows());
  const Eigen::Index p = X.cols();

  auto objective = [&](const Vector& beta, const Vector& r) {
    return r.squaredNorm() / (2.0 * n) + params.l1 * beta.lpNorm<1>() +
           0.5 * params.l2 * beta.squaredNorm();
  };

  CdFit fit;
  Vector beta = Vector::Zero(p);
  Vector resid = s.yc;
  for (int it = 0; it < params.max_iter; ++it) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!(s.scale(j) > 0.0)) continue;
      const double old = beta(j);
      // Unit column norm / N after standardization.
      const double rho = s.Z.col(j).dot(resid) / n + old;
      const double updated = soft_threshold(rho, params.l1) / (1.0 + params.l2);
      if (updated != old) {
        resid -= s.Z.col(j) * (updated - old);
        beta(j) = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    fit.iterations = it + 1;
    fit.objective.push_back(objective(beta, resid));
    if (max_change < params.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.standardized_coef = beta;
  fit.model = unscale(s, beta);
  return fit;
}

LinearModel fit_linear_svr(const Matrix& X, const Vector& y, const SvrParams& params) {
  if (X.rows() != y.size() || X.rows() < 1)
    fail(ErrorCode::ShapeMismatch, "SVR: X rows must match y");
  if (params.C < 0.0 || params.epsilon < 0.0)
    fail(ErrorCode::InvalidArgument, "SVR: C and epsilon must be non-negative");
  const Scaled s = standardize(X, y);
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  Vector w = Vector::Zero(p);
  if (params.C > 0.0) {
    const double lambda = 1.0 / (params.C * static_cast<double>(n));
    double loss0 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) loss0 += std::max(0.0, std::abs(s.yc(i)) - params.epsilon);
    loss0 /= static_cast<double>(n);
    const double radius = std::sqrt(2.0 * loss0 / lambda);
    Rng rng(derive_seed(params.seed, "svr"));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    const long long total = static_cast<long long>(params.epochs) * n;
    for (long long t = 1; t <= total; ++t) {
      const Eigen::Index i = pick(rng);
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double e = s.yc(i) - s.Z.row(i).dot(w);
      w *= (1.0 - 1.0 / static_cast<double>(t));
      if (std::abs(e) > params.epsilon) w += (eta * (e > 0 ? 1.0 : -1.0)) * s.Z.row(i).transpose();
      const double norm = w.norm();
      if (norm > radius) w *= radius / norm;
    }
  }
  return unscale(s, w);
}

SgdFit fit_sgd_linear(const Matrix& X, const Vector& y, const SgdParams& params) {
  if (X.rows() != y.size() || X.rows() < 1)
    fail(ErrorCode::ShapeMismatch, "SGD: X rows must match y");
  const Eigen::Index n = X.rows();
  SgdFit fit;
  Vector w = params.initial_coef ? *params.initial_coef : Vector::Zero(X.cols());
  if (w.size() != X.cols()) fail(ErrorCode::ShapeMismatch, "SGD: initial coefficients size");
  double b = params.initial_intercept;
  Rng rng(derive_seed(params.seed, "sgd"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  long long t = 0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(rng() % (i + 1))]);
    for (Eigen::Index i : order) {
      ++t;
      const double eta = params.eta0 / std::pow(static_cast<double>(t), params.power_t);
      const double e = X.row(i).dot(w) + b - y(i);
      w -= eta * (e * X.row(i).transpose() + params.l2 * w);
      if (params.l1 > 0.0)
        for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = soft_threshold(w(j), eta * params.l1);
      b -= eta * e;
    }
    fit.epoch_coef.push_back(w);
  }
  fit.model.coef = w;
  fit.model.intercept = b;
  return fit;
}

LinearRegressor::LinearRegressor(std::string kind, Method method, nlohmann::json hyper)
    : kind_(std::move(kind)), method_(method), hyper_(std::move(hyper)) {}

void LinearRegressor::fit(const Matrix& X, const Vector& y) {
  check_fit_input(X, y);
  reset_flags();
  switch (method_) {
    case Method::Ols: {
      auto f = fit_ols(X, y);
      if (f.ridge_fallback) flag("ridge_fallback");
      model_ = f.model;
      break;
    }
    case Method::CoordinateDescent: {
      CdParams p;
      p.l1 = hyper_.at("l1").get<double>();
      p.l2 = hyper_.at("l2").get<double>();
      p.tol = hyper_.value("tol", p.tol);
      p.max_iter = hyper_.value("max_iter", p.max_iter);
      auto f = fit_coordinate_descent(X, y, p);
      if (!f.converged) flag("not_converged");
      model_ = f.model;
      break;
    }
    case Method::Svr: {
      SvrParams p;
      p.C = hyper_.at("C").get<double>();
      p.epsilon = hyper_.at("epsilon").get<double>();
      p.epochs = hyper_.value("epochs", p.epochs);
      p.seed = hyper_.value("seed", std::uint64_t{0});
      model_ = fit_linear_svr(X, y, p);
      break;
    }
    case Method::Sgd: {
      SgdParams p;
      p.l1 = hyper_.at("l1").get<double>();
      p.l2 = hyper_.at("l2").get<double>();
      p.epochs = hyper_.at("epochs").get<int>();
      p.eta0 = hyper_.at("eta0").get<double>();
      p.power_t = hyper_.at("power_t").get<double>();
      p.seed = hyper_.value("seed", std::uint64_t{0});
      model_ = fit_sgd_linear(X, y, p).model;
      break;
    }
  }
  fitted_ = true;
}

Vector LinearRegressor::predict(const Matrix& X) const {
  require_fitted();
  check_predict_input(X, model_.coef.size());
  return model_.predict(X);
}

nlohmann::json LinearRegressor::state() const {
  require_fitted();
  return model_.to_json();
}

void LinearRegressor::load_state(const nlohmann::json& state) {
  model_ = LinearModel::from_json(state);
  fitted_ = true;
}

}  // namespace moldline::regress
