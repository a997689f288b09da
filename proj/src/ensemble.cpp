#include "moldline/regress/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moldline/error.hpp"

namespace moldline::regress {

double weighted_median(std::span<const double> values, std::span<const double> weights) {
  if (values.empty() || values.size() != weights.size())
    fail(ErrorCode::InvalidArgument, "weighted median needs matching non-empty inputs");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double w : weights) total += w;
  double cum = 0.0;
  for (auto i : idx) {
    cum += weights[i];
    if (cum >= 0.5 * total) return values[i];
  }
  return values[idx.back()];
}

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorCode::InvalidArgument, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<Eigen::Index> weighted_bootstrap(std::span<const double> weights, std::size_t count,
                                             Rng& rng) {
  std::vector<double> cdf(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cdf[i] = acc;
  }
  std::vector<Eigen::Index> rows(count);
  for (auto& r : rows) {
    const double u = uniform01(rng) * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    r = std::min<Eigen::Index>(static_cast<Eigen::Index>(it - cdf.begin()),
                               static_cast<Eigen::Index>(weights.size()) - 1);
  }
  return rows;
}

// ---------------------------------------------------------------- bagging

BaggedTrees::BaggedTrees(std::string kind, nlohmann::json hyper)
    : kind_(std::move(kind)), hyper_(std::move(hyper)) {}

void BaggedTrees::fit(const Matrix& X, const Vector& y) {
  check_fit_input(X, y);
  reset_flags();
  const int n_est = hyper_.at("n_estimators").get<int>();
  if (n_est < 1) fail(ErrorCode::InvalidArgument, kind_ + ": n_estimators must be >= 1");
  const bool bootstrap = hyper_.value("bootstrap", true);
  const std::uint64_t seed = hyper_.value("seed", std::uint64_t{0});
  const Eigen::Index n = X.rows();
  members_.clear();
  for (int m = 0; m < n_est; ++m) {
    TreeParams tp = tree_params_from_json(hyper_, derive_seed(derive_seed(seed, "member"), m));
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    if (bootstrap) {
      Rng rng(derive_seed(derive_seed(seed, "bootstrap"), m));
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    RegressionTree t(tp);
    t.fit(X, y, rows);
    members_.push_back(std::move(t));
  }
  fitted_ = true;
}

Vector BaggedTrees::predict(const Matrix& X) const {
  require_fitted();
  Vector out = Vector::Zero(X.rows());
  for (const auto& t : members_) out += t.predict(X);
  return out / static_cast<double>(members_.size());
}

nlohmann::json BaggedTrees::state() const {
  require_fitted();
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : members_) trees.push_back(t.to_json());
  return {{"members", trees}};
}

void BaggedTrees::load_state(const nlohmann::json& state) {
  members_.clear();
  for (const auto& t : state.at("members")) members_.push_back(RegressionTree::from_json(t));
  fitted_ = true;
}

// ---------------------------------------------------------------- LAD boosting

GradientBoostingLad::GradientBoostingLad(nlohmann::json hyper) : hyper_(std::move(hyper)) {}

void GradientBoostingLad::fit(const Matrix& X, const Vector& y) {
  check_fit_input(X, y);
  reset_flags();
  const int n_stages = hyper_.at("n_stages").get<int>();
  learning_rate_ = hyper_.at("learning_rate").get<double>();
  const double subsample = hyper_.value("subsample", 1.0);
  const std::uint64_t seed = hyper_.value("seed", std::uint64_t{0});
  const Eigen::Index n = X.rows();

  init_ = median(std::vector<double>(y.data(), y.data() + n));
  Vector F = Vector::Constant(n, init_);
  stages_.clear();
  train_loss_.assign(1, (y - F).cwiseAbs().mean());

  Rng rng(derive_seed(seed, "gbm"));
  std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  const auto n_sub = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::llround(subsample * static_cast<double>(n))));

  for (int m = 0; m < n_stages; ++m) {
    Vector resid = y - F;
    Vector sign = resid.unaryExpr([](double r) { return double((r > 0) - (r < 0)); });
    std::vector<Eigen::Index> rows = all;
    if (subsample < 1.0 && n_sub < all.size()) {
      for (std::size_t i = rows.size() - 1; i > 0; --i)
        std::swap(rows[i], rows[static_cast<std::size_t>(rng() % (i + 1))]);
      rows.resize(n_sub);
      std::sort(rows.begin(), rows.end());
    }
    RegressionTree tree(tree_params_from_json(hyper_, derive_seed(seed, m)));
    tree.fit(X, sign, rows);

    std::vector<std::vector<double>> leaf_resid(tree.nodes().size());
    for (auto r : rows) leaf_resid[static_cast<std::size_t>(tree.apply(X, r))].push_back(resid(r));
    for (std::size_t node = 0; node < tree.nodes().size(); ++node)
      if (tree.nodes()[node].feature < 0)
        tree.set_leaf_value(static_cast<int>(node),
                            leaf_resid[node].empty() ? 0.0 : median(leaf_resid[node]));

    for (Eigen::Index i = 0; i < n; ++i) F(i) += learning_rate_ * tree.predict_row(X, i);
    train_loss_.push_back((y - F).cwiseAbs().mean());
    stages_.push_back(std::move(tree));
  }
  fitted_ = true;
}

Vector GradientBoostingLad::predict(const Matrix& X) const {
  require_fitted();
  if (!stages_.empty()) check_predict_input(X, stages_.front().n_features());
  Vector out = Vector::Constant(X.rows(), init_);
  for (const auto& t : stages_)
    for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) += learning_rate_ * t.predict_row(X, i);
  return out;
}

nlohmann::json GradientBoostingLad::state() const {
  require_fitted();
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : stages_) trees.push_back(t.to_json());
  return {{"init", init_}, {"learning_rate", learning_rate_}, {"stages", trees}};
}

void GradientBoostingLad::load_state(const nlohmann::json& state) {
  init_ = state.at("init").get<double>();
  learning_rate_ = state.at("learning_rate").get<double>();
  stages_.clear();
  for (const auto& t : state.at("stages")) stages_.push_back(RegressionTree::from_json(t));
  fitted_ = true;
}

// ---------------------------------------------------------------- AdaBoost.R2

AdaBoostR2::AdaBoostR2(nlohmann::json hyper) : hyper_(std::move(hyper)) {}

void AdaBoostR2::fit(const Matrix& X, const Vector& y) {
  check_fit_input(X, y);
  reset_flags();
  const int n_est = hyper_.at("n_estimators").get<int>();
  const double lr = hyper_.at("learning_rate").get<double>();
  const std::string loss = hyper_.at("loss").get<std::string>();
  if (loss != "linear" && loss != "square" && loss != "exponential")
    fail(ErrorCode::BadConfig, "adaboost loss must be linear, square or exponential");
  const std::uint64_t seed = hyper_.value("seed", std::uint64_t{0});
  const auto n = static_cast<std::size_t>(X.rows());

  estimators_.clear();
  weights_.clear();
  rounds_.clear();
  fallback_ = median(std::vector<double>(y.data(), y.data() + y.size()));

  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  Rng rng(derive_seed(seed, "adaboost"));
  for (int m = 0; m < n_est; ++m) {
    double total = 0.0;
    for (double v : w) total += v;
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = w[i] / total;

    const auto rows = weighted_bootstrap(p, n, rng);
    RegressionTree tree(tree_params_from_json(hyper_, derive_seed(seed, m)));
    tree.fit(X, y, rows);

    std::vector<double> err(n);
    double max_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = std::abs(tree.predict_row(X, static_cast<Eigen::Index>(i)) - y(static_cast<Eigen::Index>(i)));
      max_err = std::max(max_err, err[i]);
    }
    std::vector<double> L(n, 0.0);
    if (max_err > 0.0)
      for (std::size_t i = 0; i < n; ++i) {
        const double r = err[i] / max_err;
        L[i] = loss == "linear" ? r : loss == "square" ? r * r : 1.0 - std::exp(-r);
      }
    double avg = 0.0;
    for (std::size_t i = 0; i < n; ++i) avg += p[i] * L[i];

    Round round;
    round.average_loss = avg;
    if (avg <= 0.0) {
      // Perfect fit: keep it with unit weight and stop boosting.
      round.estimator_weight = 1.0;
      round.sample_weights = p;
      round.retained = true;
      rounds_.push_back(round);
      estimators_.push_back(std::move(tree));
      weights_.push_back(1.0);
      break;
    }
    if (avg >= 0.5) {
      round.sample_weights = p;
      rounds_.push_back(round);
      if (estimators_.empty()) flag("empty_ensemble");
      break;
    }
    const double beta = avg / (1.0 - avg);
    round.beta = beta;
    round.estimator_weight = lr * std::log(1.0 / beta);
    for (std::size_t i = 0; i < n; ++i) w[i] = p[i] * std::pow(beta, (1.0 - L[i]) * lr);
    double wsum = 0.0;
    for (double v : w) wsum += v;
    round.sample_weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) round.sample_weights[i] = w[i] / wsum;
    round.retained = true;
    rounds_.push_back(round);
    estimators_.push_back(std::move(tree));
    weights_.push_back(round.estimator_weight);
  }
  fitted_ = true;
}

Vector AdaBoostR2::predict(const Matrix& X) const {
  require_fitted();
  Vector out(X.rows());
  if (estimators_.empty()) return Vector::Constant(X.rows(), fallback_);
  check_predict_input(X, estimators_.front().n_features());
  std::vector<double> preds(estimators_.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (std::size_t m = 0; m < estimators_.size(); ++m) preds[m] = estimators_[m].predict_row(X, i);
    out(i) = weighted_median(preds, weights_);
  }
  return out;
}

nlohmann::json AdaBoostR2::state() const {
  require_fitted();
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : estimators_) trees.push_back(t.to_json());
  return {{"estimators", trees}, {"weights", weights_}, {"fallback", fallback_}};
}

void AdaBoostR2::load_state(const nlohmann::json& state) {
  estimators_.clear();
  for (const auto& t : state.at("estimators")) estimators_.push_back(RegressionTree::from_json(t));
  weights_ = state.at("weights").get<std::vector<double>>();
  fallback_ = state.at("fallback").get<double>();
  fitted_ = true;
}

}  // namespace moldline::regress
