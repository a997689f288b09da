#include "moldline/regress/regressor.hpp"

#include <algorithm>

#include "moldline/error.hpp"
#include "moldline/neural_regressor.hpp"
#include "moldline/regress/ensemble.hpp"
#include "moldline/regress/knn.hpp"
#include "moldline/regress/linear.hpp"
#include "moldline/regress/tree.hpp"

namespace moldline::regress {

void Regressor::require_fitted() const {
  if (!fitted_) fail(ErrorCode::NotFitted, kind() + ": predict called before fit");
}

void Regressor::check_fit_input(const Matrix& X, const Vector& y) const {
  if (X.rows() != y.size()) fail(ErrorCode::ShapeMismatch, kind() + ": X rows must match y");
  if (X.rows() < 1) fail(ErrorCode::InvalidArgument, kind() + ": no training rows");
  if (!X.allFinite() || !y.allFinite())
    fail(ErrorCode::InvalidArgument, kind() + ": training data contains non-finite values");
}

void Regressor::check_predict_input(const Matrix& X, Eigen::Index expected_cols) const {
  if (X.cols() != expected_cols)
    fail(ErrorCode::ShapeMismatch, kind() + ": expected " + std::to_string(expected_cols) +
                                       " features, got " + std::to_string(X.cols()));
}

const std::vector<std::string>& classical_kinds() {
  static const std::vector<std::string> k{"ols",  "lasso", "elastic_net",   "svr",
                                          "knn",  "sgd",   "tree",          "bagging",
                                          "random_forest", "gbm", "adaboost"};
  return k;
}

const std::vector<std::string>& neural_kinds() {
  static const std::vector<std::string> k{"mlp_2fc",  "cnn1_fc1", "cnn2_fc1", "cnn2_fc2",
                                          "cnn3_fc2", "lstm1",    "lstm2"};
  return k;
}

std::vector<std::string> all_kinds() {
  auto k = classical_kinds();
  k.insert(k.end(), neural_kinds().begin(), neural_kinds().end());
  return k;
}

bool is_neural_kind(const std::string& kind) {
  const auto& k = neural_kinds();
  return std::find(k.begin(), k.end(), kind) != k.end();
}

namespace {

[[noreturn]] void unknown(const std::string& kind) {
  std::string valid;
  for (const auto& k : all_kinds()) valid += (valid.empty() ? "" : ", ") + k;
  fail(ErrorCode::UnknownModel, "unknown model kind '" + kind + "'; valid kinds: " + valid);
}

}  // namespace

nlohmann::json default_hyperparameters(const std::string& kind) {
  using nlohmann::json;
  if (kind == "ols") return {{"seed", 0}};
  if (kind == "lasso") return {{"l1", 0.3162}, {"l2", 0.0}, {"tol", 1e-10}, {"max_iter", 10000}, {"seed", 0}};
  if (kind == "elastic_net")
    return {{"l1", 0.00023}, {"l2", 0.00033}, {"tol", 1e-10}, {"max_iter", 10000}, {"seed", 0}};
  if (kind == "svr") return {{"C", 1.0}, {"epsilon", 0.1}, {"epochs", 10000}, {"seed", 0}};
  if (kind == "knn") return {{"k", 2}, {"p", 1.0}, {"leaf_size", 16}, {"seed", 0}};
  if (kind == "sgd")
    return {{"l1", 0.0001}, {"l2", 0.00067}, {"epochs", 5}, {"eta0", 0.01}, {"power_t", 0.25}, {"seed", 0}};
  if (kind == "tree") return {{"max_depth", 1}, {"min_samples_split", 2}, {"seed", 0}};
  if (kind == "bagging")
    return {{"n_estimators", 10}, {"max_depth", -1}, {"min_samples_split", 2},
            {"max_features", 0},  {"bootstrap", true}, {"seed", 0}};
  if (kind == "random_forest")
    return {{"n_estimators", 100}, {"max_depth", -1}, {"min_samples_split", 2},
            {"max_features", 0},   {"bootstrap", true}, {"seed", 0}};
  if (kind == "gbm")
    return {{"n_stages", 500},     {"max_depth", 4},   {"min_samples_split", 2},
            {"learning_rate", 0.1}, {"subsample", 1.0}, {"seed", 0}};
  if (kind == "adaboost")
    return {{"n_estimators", 300}, {"learning_rate", 1.0}, {"loss", "linear"},
            {"max_depth", 3},      {"min_samples_split", 2}, {"seed", 0}};
  if (is_neural_kind(kind)) return moldline::neural_default_hyperparameters(kind);
  unknown(kind);
}

std::unique_ptr<Regressor> make_regressor(const std::string& kind, const nlohmann::json& overrides) {
  nlohmann::json hyper = default_hyperparameters(kind);
  if (!overrides.is_null()) {
    if (!overrides.is_object()) fail(ErrorCode::BadConfig, kind + ": hyperparameters must be an object");
    for (const auto& [key, value] : overrides.items()) {
      if (!hyper.contains(key)) fail(ErrorCode::BadConfig, kind + ": unknown hyperparameter '" + key + "'");
      hyper[key] = value;
    }
  }
  using M = LinearRegressor::Method;
  if (kind == "ols") return std::make_unique<LinearRegressor>(kind, M::Ols, hyper);
  if (kind == "lasso" || kind == "elastic_net")
    return std::make_unique<LinearRegressor>(kind, M::CoordinateDescent, hyper);
  if (kind == "svr") return std::make_unique<LinearRegressor>(kind, M::Svr, hyper);
  if (kind == "sgd") return std::make_unique<LinearRegressor>(kind, M::Sgd, hyper);
  if (kind == "knn") return std::make_unique<KnnRegressor>(hyper);
  if (kind == "tree") return std::make_unique<TreeRegressor>(hyper);
  if (kind == "bagging" || kind == "random_forest") return std::make_unique<BaggedTrees>(kind, hyper);
  if (kind == "gbm") return std::make_unique<GradientBoostingLad>(hyper);
  if (kind == "adaboost") return std::make_unique<AdaBoostR2>(hyper);
  return moldline::make_neural_regressor(kind, hyper);
}

nlohmann::json save_model(const Regressor& model) {
  return {{"format", "moldline.model"},
          {"version", kModelFormatVersion},
          {"kind", model.kind()},
          {"hyperparameters", model.hyperparameters()},
          {"state", model.state()},
          {"flags", model.flags()}};
}

std::unique_ptr<Regressor> load_model(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", "") != "moldline.model")
    fail(ErrorCode::MalformedRecord, "not a moldline model file");
  if (doc.value("version", 0) != kModelFormatVersion)
    fail(ErrorCode::MalformedRecord, "unsupported model file version");
  auto model = make_regressor(doc.at("kind").get<std::string>(), doc.at("hyperparameters"));
  model->load_state(doc.at("state"));
  model->flags_ = doc.value("flags", std::vector<std::string>{});
  model->fitted_ = true;
  return model;
}

}  // namespace moldline::regress
