#include <doctest.h>

#include <cmath>
#include <cstring>
#include <map>

#include "moldline/error.hpp"
#include "moldline/random.hpp"
#include "moldline/regress/ensemble.hpp"
#include "moldline/regress/knn.hpp"
#include "moldline/regress/linear.hpp"
#include "moldline/regress/regressor.hpp"
#include "moldline/regress/tree.hpp"
#include "oracles.hpp"

using namespace moldline;
using namespace moldline::regress;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index n, Eigen::Index p) {
  Matrix X(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = normal(rng);
  return X;
}

Vector linear_target(const Matrix& X, const Vector& w, double b, double noise, Rng& rng) {
  Vector y = X * w;
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += b + noise * normal(rng);
  return y;
}

double r2(const Vector& pred, const Vector& y) {
  return 1.0 - (pred - y).squaredNorm() / (y.array() - y.mean()).square().sum();
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a moldline::Error");
  return ErrorCode::InvalidArgument;
}

bool bitwise_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

// Small but non-trivial hyperparameters so every kind fits in well under a second.
nlohmann::json quick(const std::string& kind) {
  if (kind == "random_forest") return {{"n_estimators", 8}};
  if (kind == "gbm") return {{"n_stages", 40}};
  if (kind == "adaboost") return {{"n_estimators", 20}};
  if (kind == "svr") return {{"epochs", 2000}};
  return nlohmann::json::object();
}

}  // namespace

TEST_CASE("soft threshold") {
  CHECK(soft_threshold(3.0, 1.0) == 2.0);
  CHECK(soft_threshold(-3.0, 1.0) == -2.0);
  CHECK(soft_threshold(0.5, 1.0) == 0.0);
  CHECK(soft_threshold(-1.0, 1.0) == 0.0);
  CHECK(soft_threshold(2.0, 0.0) == 2.0);
}

TEST_CASE("ols recovers exact coefficients") {
  Rng rng(51);
  const Matrix X = random_matrix(rng, 40, 4);
  const Vector w = (Vector(4) << 1.5, -2.0, 0.0, 0.25).finished();
  const Vector y = linear_target(X, w, 3.0, 0.0, rng);
  const auto f = fit_ols(X, y);
  CHECK_FALSE(f.ridge_fallback);
  CHECK(f.model.intercept == doctest::Approx(3.0).epsilon(1e-10));
  for (int j = 0; j < 4; ++j) CHECK(std::abs(f.model.coef(j) - w(j)) < 1e-10);

  Matrix D = X;
  D.col(2) = D.col(0);
  const auto g = fit_ols(D, y);
  CHECK(g.ridge_fallback);
  CHECK(r2(g.model.predict(D), y) > 0.99);
}

TEST_CASE("one-dimensional coordinate descent closed form") {
  // With a single standardized column z and centred y the minimiser is
  // S(z'y / N, l1) / (1 + l2).
  Rng rng(52);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::Index n = 10 + trial;
    Matrix X = random_matrix(rng, n, 1);
    X.col(0) = X.col(0) * (0.5 + trial) + Vector::Constant(n, trial - 3.0);
    const Vector y = linear_target(X, Vector::Constant(1, 0.7 - 0.1 * trial), 2.0, 0.5, rng);
    const double l1 = 0.05 * trial, l2 = 0.1 * (trial % 4);

    const double mx = X.col(0).mean(), my = y.mean();
    const double sd = std::sqrt((X.col(0).array() - mx).square().sum() / double(n));
    double zy = 0;
    for (Eigen::Index i = 0; i < n; ++i) zy += (X(i, 0) - mx) / sd * (y(i) - my);
    const double want = soft_threshold(zy / double(n), l1) / (1.0 + l2);

    const auto f = fit_coordinate_descent(X, y, CdParams{l1, l2, 1e-14, 100});
    CHECK(f.converged);
    CHECK(f.standardized_coef(0) == doctest::Approx(want).epsilon(1e-12));
    CHECK(f.model.coef(0) == doctest::Approx(want / sd).epsilon(1e-12));
    CHECK(f.model.intercept == doctest::Approx(my - want / sd * mx).epsilon(1e-12));
  }
}

TEST_CASE("coordinate descent satisfies the optimality conditions") {
  Rng rng(53);
  const Matrix X = random_matrix(rng, 80, 6);
  const Vector y = linear_target(X, (Vector(6) << 2, -1, 0.5, 0, 0, 0.1).finished(), 1.0, 0.3, rng);
  for (double l1 : {0.01, 0.1, 0.5})
    for (double l2 : {0.0, 0.3}) {
      const auto f = fit_coordinate_descent(X, y, CdParams{l1, l2, 1e-13, 100000});
      REQUIRE(f.converged);
      for (std::size_t k = 1; k < f.objective.size(); ++k) CHECK(f.objective[k] <= f.objective[k - 1] + 1e-15);
      // Rebuild the standardized problem independently.
      const double n = double(X.rows());
      Matrix Z = X.rowwise() - X.colwise().mean();
      for (Eigen::Index j = 0; j < Z.cols(); ++j) Z.col(j) /= std::sqrt(Z.col(j).squaredNorm() / n);
      const Vector yc = y.array() - y.mean();
      const Vector& b = f.standardized_coef;
      const Vector grad = Z.transpose() * (yc - Z * b) / n - l2 * b;
      for (Eigen::Index j = 0; j < b.size(); ++j) {
        if (b(j) == 0.0)
          CHECK(std::abs(grad(j)) <= l1 + 1e-9);
        else
          CHECK(grad(j) == doctest::Approx(l1 * (b(j) > 0 ? 1 : -1)).epsilon(1e-7));
      }
    }
}

TEST_CASE("lambda max zeroes every coefficient") {
  Rng rng(54);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix X = random_matrix(rng, 30 + trial, 5);
    const Vector y = linear_target(X, Vector::LinSpaced(5, -1, 2), 0.5, 0.2, rng);
    const double lmax = lasso_lambda_max(X, y);
    const auto at = fit_coordinate_descent(X, y, CdParams{lmax, 0.0});
    CHECK(at.standardized_coef.cwiseAbs().maxCoeff() == 0.0);
    CHECK(at.model.intercept == doctest::Approx(y.mean()));
    const auto below = fit_coordinate_descent(X, y, CdParams{0.95 * lmax, 0.0});
    CHECK(below.standardized_coef.cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("svr and sgd fit a clean linear relation") {
  Rng rng(55);
  const Matrix X = random_matrix(rng, 200, 3);
  const Vector y = linear_target(X, (Vector(3) << 1, -2, 0.5).finished(), 4.0, 0.05, rng);
  const auto svr = fit_linear_svr(X, y, SvrParams{1.0, 0.1, 5000, 3});
  CHECK(r2(svr.predict(X), y) > 0.97);

  SgdParams sp;
  sp.epochs = 30;
  sp.seed = 4;
  const auto sgd = fit_sgd_linear(X, y, sp);
  CHECK(sgd.epoch_coef.size() == 30);
  CHECK(r2(sgd.model.predict(X), y) > 0.97);
  const auto again = fit_sgd_linear(X, y, sp);
  CHECK(bitwise_equal(again.model.coef, sgd.model.coef));

  // Continuing from a given start: one more epoch from the 29th epoch state
  // still tracks the same solution.
  sp.epochs = 1;
  sp.initial_coef = sgd.epoch_coef.back();
  sp.initial_intercept = sgd.model.intercept;
  const auto cont = fit_sgd_linear(X, y, sp);
  CHECK(r2(cont.model.predict(X), y) > 0.97);
}

TEST_CASE("depth-1 tree matches the exhaustive stump") {
  Rng rng(56);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + trial % 17;
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = std::round(10 * uniform01(rng)) / 2;  // repeated values on purpose
      y[i] = normal(rng);
    }
    Matrix X(n, 1);
    Vector Y(n);
    for (int i = 0; i < n; ++i) X(i, 0) = x[i], Y(i) = y[i];
    RegressionTree t(TreeParams{1, 2, 0, 0});
    t.fit(X, Y);
    const auto s = oracle::brute_stump(x, y);
    CHECK(t.depth() <= 1);
    for (int i = 0; i < n; ++i) CHECK(t.predict_row(X, i) == doctest::Approx(s(x[i])).epsilon(1e-12));
    if (s.split) CHECK(t.nodes()[0].threshold == s.threshold);
  }
}

TEST_CASE("trees on step data and unlimited depth") {
  Matrix X(8, 1);
  Vector y(8);
  for (int i = 0; i < 8; ++i) X(i, 0) = i, y(i) = i < 5 ? -2.0 : 3.0;
  auto stump = make_regressor("tree");
  stump->fit(X, y);
  CHECK((stump->predict(X) - y).squaredNorm() == 0.0);

  Rng rng(57);
  const Matrix R = random_matrix(rng, 50, 3);
  const Vector ry = linear_target(R, Vector::Ones(3), 0.0, 1.0, rng);
  RegressionTree deep(TreeParams{-1, 2, 0, 0});
  deep.fit(R, ry);
  CHECK((deep.predict(R) - ry).norm() < 1e-12);

  // Identical features: the split uses the lower index.
  Matrix D(6, 2);
  Vector dy(6);
  for (int i = 0; i < 6; ++i) D(i, 0) = D(i, 1) = i, dy(i) = i > 2;
  RegressionTree t(TreeParams{1, 2, 0, 0});
  t.fit(D, dy);
  CHECK(t.nodes()[0].feature == 0);
  CHECK(t.nodes()[0].threshold == 2.5);

  // min_samples_split blocks the split.
  RegressionTree blocked(TreeParams{-1, 9, 0, 0});
  blocked.fit(D, dy);
  CHECK(blocked.nodes().size() == 1);
}

TEST_CASE("weighted median and bootstrap") {
  Rng rng(58);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 9;
    std::vector<double> v(n), w(n);
    std::vector<std::pair<double, double>> pw;
    for (int i = 0; i < n; ++i) {
      v[i] = std::round(4 * normal(rng));
      w[i] = uniform01(rng) + 0.01;
      pw.emplace_back(v[i], w[i]);
    }
    CHECK(weighted_median(v, w) == oracle::weighted_median_oracle(pw));
  }
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);

  const std::vector<double> w{0.1, 0.0, 0.6, 0.3};
  std::vector<int> hits(4, 0);
  const int draws = 100000;
  for (auto r : weighted_bootstrap(w, draws, rng)) ++hits[static_cast<std::size_t>(r)];
  CHECK(hits[1] == 0);
  for (int i : {0, 2, 3}) CHECK(std::abs(hits[i] / double(draws) - w[i]) < 0.01);
}

TEST_CASE("adaboost rounds against a hand-stepped trace") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const std::vector<double> y{1.0, 1.2, 3.5, 2.9, 6.0, 5.1};
  Matrix X(6, 1);
  Vector Y(6);
  for (int i = 0; i < 6; ++i) X(i, 0) = x[i], Y(i) = y[i];
  const std::uint64_t seed = 7;
  AdaBoostR2 model({{"n_estimators", 3}, {"learning_rate", 1.0}, {"loss", "linear"},
                    {"max_depth", 1},    {"min_samples_split", 2}, {"seed", seed}});
  model.fit(X, Y);
  const auto trace = oracle::adaboost_trace(x, y, 3, Rng(derive_seed(seed, "adaboost")));
  REQUIRE(model.rounds().size() == trace.size());
  CHECK(model.estimators().size() == 3);
  for (std::size_t m = 0; m < trace.size(); ++m) {
    const auto& got = model.rounds()[m];
    CHECK(got.average_loss == doctest::Approx(trace[m].avg_loss).epsilon(1e-12));
    if (!got.retained) continue;
    CHECK(got.beta == doctest::Approx(trace[m].beta).epsilon(1e-12));
    CHECK(got.estimator_weight == doctest::Approx(trace[m].weight).epsilon(1e-12));
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(got.sample_weights[i] == doctest::Approx(trace[m].next_weights[i]).epsilon(1e-12));
    for (int i = 0; i < 6; ++i)
      CHECK(model.estimators()[m].predict_row(X, i) == doctest::Approx(trace[m].stump(x[i])).epsilon(1e-12));
  }
  // Prediction is the weighted median of the retained stumps.
  for (int i = 0; i < 6; ++i) {
    std::vector<std::pair<double, double>> pw;
    for (std::size_t m = 0; m < model.estimators().size(); ++m)
      pw.emplace_back(trace[m].stump(x[i]), model.estimator_weights()[m]);
    CHECK(model.predict(X)(i) == doctest::Approx(oracle::weighted_median_oracle(pw)).epsilon(1e-12));
  }
}

TEST_CASE("gbm starts at the median and never increases the training loss") {
  Rng rng(59);
  const Matrix X = random_matrix(rng, 120, 4);
  Vector y = linear_target(X, Vector::LinSpaced(4, 1, -1), 0.0, 0.2, rng);
  y(3) = 50.0;  // outlier: LAD should shrug it off
  GradientBoostingLad gbm(default_hyperparameters("gbm"));
  gbm.fit(X, y);
  CHECK(gbm.initial() == median(std::vector<double>(y.data(), y.data() + y.size())));
  CHECK(gbm.train_loss().size() == 501);
  for (std::size_t k = 1; k < gbm.train_loss().size(); ++k)
    CHECK(gbm.train_loss()[k] <= gbm.train_loss()[k - 1] + 1e-12);
  CHECK(gbm.train_loss().back() < 0.5 * gbm.train_loss().front());
}

TEST_CASE("knn matches brute force") {
  Rng rng(60);
  for (auto [k, p] : {std::pair{2, 1.0}, std::pair{5, 2.0}, std::pair{1, 1.5}}) {
    const Matrix X = random_matrix(rng, 300, 4);
    KdTree tree(X, p, 8);
    for (int q = 0; q < 100; ++q) {
      Eigen::VectorXd v(4);
      for (int d = 0; d < 4; ++d) v(d) = normal(rng);
      const auto got = tree.query(v.data(), k);
      const auto want = oracle::brute_neighbors(X, v, k, p);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(got[i].index == want[i]);
        CHECK(got[i].distance == doctest::Approx(oracle::minkowski_pow(X, want[i], v, p)).epsilon(1e-12));
      }
    }
  }
  // Exact duplicates: lower index first.
  Matrix D = Matrix::Zero(5, 2);
  KdTree dt(D, 1.0, 2);
  const double origin[2] = {0, 0};
  const auto nb = dt.query(origin, 3);
  CHECK(nb[0].index == 0);
  CHECK(nb[1].index == 1);
  CHECK(nb[2].index == 2);

  auto knn = make_regressor("knn");
  Matrix T(4, 1);
  T << 0, 1, 10, 11;
  knn->fit(T, (Vector(4) << 1, 3, 10, 20).finished());
  Matrix Q(2, 1);
  Q << 0.2, 10.4;
  const Vector pred = knn->predict(Q);
  CHECK(pred(0) == 2.0);
  CHECK(pred(1) == 15.0);
}

TEST_CASE("every classical kind fits, saves and reloads bitwise") {
  Rng rng(61);
  const Matrix X = random_matrix(rng, 60, 5);
  const Vector y = linear_target(X, Vector::LinSpaced(5, -1, 1), 0.3, 0.1, rng);
  const Matrix Xq = random_matrix(rng, 10, 5);
  for (const auto& kind : classical_kinds()) {
    CAPTURE(kind);
    auto m = make_regressor(kind, quick(kind));
    CHECK(m->kind() == kind);
    CHECK_FALSE(m->fitted());
    CHECK(code_of([&] { m->predict(Xq); }) == ErrorCode::NotFitted);
    m->fit(X, y);
    const Vector a = m->predict(Xq);
    for (Eigen::Index i = 0; i < a.size(); ++i) CHECK(std::isfinite(a(i)));
    const auto doc = save_model(*m);
    CHECK(doc.at("kind") == kind);
    const auto back = load_model(nlohmann::json::parse(doc.dump()));
    CHECK(back->kind() == kind);
    CHECK(back->hyperparameters() == m->hyperparameters());
    CHECK(bitwise_equal(back->predict(Xq), a));
    CHECK(code_of([&] { m->predict(Matrix::Zero(2, 4)); }) == ErrorCode::ShapeMismatch);

    auto twin = make_regressor(kind, quick(kind));
    twin->fit(X, y);
    CHECK(bitwise_equal(twin->predict(Xq), a));
  }
}

TEST_CASE("seeded ensembles differ across seeds") {
  Rng rng(62);
  const Matrix X = random_matrix(rng, 60, 5);
  const Vector y = linear_target(X, Vector::LinSpaced(5, -1, 1), 0.3, 0.5, rng);
  auto a = make_regressor("random_forest", {{"n_estimators", 5}, {"seed", 1}});
  auto b = make_regressor("random_forest", {{"n_estimators", 5}, {"seed", 2}});
  a->fit(X, y);
  b->fit(X, y);
  CHECK_FALSE(bitwise_equal(a->predict(X), b->predict(X)));
}

TEST_CASE("registry errors") {
  CHECK(code_of([] { make_regressor("xgboost"); }) == ErrorCode::UnknownModel);
  try {
    make_regressor("xgboost");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("cnn2_fc2") != std::string::npos);
  }
  CHECK(code_of([] { make_regressor("lasso", {{"alpha", 1.0}}); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { default_hyperparameters("nope"); }) == ErrorCode::UnknownModel);
  CHECK(code_of([] { load_model({{"format", "moldline.model"}, {"version", 99}, {"kind", "ols"}}); }) !=
        ErrorCode::NotFitted);
  CHECK(all_kinds().size() == classical_kinds().size() + neural_kinds().size());
  CHECK(is_neural_kind("lstm2"));
  CHECK_FALSE(is_neural_kind("gbm"));
  CHECK(default_hyperparameters("adaboost").at("n_estimators") == 300);
  CHECK(default_hyperparameters("knn").at("k") == 2);

  auto bad = make_regressor("adaboost", {{"loss", "hinge"}});
  CHECK(code_of([&] { bad->fit(Matrix::Ones(3, 1), Vector::Ones(3)); }) == ErrorCode::BadConfig);
  auto ols = make_regressor("ols");
  CHECK(code_of([&] { ols->fit(Matrix::Ones(3, 1), Vector::Ones(4)); }) == ErrorCode::ShapeMismatch);
}
