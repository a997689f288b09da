#include "moldline/featsel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moldline/error.hpp"
#include "moldline/metrics.hpp"
#include "moldline/random.hpp"
#include "moldline/regress/linear.hpp"
#include "moldline/text_io.hpp"

namespace moldline {

Correlation correlation_matrix(const Eigen::MatrixXd& X) {
  if (X.rows() < 2) fail(ErrorCode::TooFewValues, "correlation needs at least 2 rows");
  const Eigen::Index p = X.cols();
  Eigen::MatrixXd Z = X.rowwise() - X.colwise().mean();
  Correlation c;
  c.constant.assign(static_cast<std::size_t>(p), false);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double norm = Z.col(j).norm();
    if (norm > 0.0 && std::isfinite(norm)) {
      Z.col(j) /= norm;
    } else {
      Z.col(j).setZero();
      c.constant[static_cast<std::size_t>(j)] = true;
    }
  }
  c.r = Z.transpose() * Z;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i + 1; j < p; ++j) c.r(j, i) = c.r(i, j) = std::clamp(c.r(i, j), -1.0, 1.0);
    c.r(i, i) = 1.0;
  }
  return c;
}

Correlation correlation_matrix(const FeatureMatrix& fm) { return correlation_matrix(fm.to_eigen()); }

int count_correlated(const Eigen::MatrixXd& cm, double threshold) {
  int count = 0;
  for (Eigen::Index i = 0; i < cm.rows(); ++i)
    for (Eigen::Index j = 0; j < cm.cols(); ++j)
      if (i != j && std::abs(cm(i, j)) >= threshold) {
        ++count;
        break;
      }
  return count;
}

std::string correlation_csv(const Eigen::MatrixXd& cm, const std::vector<std::string>& names) {
  std::string out = "feature";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  for (Eigen::Index i = 0; i < cm.rows(); ++i) {
    out += names[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < cm.cols(); ++j) out += "," + format_double(cm(i, j));
    out += "\n";
  }
  return out;
}

std::vector<int> fold_assignment(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2 || static_cast<std::size_t>(k) > n)
    fail(ErrorCode::InvalidArgument, "cross validation needs 2 <= k <= n");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "folds"));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[static_cast<std::size_t>(rng() % (i + 1))]);
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

namespace {

Eigen::MatrixXd take(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& rows,
                     const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          X(rows[i], static_cast<Eigen::Index>(cols[j]));
  return out;
}

}  // namespace

RfeResult rfe(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& names,
              const RfeParams& params) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto p = static_cast<std::size_t>(X.cols());
  if (names.size() != p) fail(ErrorCode::ShapeMismatch, "rfe: one name per column required");
  if (y.size() != X.rows()) fail(ErrorCode::ShapeMismatch, "rfe: X rows must match y");
  if (p == 0) fail(ErrorCode::InvalidArgument, "rfe: no features");
  if (n < static_cast<std::size_t>(params.folds) + 1)
    fail(ErrorCode::TooFewValues, "rfe: needs at least folds + 1 rows");

  const auto fold = fold_assignment(n, params.folds, params.seed);
  std::vector<std::vector<Eigen::Index>> train_rows(static_cast<std::size_t>(params.folds)),
      test_rows(static_cast<std::size_t>(params.folds));
  for (std::size_t i = 0; i < n; ++i)
    for (int f = 0; f < params.folds; ++f)
      (fold[i] == f ? test_rows : train_rows)[static_cast<std::size_t>(f)].push_back(static_cast<Eigen::Index>(i));
  std::vector<Eigen::Index> all(n);
  std::iota(all.begin(), all.end(), 0);

  RfeResult res;
  std::vector<std::size_t> remaining(p);
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<std::vector<std::size_t>> subsets;

  while (!remaining.empty()) {
    std::vector<double> scores;
    for (int f = 0; f < params.folds; ++f) {
      const auto& tr = train_rows[static_cast<std::size_t>(f)];
      const auto& te = test_rows[static_cast<std::size_t>(f)];
      Eigen::VectorXd ytr(static_cast<Eigen::Index>(tr.size())), yte(static_cast<Eigen::Index>(te.size()));
      for (std::size_t i = 0; i < tr.size(); ++i) ytr(static_cast<Eigen::Index>(i)) = y(tr[i]);
      for (std::size_t i = 0; i < te.size(); ++i) yte(static_cast<Eigen::Index>(i)) = y(te[i]);
      auto fit = regress::fit_ols(take(X, tr, remaining), ytr);
      res.ridge_fallback = res.ridge_fallback || fit.ridge_fallback;
      scores.push_back(score(fit.model.predict(take(X, te, remaining)), yte).r2);
    }
    RfeStep step;
    step.cardinality = remaining.size();
    step.mean_r2 = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - step.mean_r2) * (s - step.mean_r2);
    step.std_r2 = std::sqrt(var / static_cast<double>(scores.size()));
    subsets.push_back(remaining);

    if (remaining.size() > 1) {
      const Eigen::MatrixXd Xs = take(X, all, remaining);
      auto fit = regress::fit_ols(Xs, y);
      res.ridge_fallback = res.ridge_fallback || fit.ridge_fallback;
      const Eigen::RowVectorXd mean = Xs.colwise().mean();
      std::size_t drop = 0;
      double drop_mag = 0.0;
      for (std::size_t j = 0; j < remaining.size(); ++j) {
        const auto c = static_cast<Eigen::Index>(j);
        const double sd = std::sqrt((Xs.col(c).array() - mean(c)).square().sum() / static_cast<double>(n));
        const double mag = std::abs(fit.model.coef(c) * sd);
        if (j == 0) {
          drop_mag = mag;
          continue;
        }
        const double tol = params.tie_tolerance * std::max(mag, drop_mag);
        const bool tie = std::abs(mag - drop_mag) <= tol;
        if ((!tie && mag < drop_mag) || (tie && names[remaining[j]] < names[remaining[drop]])) {
          drop = j;
          drop_mag = mag;
        }
      }
      step.eliminated = names[remaining[drop]];
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(drop));
    } else {
      remaining.clear();
    }
    res.curve.push_back(step);
  }

  double max_score = res.curve.front().mean_r2;
  for (const auto& s : res.curve) max_score = std::max(max_score, s.mean_r2);
  // Smallest cardinality within tolerance of the maximum.
  for (std::size_t i = res.curve.size(); i-- > 0;) {
    const double tol = params.tie_tolerance * std::max(1.0, std::abs(max_score));
    if (res.curve[i].mean_r2 >= max_score - tol) {
      res.best_columns = subsets[i];
      res.best_score = res.curve[i].mean_r2;
      break;
    }
  }
  std::sort(res.best_columns.begin(), res.best_columns.end());
  for (auto c : res.best_columns) res.best_names.push_back(names[c]);
  return res;
}

std::string rfe_curve_csv(const RfeResult& r) {
  std::string out = "cardinality,mean_r2,std_r2,eliminated\n";
  for (const auto& s : r.curve)
    out += std::to_string(s.cardinality) + "," + format_double(s.mean_r2) + "," +
           format_double(s.std_r2) + "," + s.eliminated + "\n";
  return out;
}

}  // namespace moldline
