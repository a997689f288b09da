#include "moldline/metrics.hpp"

#include "moldline/error.hpp"

namespace moldline {

double mean_squared_error(const regress::Vector& pred, const regress::Vector& truth) {
  if (pred.size() != truth.size() || pred.size() == 0)
    fail(ErrorCode::ShapeMismatch, "metrics: prediction and target sizes differ or are empty");
  return (pred - truth).squaredNorm() / static_cast<double>(truth.size());
}

Scores score(const regress::Vector& pred, const regress::Vector& truth) {
  Scores s;
  s.mse = mean_squared_error(pred, truth);
  const double ss_res = (pred - truth).squaredNorm();
  const double ss_tot = (truth.array() - truth.mean()).square().sum();
  if (ss_tot > 0.0) {
    s.r2 = 1.0 - ss_res / ss_tot;
  } else {
    s.r2_degenerate = true;
    s.r2 = ss_res == 0.0 ? 1.0 : 0.0;
  }
  return s;
}

Scores evaluate(const regress::Regressor& model, const regress::Matrix& X, const regress::Vector& y) {
  return score(model.predict(X), y);
}

}  // namespace moldline
