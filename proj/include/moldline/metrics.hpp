#pragma once

#include "moldline/regress/regressor.hpp"

namespace moldline {

struct Scores {
  double mse = 0.0;
  double r2 = 0.0;
  /// Targets had zero variance; r2 is then 1 for a perfect fit and 0 otherwise.
  bool r2_degenerate = false;
};

double mean_squared_error(const regress::Vector& pred, const regress::Vector& truth);
Scores score(const regress::Vector& pred, const regress::Vector& truth);
Scores evaluate(const regress::Regressor& model, const regress::Matrix& X, const regress::Vector& y);

}  // namespace moldline
