#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moldline::nn {

enum class LossKind { L1, Mse, Rmse, Huber };

std::string_view loss_name(LossKind k);
std::optional<LossKind> parse_loss(std::string_view name);

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;  // d value / d pred
};

/// Batch-mean losses over e = pred - target:
///   l1    mean|e|           (subgradient 0 at e = 0)
///   mse   mean e^2
///   rmse  sqrt(mse)
///   huber mean of e^2/2 for |e| <= delta, delta(|e| - delta/2) beyond
LossValue compute_loss(LossKind kind, std::span<const double> pred, std::span<const double> target,
                       double huber_delta = 1.0);

}  // namespace moldline::nn
