#include "moldline/nn/loss.hpp"

#include <cmath>

#include "moldline/error.hpp"

namespace moldline::nn {

std::string_view loss_name(LossKind k) {
  switch (k) {
    case LossKind::L1: return "l1";
    case LossKind::Mse: return "mse";
    case LossKind::Rmse: return "rmse";
    case LossKind::Huber: return "huber";
  }
  return "?";
}

std::optional<LossKind> parse_loss(std::string_view name) {
  for (auto k : {LossKind::L1, LossKind::Mse, LossKind::Rmse, LossKind::Huber})
    if (loss_name(k) == name) return k;
  return std::nullopt;
}

LossValue compute_loss(LossKind kind, std::span<const double> pred, std::span<const double> target,
                       double huber_delta) {
  if (pred.size() != target.size() || pred.empty())
    fail(ErrorCode::ShapeMismatch, "loss: prediction and target sizes differ or are empty");
  const double n = static_cast<double>(pred.size());
  LossValue out;
  out.grad.resize(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    switch (kind) {
      case LossKind::L1:
        acc += std::abs(e);
        out.grad[i] = double((e > 0) - (e < 0)) / n;
        break;
      case LossKind::Mse:
      case LossKind::Rmse:
        acc += e * e;
        out.grad[i] = 2.0 * e / n;
        break;
      case LossKind::Huber:
        if (std::abs(e) <= huber_delta) {
          acc += 0.5 * e * e;
          out.grad[i] = e / n;
        } else {
          acc += huber_delta * (std::abs(e) - 0.5 * huber_delta);
          out.grad[i] = huber_delta * double((e > 0) - (e < 0)) / n;
        }
        break;
    }
  }
  out.value = acc / n;
  if (kind == LossKind::Rmse) {
    out.value = std::sqrt(out.value);
    // d sqrt(m)/dp = (dm/dp) / (2 sqrt(m)); undefined at 0, taken as 0.
    for (auto& g : out.grad) g = out.value > 0.0 ? g / (2.0 * out.value) : 0.0;
  }
  return out;
}

}  // namespace moldline::nn
