#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace moldline::regress {

using Matrix = Eigen::MatrixXd;  // rows are samples
using Vector = Eigen::VectorXd;

/// Uniform fit/predict contract shared by every classical and neural model.
class Regressor;
std::unique_ptr<Regressor> load_model(const nlohmann::json& doc);

class Regressor {
 public:
  virtual ~Regressor() = default;

  virtual std::string kind() const = 0;
  virtual void fit(const Matrix& X, const Vector& y) = 0;
  virtual Vector predict(const Matrix& X) const = 0;

  virtual nlohmann::json hyperparameters() const = 0;
  virtual nlohmann::json state() const = 0;
  virtual void load_state(const nlohmann::json& state) = 0;

  bool fitted() const { return fitted_; }
  /// Diagnostics raised during fit (e.g. "ridge_fallback", "not_converged").
  const std::vector<std::string>& flags() const { return flags_; }

 protected:
  void require_fitted() const;
  void check_fit_input(const Matrix& X, const Vector& y) const;
  void check_predict_input(const Matrix& X, Eigen::Index expected_cols) const;
  void reset_flags() { flags_.clear(); }
  void flag(std::string f) { flags_.push_back(std::move(f)); }

  bool fitted_ = false;
  std::vector<std::string> flags_;

  friend std::unique_ptr<Regressor> load_model(const nlohmann::json& doc);
};

/// Classical descriptor models.
const std::vector<std::string>& classical_kinds();
/// Raw-input neural models (images or signals).
const std::vector<std::string>& neural_kinds();
std::vector<std::string> all_kinds();
bool is_neural_kind(const std::string& kind);

/// Default hyperparameters for a kind, the shipped values.
nlohmann::json default_hyperparameters(const std::string& kind);

/// Builds an unfitted model; `overrides` are merged over the defaults.
/// Unknown kinds raise UnknownModel naming the valid kinds.
std::unique_ptr<Regressor> make_regressor(const std::string& kind,
                                          const nlohmann::json& overrides = nlohmann::json::object());

inline constexpr int kModelFormatVersion = 1;

nlohmann::json save_model(const Regressor& model);
std::unique_ptr<Regressor> load_model(const nlohmann::json& doc);

}  // namespace moldline::regress
