#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moldline/dataset.hpp"
#include "moldline/featsel.hpp"
#include "moldline/descriptors.hpp"
#include "moldline/metrics.hpp"
#include "moldline/nn/network.hpp"
#include "moldline/preprocess.hpp"
#include "moldline/regress/regressor.hpp"

namespace moldline::train {

using regress::Matrix;
using regress::Vector;

struct CvResult {
  std::vector<double> fold_r2;
  std::vector<double> fold_mse;
  double mean_r2 = 0.0;
  double std_r2 = 0.0;
  double mean_mse = 0.0;
  double std_mse = 0.0;
  std::optional<double> pooled_r2;  // out-of-fold predictions scored together
  std::vector<std::string> flags;

  nlohmann::json to_json() const;
};

/// Seeded k-fold CV. Column standardization (honouring `mask`, row-major
/// N x p, may be empty) and target standardization are re-fitted on each
/// fold's training rows. Folds with fewer than two test rows make per-fold
/// R² undefined; the mean then falls back to the pooled R² and is flagged.
CvResult kfold_cv(const std::string& kind, const nlohmann::json& hyper, const Matrix& X, const Vector& y,
                  int k, std::uint64_t seed, bool pooled = false, std::span<const unsigned char> mask = {});

struct GridRow {
  nlohmann::json hyperparameters;
  CvResult cv;
};

struct GridResult {
  nlohmann::json best;
  std::vector<GridRow> table;
};

/// Exhaustive search; grid keys are visited in lexicographic order with the
/// last key varying fastest. Best mean CV R² wins, ties keep the earlier point.
GridResult grid_search(const std::string& kind, const nlohmann::json& base, const nlohmann::json& grid,
                       const Matrix& X, const Vector& y, int k, std::uint64_t seed,
                       std::span<const unsigned char> mask = {});

/// N x (size*size) area-downscaled images, row-major pixels.
Matrix image_inputs(std::span<const CycleRecord> records, int size);
/// N x (length*channels) resampled signals, sample-major (channels inner).
Matrix signal_inputs(std::span<const CycleRecord> records, int length);

/// Everything fitted from data. Computed from training rows only.
struct FittedStatistics {
  ColumnStandardizer descriptors;
  double label_mean = 0.0;
  double label_std = 1.0;
  ColumnStandardizer pixels;
  ColumnStandardizer signals;
  std::map<std::string, std::vector<std::string>> selected;  // regime -> RFE subset

  bool operator==(const FittedStatistics&) const = default;
  nlohmann::json to_json() const;
};

/// RFE on one regime's columns, training rows only; features and labels are
/// standardized with training statistics first. `labels` covers all rows.
RfeResult select_regime(const FeatureMatrix& fm, std::span<const double> labels,
                        std::span<const std::size_t> train_rows, Regime regime, int folds, std::uint64_t seed);

FittedStatistics fit_statistics(const Dataset& ds, const FeatureMatrix& fm, std::span<const std::size_t> train_rows,
                                const nlohmann::json& cfg);

struct LeakageCheck {
  bool passed = false;
  std::vector<std::string> differences;
};

/// Fits every statistic twice: on the full dataset restricted to its
/// training rows, and on a copy with the test records deleted before
/// extraction. Any difference is reported.
LeakageCheck leakage_guard(const Dataset& ds, const Split& split, const nlohmann::json& cfg, int jobs = 1);

std::string dataset_hash(const Dataset& ds);

struct TrainReport {
  std::string kind;
  std::string regime;
  nlohmann::json hyperparameters;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::string manifest_hash;
  std::string dataset_hash;
  std::vector<std::string> features;
  std::size_t n_features = 0;
  std::string trajectory_file;
  Scores test;
  std::optional<CvResult> cv;
  double seconds = 0.0;
  std::vector<std::string> decisions;
  std::vector<std::string> flags;

  nlohmann::json to_json() const;
  static TrainReport from_json(const nlohmann::json& j);
};

struct RunOutput {
  TrainReport report;
  std::unique_ptr<regress::Regressor> model;
  nlohmann::json preprocessing;  // everything eval needs besides the model
  Vector test_pred;
  Vector test_truth;
  std::vector<nn::TrainPoint> trajectory;
};

/// Input regimes: descriptor models use "signals", "thermo" or "both";
/// image networks use "images"; LSTMs use "raw_signals".
std::string default_regime(const std::string& kind);

class Pipeline {
 public:
  Pipeline(const Dataset& ds, const nlohmann::json& cfg, int jobs = 1);

  const FeatureMatrix& features() const { return fm_; }
  const Split& split() const { return split_; }
  const FittedStatistics& statistics() const { return stats_; }
  const nlohmann::json& config() const { return cfg_; }

  RunOutput run(const std::string& kind, const std::string& regime,
                const std::optional<nlohmann::json>& hyper_override = std::nullopt);

  /// Every enabled (model, regime) pair plus the enabled neural models.
  std::vector<RunOutput> compare_all();

 private:
  RunOutput run_descriptor(const std::string& kind, Regime regime, nlohmann::json hyper);
  RunOutput run_neural(const std::string& kind, nlohmann::json hyper);

  const Dataset& ds_;
  nlohmann::json cfg_;
  int jobs_;
  std::uint64_t seed_;
  FeatureMatrix fm_;
  Split split_;
  Vector labels_;     // raw
  Vector labels_z_;   // standardized with training statistics
  FittedStatistics stats_;
};

/// Applies a trained model file (model + preprocessing) to records.
Vector predict_records(const nlohmann::json& model_file, std::span<const CycleRecord> records,
                       const nlohmann::json& cfg, int jobs = 1);

std::string scores_csv(const std::vector<TrainReport>& reports);
/// Plain-text table ranked by test R² (descending).
std::string ranking_table(const std::vector<TrainReport>& reports);

}  // namespace moldline::train
