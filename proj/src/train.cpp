#include "moldline/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <thread>

#include "moldline/config.hpp"
#include "moldline/error.hpp"
#include "moldline/featsel.hpp"
#include "moldline/neural_regressor.hpp"
#include "moldline/random.hpp"
#include "moldline/text_io.hpp"

namespace moldline::train {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> row_major(const Matrix& X) {
  std::vector<double> out(static_cast<std::size_t>(X.size()));
  Eigen::Map<RowMajor>(out.data(), X.rows(), X.cols()) = X;
  return out;
}

Matrix from_row_major(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const RowMajor>(v.data(), rows, cols);
}

Matrix take_rows(const Matrix& X, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Vector take(const Vector& y, const std::vector<std::size_t>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<unsigned char> take_mask(std::span<const unsigned char> mask, std::size_t cols,
                                     const std::vector<std::size_t>& rows) {
  std::vector<unsigned char> out;
  if (mask.empty()) return out;
  out.reserve(rows.size() * cols);
  for (auto r : rows) out.insert(out.end(), mask.begin() + static_cast<std::ptrdiff_t>(r * cols),
                                 mask.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  return out;
}

// Population mean/std of a target vector; zero spread maps to unit std.
std::pair<double, double> target_stats(const Vector& y) {
  const double m = y.mean();
  const double sd = std::sqrt((y.array() - m).square().sum() / static_cast<double>(y.size()));
  return {m, sd > 0.0 ? sd : 1.0};
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

std::string hex16(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t hash_doubles(std::span<const double> v, std::uint64_t h) {
  for (double d : v) {
    char bytes[sizeof(double)];
    std::memcpy(bytes, &d, sizeof d);
    h = fnv1a(std::string_view(bytes, sizeof bytes), h);
  }
  return h;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---------------------------------------------------------------- CV

nlohmann::json CvResult::to_json() const {
  nlohmann::json j{{"fold_r2", fold_r2}, {"fold_mse", fold_mse}, {"mean_r2", mean_r2},
                   {"std_r2", std_r2},   {"mean_mse", mean_mse}, {"std_mse", std_mse}, {"flags", flags}};
  if (pooled_r2) j["pooled_r2"] = *pooled_r2;
  return j;
}

CvResult kfold_cv(const std::string& kind, const nlohmann::json& hyper, const Matrix& X, const Vector& y, int k,
                  std::uint64_t seed, bool pooled, std::span<const unsigned char> mask) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto p = static_cast<std::size_t>(X.cols());
  if (static_cast<std::size_t>(y.size()) != n) fail(ErrorCode::ShapeMismatch, "cv: X rows must match y");
  if (!mask.empty() && mask.size() != n * p) fail(ErrorCode::ShapeMismatch, "cv: mask size mismatch");
  const auto fold = fold_assignment(n, k, seed);
  const std::vector<double> flat = row_major(X);

  CvResult res;
  Vector oof(static_cast<Eigen::Index>(n));
  bool tiny_fold = false;
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? te : tr).push_back(i);

    ColumnStandardizer cs;
    cs.fit(flat, p, tr, mask);
    auto standardized = [&](const std::vector<std::size_t>& rows) {
      std::vector<double> block;
      block.reserve(rows.size() * p);
      for (auto r : rows) block.insert(block.end(), flat.begin() + static_cast<std::ptrdiff_t>(r * p),
                                       flat.begin() + static_cast<std::ptrdiff_t>((r + 1) * p));
      const auto m = take_mask(mask, p, rows);
      cs.apply_inplace(block, m);
      return from_row_major(block, static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
    };
    const Vector ytr = take(y, tr);
    const auto [ym, ys] = target_stats(ytr);
    const Vector ztr = (ytr.array() - ym) / ys;
    const Vector zte = (take(y, te).array() - ym) / ys;

    auto model = regress::make_regressor(kind, hyper);
    model->fit(standardized(tr), ztr);
    const Vector pred = model->predict(standardized(te));
    const Scores s = score(pred, zte);
    res.fold_r2.push_back(s.r2);
    res.fold_mse.push_back(s.mse);
    if (te.size() < 2) tiny_fold = true;
    for (std::size_t i = 0; i < te.size(); ++i) oof(static_cast<Eigen::Index>(te[i])) = pred(static_cast<Eigen::Index>(i)) * ys + ym;
  }
  res.mean_mse = mean_of(res.fold_mse);
  res.std_mse = std_of(res.fold_mse);
  if (pooled || tiny_fold) res.pooled_r2 = score(oof, y).r2;
  if (tiny_fold) {
    res.flags.push_back("pooled_r2_single_point_folds");
    res.mean_r2 = *res.pooled_r2;
    res.std_r2 = 0.0;
  } else if (pooled) {
    res.mean_r2 = *res.pooled_r2;
    res.std_r2 = std_of(res.fold_r2);
  } else {
    res.mean_r2 = mean_of(res.fold_r2);
    res.std_r2 = std_of(res.fold_r2);
  }
  return res;
}

GridResult grid_search(const std::string& kind, const nlohmann::json& base, const nlohmann::json& grid,
                       const Matrix& X, const Vector& y, int k, std::uint64_t seed,
                       std::span<const unsigned char> mask) {
  std::vector<std::string> keys;
  std::vector<std::vector<nlohmann::json>> values;
  for (const auto& [key, list] : grid.items()) {
    if (!list.is_array() || list.empty()) fail(ErrorCode::BadConfig, "grid entry '" + key + "' must be a non-empty list");
    keys.push_back(key);
    values.emplace_back(list.begin(), list.end());
  }
  GridResult res;
  std::vector<std::size_t> pos(keys.size(), 0);
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    nlohmann::json h = base;
    for (std::size_t i = 0; i < keys.size(); ++i) h[keys[i]] = values[i][pos[i]];
    GridRow row{h, kfold_cv(kind, h, X, y, k, seed, false, mask)};
    if (res.table.empty() || row.cv.mean_r2 > best) {
      best = row.cv.mean_r2;
      res.best = h;
    }
    res.table.push_back(std::move(row));
    std::size_t i = keys.size();
    while (i > 0) {
      --i;
      if (++pos[i] < values[i].size()) break;
      pos[i] = 0;
      if (i == 0) return res;
    }
    if (keys.empty()) return res;
  }
}

// ---------------------------------------------------------------- raw inputs

Matrix image_inputs(std::span<const CycleRecord> records, int size) {
  Matrix X(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(size) * size);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ThermoImage small = downscale_image(records[i].image, size, size);
    X.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(small.pixels.data(), X.cols());
  }
  return X;
}

Matrix signal_inputs(std::span<const CycleRecord> records, int length) {
  const auto C = static_cast<Eigen::Index>(kNumChannels);
  Matrix X(static_cast<Eigen::Index>(records.size()), length * C);
  for (std::size_t i = 0; i < records.size(); ++i)
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      const auto r = resample_linear(records[i].traces[c], static_cast<std::size_t>(length));
      for (int s = 0; s < length; ++s)
        X(static_cast<Eigen::Index>(i), s * C + static_cast<Eigen::Index>(c)) = r[static_cast<std::size_t>(s)];
    }
  return X;
}

// ---------------------------------------------------------------- fitted statistics

nlohmann::json FittedStatistics::to_json() const {
  return {{"descriptors", descriptors.to_json()},
          {"label_mean", label_mean},
          {"label_std", label_std},
          {"pixels", pixels.to_json()},
          {"signals", signals.to_json()},
          {"selected", selected}};
}

RfeResult select_regime(const FeatureMatrix& fm, std::span<const double> labels,
                        std::span<const std::size_t> train_rows, Regime regime, int folds, std::uint64_t seed) {
  if (labels.size() != fm.n_rows()) fail(ErrorCode::ShapeMismatch, "one label per feature row required");
  const auto cols = regime_columns(fm.columns, regime);
  if (cols.empty()) fail(ErrorCode::InvalidArgument, "regime '" + std::string(regime_name(regime)) + "' has no columns");
  ColumnStandardizer cs;
  cs.fit(fm.values, fm.n_cols(), train_rows, fm.imputed);
  std::vector<double> z = fm.values;
  cs.apply_inplace(z, fm.imputed);

  std::vector<double> ytr;
  for (auto r : train_rows) ytr.push_back(labels[r]);
  const auto lab = standardize_fit(ytr);
  Vector yz(static_cast<Eigen::Index>(ytr.size()));
  for (std::size_t i = 0; i < ytr.size(); ++i) yz(static_cast<Eigen::Index>(i)) = (ytr[i] - lab.mean) / lab.std;

  Matrix X(static_cast<Eigen::Index>(train_rows.size()), static_cast<Eigen::Index>(cols.size()));
  std::vector<std::string> names;
  for (auto c : cols) names.push_back(fm.columns.entries[c].name);
  for (std::size_t i = 0; i < train_rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = z[train_rows[i] * fm.n_cols() + cols[j]];
  RfeParams rp;
  rp.folds = folds;
  rp.seed = seed;
  return rfe(X, yz, names, rp);
}

FittedStatistics fit_statistics(const Dataset& ds, const FeatureMatrix& fm, std::span<const std::size_t> train_rows,
                                const nlohmann::json& cfg) {
  FittedStatistics st;
  st.descriptors.fit(fm.values, fm.n_cols(), train_rows, fm.imputed);

  const auto labels = labels_of(ds);
  std::vector<double> ytr;
  for (auto r : train_rows) ytr.push_back(labels.at(r));
  const auto lab = standardize_fit(ytr);
  st.label_mean = lab.mean;
  st.label_std = lab.std;

  const auto& pre = cfg.at("preprocess");
  const auto img = row_major(image_inputs(ds.records, pre.at("image_size").get<int>()));
  st.pixels.fit(img, img.size() / ds.records.size(), train_rows);
  const auto sig = row_major(signal_inputs(ds.records, pre.at("signal_length").get<int>()));
  st.signals.fit(sig, sig.size() / ds.records.size(), train_rows);

  if (cfg.at("featsel").at("enabled").get<bool>()) {
    const int folds = cfg.at("featsel").at("folds").get<int>();
    const auto seed = derive_seed(cfg.at("seed").get<std::uint64_t>(), "rfe");
    for (const auto& rname : cfg.at("train").at("regimes")) {
      const auto regime = parse_regime(rname.get<std::string>());
      if (!regime) fail(ErrorCode::BadConfig, "unknown regime '" + rname.get<std::string>() + "'");
      if (regime_columns(fm.columns, *regime).empty()) continue;
      st.selected[rname.get<std::string>()] = select_regime(fm, labels, train_rows, *regime, folds, seed).best_names;
    }
  }
  return st;
}

LeakageCheck leakage_guard(const Dataset& ds, const Split& sp, const nlohmann::json& cfg, int jobs) {
  const auto dcfg = descriptor_config(cfg);
  const FeatureMatrix fm_full = build_feature_matrix(ds.records, dcfg, jobs);
  const FittedStatistics full = fit_statistics(ds, fm_full, sp.train, cfg);

  Dataset reduced;
  reduced.manifest = ds.manifest;
  reduced.manifest.records.clear();
  for (auto r : sp.train) {
    reduced.manifest.records.push_back(ds.manifest.records[r]);
    reduced.records.push_back(ds.records[r]);
  }
  reduced.manifest.n_train = sp.train.size();
  reduced.manifest.n_test = 0;
  const FeatureMatrix fm_red = build_feature_matrix(reduced.records, dcfg, jobs);
  const auto rows = all_rows(reduced.records.size());
  const FittedStatistics red = fit_statistics(reduced, fm_red, rows, cfg);

  LeakageCheck out;
  if (!(full.descriptors == red.descriptors)) out.differences.push_back("descriptor standardization");
  if (full.label_mean != red.label_mean || full.label_std != red.label_std) out.differences.push_back("label standardization");
  if (!(full.pixels == red.pixels)) out.differences.push_back("pixel standardization");
  if (!(full.signals == red.signals)) out.differences.push_back("signal standardization");
  if (full.selected != red.selected) out.differences.push_back("selected feature subsets");
  if (fm_full.manifest_hash() != fm_red.manifest_hash()) out.differences.push_back("descriptor manifest");
  out.passed = out.differences.empty();
  return out;
}

std::string dataset_hash(const Dataset& ds) {
  std::uint64_t h = fnv1a("");
  for (const auto& r : ds.records) {
    h = fnv1a(r.cycle_id, h);
    if (r.width_mm) h = hash_doubles(std::span<const double>(&*r.width_mm, 1), h);
    for (const auto& t : r.traces) h = hash_doubles(t.samples, h);
    h = hash_doubles(r.image.pixels, h);
  }
  return hex16(h);
}

// ---------------------------------------------------------------- reports

nlohmann::json TrainReport::to_json() const {
  nlohmann::json j{{"kind", kind},
                   {"regime", regime},
                   {"hyperparameters", hyperparameters},
                   {"seed", seed},
                   {"split", {{"seed", split_seed}, {"n_train", n_train}, {"n_test", n_test}}},
                   {"manifest_hash", manifest_hash},
                   {"dataset_hash", dataset_hash},
                   {"n_features", n_features},
                   {"features", features},
                   {"trajectory_file", trajectory_file},
                   {"mse", test.mse},
                   {"r2", test.r2},
                   {"r2_degenerate", test.r2_degenerate},
                   {"seconds", seconds},
                   {"decisions", decisions},
                   {"flags", flags}};
  j["cv"] = cv ? cv->to_json() : nlohmann::json();
  return j;
}

TrainReport TrainReport::from_json(const nlohmann::json& j) {
  TrainReport r;
  r.kind = j.at("kind").get<std::string>();
  r.regime = j.at("regime").get<std::string>();
  r.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
  r.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("split")) {
    r.split_seed = j["split"].value("seed", std::uint64_t{0});
    r.n_train = j["split"].value("n_train", std::size_t{0});
    r.n_test = j["split"].value("n_test", std::size_t{0});
  }
  r.manifest_hash = j.value("manifest_hash", "");
  r.dataset_hash = j.value("dataset_hash", "");
  r.n_features = j.value("n_features", std::size_t{0});
  r.features = j.value("features", std::vector<std::string>{});
  r.trajectory_file = j.value("trajectory_file", "");
  r.test.mse = j.at("mse").get<double>();
  r.test.r2 = j.at("r2").get<double>();
  r.test.r2_degenerate = j.value("r2_degenerate", false);
  r.seconds = j.value("seconds", 0.0);
  r.decisions = j.value("decisions", std::vector<std::string>{});
  r.flags = j.value("flags", std::vector<std::string>{});
  if (j.contains("cv") && j["cv"].is_object()) {
    CvResult cv;
    const auto& c = j["cv"];
    cv.fold_r2 = c.value("fold_r2", std::vector<double>{});
    cv.fold_mse = c.value("fold_mse", std::vector<double>{});
    cv.mean_r2 = c.value("mean_r2", 0.0);
    cv.std_r2 = c.value("std_r2", 0.0);
    cv.mean_mse = c.value("mean_mse", 0.0);
    cv.std_mse = c.value("std_mse", 0.0);
    if (c.contains("pooled_r2")) cv.pooled_r2 = c["pooled_r2"].get<double>();
    cv.flags = c.value("flags", std::vector<std::string>{});
    r.cv = cv;
  }
  return r;
}

std::string scores_csv(const std::vector<TrainReport>& reports) {
  std::string out = "model,regime,n_features,mse,r2,seconds,seed\n";
  for (const auto& r : reports)
    out += r.kind + "," + r.regime + "," + std::to_string(r.n_features) + "," + format_double(r.test.mse) + "," +
           format_double(r.test.r2) + "," + format_double(r.seconds) + "," + std::to_string(r.seed) + "\n";
  return out;
}

std::string ranking_table(const std::vector<TrainReport>& reports) {
  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return reports[a].test.r2 > reports[b].test.r2; });
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-4s %-14s %-12s %10s %10s %10s %10s\n", "rank", "model", "regime",
                "n_features", "mse", "r2", "cv_r2");
  out += line;
  int rank = 1;
  for (auto i : order) {
    const auto& r = reports[i];
    char cv[32] = "-";
    if (r.cv) std::snprintf(cv, sizeof cv, "%.4f", r.cv->mean_r2);
    std::snprintf(line, sizeof line, "%-4d %-14s %-12s %10zu %10.4f %10.4f %10s\n", rank++, r.kind.c_str(),
                  r.regime.c_str(), r.n_features, r.test.mse, r.test.r2, cv);
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------- pipeline

std::string default_regime(const std::string& kind) {
  if (kind == "lstm1" || kind == "lstm2") return "raw_signals";
  if (regress::is_neural_kind(kind)) return "images";
  return "both";
}

Pipeline::Pipeline(const Dataset& ds, const nlohmann::json& cfg, int jobs)
    : ds_(ds), cfg_(cfg), jobs_(std::max(1, jobs)), seed_(cfg.at("seed").get<std::uint64_t>()) {
  if (ds.records.size() < 3) fail(ErrorCode::TooFewValues, "training needs at least 3 records");
  fm_ = build_feature_matrix(ds.records, descriptor_config(cfg_), jobs_);
  split_ = moldline::split(ds.manifest);
  const auto labels = labels_of(ds);
  labels_ = Eigen::Map<const Vector>(labels.data(), static_cast<Eigen::Index>(labels.size()));
  stats_ = fit_statistics(ds, fm_, split_.train, cfg_);
  labels_z_ = (labels_.array() - stats_.label_mean) / stats_.label_std;
}

RunOutput Pipeline::run(const std::string& kind, const std::string& regime,
                        const std::optional<nlohmann::json>& hyper_override) {
  nlohmann::json hyper = model_hyperparameters(cfg_, kind, seed_);
  if (hyper_override)
    for (const auto& [k, v] : hyper_override->items()) {
      if (!hyper.contains(k)) fail(ErrorCode::BadConfig, kind + ": unknown hyperparameter '" + k + "'");
      hyper[k] = v;
    }
  if (regress::is_neural_kind(kind)) {
    if (regime != default_regime(kind))
      fail(ErrorCode::BadConfig, kind + " takes the '" + default_regime(kind) + "' inputs, not '" + regime + "'");
    return run_neural(kind, hyper);
  }
  const auto r = parse_regime(regime);
  if (!r) fail(ErrorCode::BadConfig, "unknown regime '" + regime + "' (signals, thermo, both)");
  return run_descriptor(kind, *r, hyper);
}

RunOutput Pipeline::run_descriptor(const std::string& kind, Regime regime, nlohmann::json hyper) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string rname(regime_name(regime));
  std::vector<std::size_t> cols = regime_columns(fm_.columns, regime);
  const bool featsel = cfg_.at("featsel").at("enabled").get<bool>();
  if (featsel) {
    const auto it = stats_.selected.find(rname);
    if (it == stats_.selected.end())
      fail(ErrorCode::BadConfig, "regime '" + rname + "' is not listed in train.regimes; no feature subset fitted");
    cols.clear();
    for (const auto& name : it->second) cols.push_back(*fm_.columns.index_of(name));
  }
  if (cols.empty()) fail(ErrorCode::InvalidArgument, "regime '" + rname + "' has no descriptor columns");
  const FeatureMatrix sub = fm_.select_columns(cols);
  const std::size_t p = cols.size();

  ColumnStandardizer cs;
  cs.fit(sub.values, p, split_.train, sub.imputed);
  std::vector<double> z = sub.values;
  cs.apply_inplace(z, sub.imputed);
  const Matrix Z = from_row_major(z, static_cast<Eigen::Index>(sub.n_rows()), static_cast<Eigen::Index>(p));
  const Matrix raw = from_row_major(sub.values, static_cast<Eigen::Index>(sub.n_rows()), static_cast<Eigen::Index>(p));

  const Matrix raw_tr = take_rows(raw, split_.train);
  const auto mask_tr = take_mask(sub.imputed, p, split_.train);
  const Vector y_tr_raw = take(labels_, split_.train);
  const int folds = cfg_.at("train").at("cv_folds").get<int>();
  const std::uint64_t cv_seed = derive_seed(seed_, "cv");

  RunOutput out;
  auto& rep = out.report;
  if (cfg_.at("train").at("grid_search").get<bool>() && cfg_.at("grids").contains(kind)) {
    const auto g = grid_search(kind, hyper, cfg_.at("grids").at(kind), raw_tr, y_tr_raw, folds, cv_seed, mask_tr);
    hyper = g.best;
    rep.decisions.push_back("hyperparameters chosen by " + std::to_string(folds) + "-fold grid search over " +
                            std::to_string(g.table.size()) + " points on training rows");
  }

  out.model = regress::make_regressor(kind, hyper);
  out.model->fit(take_rows(Z, split_.train), take(labels_z_, split_.train));
  out.test_pred = out.model->predict(take_rows(Z, split_.test));
  out.test_truth = take(labels_z_, split_.test);
  rep.test = score(out.test_pred, out.test_truth);
  if (cfg_.at("train").at("cv_report").get<bool>())
    rep.cv = kfold_cv(kind, hyper, raw_tr, y_tr_raw, folds, cv_seed, cfg_.at("train").at("pooled_r2").get<bool>(),
                      mask_tr);

  rep.kind = kind;
  rep.regime = rname;
  rep.hyperparameters = hyper;
  rep.seed = seed_;
  rep.split_seed = ds_.manifest.split_seed;
  rep.n_train = split_.train.size();
  rep.n_test = split_.test.size();
  rep.manifest_hash = fm_.manifest_hash();
  rep.dataset_hash = dataset_hash(ds_);
  rep.features = sub.columns.names();
  rep.n_features = p;
  rep.flags = out.model->flags();
  if (!cs.constant_columns().empty()) rep.flags.push_back("constant_columns");
  rep.decisions.push_back("descriptor columns standardized with training-row statistics; imputed cells set to 0");
  rep.decisions.push_back("labels standardized with training mean/std; mse in standardized units");
  if (featsel) rep.decisions.push_back("feature subset chosen by recursive elimination on training rows");
  rep.seconds = seconds_since(t0);

  out.preprocessing = {{"input", "descriptors"},
                       {"regime", rname},
                       {"columns", rep.features},
                       {"manifest_hash", rep.manifest_hash},
                       {"standardizer", cs.to_json()},
                       {"label_mean", stats_.label_mean},
                       {"label_std", stats_.label_std}};
  return out;
}

RunOutput Pipeline::run_neural(const std::string& kind, nlohmann::json hyper) {
  const auto t0 = std::chrono::steady_clock::now();
  const bool is_lstm = kind == "lstm1" || kind == "lstm2";
  const auto& pre = cfg_.at("preprocess");
  const int size = pre.at("image_size").get<int>();
  const int length = pre.at("signal_length").get<int>();
  if (is_lstm) {
    hyper["signal_length"] = length;
    hyper["channels"] = static_cast<int>(kNumChannels);
  } else if (size != 28) {
    fail(ErrorCode::BadConfig, "image networks take 28x28 inputs; preprocess.image_size must be 28");
  }
  Matrix X = is_lstm ? signal_inputs(ds_.records, length) : image_inputs(ds_.records, size);
  const ColumnStandardizer& cs = is_lstm ? stats_.signals : stats_.pixels;
  std::vector<double> flat = row_major(X);
  cs.apply_inplace(flat);
  X = from_row_major(flat, X.rows(), X.cols());

  RunOutput out;
  auto& rep = out.report;
  out.model = regress::make_regressor(kind, hyper);
  out.model->fit(take_rows(X, split_.train), take(labels_z_, split_.train));
  out.test_pred = out.model->predict(take_rows(X, split_.test));
  out.test_truth = take(labels_z_, split_.test);
  rep.test = score(out.test_pred, out.test_truth);

  auto* neural = dynamic_cast<NeuralRegressor*>(out.model.get());
  out.trajectory = neural->trajectory();
  rep.kind = kind;
  rep.regime = default_regime(kind);
  rep.hyperparameters = hyper;
  rep.seed = seed_;
  rep.split_seed = ds_.manifest.split_seed;
  rep.n_train = split_.train.size();
  rep.n_test = split_.test.size();
  rep.dataset_hash = dataset_hash(ds_);
  rep.n_features = static_cast<std::size_t>(X.cols());
  rep.flags = out.model->flags();
  rep.decisions.push_back("architecture " + neural->describe());
  rep.decisions.push_back("labels standardized with training mean/std; mse in standardized units");
  if (is_lstm) {
    const auto s = neural->lstm_spec();
    rep.decisions.push_back("signals resampled to " + std::to_string(length) +
                            " samples and standardized per (position, channel) over training rows");
    rep.decisions.push_back("lstm framing: " + std::to_string(s.timesteps) + " steps of " +
                            std::to_string(s.input_size) + " features (contiguous windows, channels inner)");
    rep.decisions.push_back("gradient clipping at global norm " + format_double(s.clip_norm));
  } else {
    rep.decisions.push_back("images area-downscaled to " + std::to_string(size) + "x" + std::to_string(size) +
                            " and standardized per pixel over training rows");
    rep.decisions.push_back(hyper.at("dropout_rate_is_keep").get<bool>()
                                ? "dropout rate " + format_double(hyper.at("dropout_rate").get<double>()) +
                                      " read as keep probability"
                                : "dropout rate " + format_double(hyper.at("dropout_rate").get<double>()) +
                                      " read as drop probability");
  }
  rep.seconds = seconds_since(t0);

  out.preprocessing = {{"input", is_lstm ? "signals" : "images"},
                       {"regime", rep.regime},
                       {"standardizer", cs.to_json()},
                       {"label_mean", stats_.label_mean},
                       {"label_std", stats_.label_std}};
  if (is_lstm)
    out.preprocessing["signal_length"] = length;
  else
    out.preprocessing["image_size"] = size;
  return out;
}

std::vector<RunOutput> Pipeline::compare_all() {
  std::vector<std::pair<std::string, std::string>> runs;
  const auto& t = cfg_.at("train");
  for (const auto& m : t.at("models"))
    for (const auto& r : t.at("regimes")) runs.emplace_back(m.get<std::string>(), r.get<std::string>());
  for (const auto& m : t.at("neural_models")) runs.emplace_back(m.get<std::string>(), default_regime(m.get<std::string>()));

  std::vector<RunOutput> out(runs.size());
  if (jobs_ <= 1 || runs.size() < 2) {
    for (std::size_t i = 0; i < runs.size(); ++i) out[i] = run(runs[i].first, runs[i].second);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(runs.size());
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs_; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < runs.size();) {
        try {
          out[i] = run(runs[i].first, runs[i].second);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

Vector predict_records(const nlohmann::json& model_file, std::span<const CycleRecord> records,
                       const nlohmann::json& cfg, int jobs) {
  if (!model_file.contains("preprocessing"))
    fail(ErrorCode::MalformedRecord, "model file has no preprocessing section");
  const auto& pre = model_file.at("preprocessing");
  const auto model = regress::load_model(model_file);
  const auto cs = ColumnStandardizer::from_json(pre.at("standardizer"));
  const std::string input = pre.at("input").get<std::string>();
  Matrix X;
  std::vector<unsigned char> mask;
  if (input == "descriptors") {
    const FeatureMatrix fm = build_feature_matrix(records, descriptor_config(cfg), jobs);
    if (fm.manifest_hash() != pre.at("manifest_hash").get<std::string>())
      fail(ErrorCode::ShapeMismatch, "descriptor manifest differs from the one the model was trained on");
    std::vector<std::size_t> cols;
    for (const auto& name : pre.at("columns")) cols.push_back(*fm.columns.index_of(name.get<std::string>()));
    const FeatureMatrix sub = fm.select_columns(cols);
    std::vector<double> z = sub.values;
    cs.apply_inplace(z, sub.imputed);
    X = from_row_major(z, static_cast<Eigen::Index>(sub.n_rows()), static_cast<Eigen::Index>(cols.size()));
  } else {
    X = input == "signals" ? signal_inputs(records, pre.at("signal_length").get<int>())
                           : image_inputs(records, pre.at("image_size").get<int>());
    std::vector<double> flat = row_major(X);
    cs.apply_inplace(flat);
    X = from_row_major(flat, X.rows(), X.cols());
  }
  const Vector z = model->predict(X);
  return z.array() * pre.at("label_std").get<double>() + pre.at("label_mean").get<double>();
}

}  // namespace moldline::train
