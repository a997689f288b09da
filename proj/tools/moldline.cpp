#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "moldline/config.hpp"
#include "moldline/dataset.hpp"
#include "moldline/descriptors.hpp"
#include "moldline/error.hpp"
#include "moldline/featsel.hpp"
#include "moldline/metrics.hpp"
#include "moldline/neural_regressor.hpp"
#include "moldline/regress/ensemble.hpp"
#include "moldline/synth.hpp"
#include "moldline/text_io.hpp"
#include "moldline/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moldline;

namespace {

// Usage errors and unknown models exit 2; data and runtime errors exit 1.
int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownModel:
    case ErrorCode::BadConfig:
    case ErrorCode::InvalidArgument:
      return 2;
    default:
      return 1;
  }
}

void print_error(const std::string& code, const std::string& message, json extra = json::object()) {
  json e{{"error", code}, {"message", message}};
  e.update(extra);
  std::cerr << e.dump() << "\n";
}

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

json resolve(const Common& c) {
  json cfg = load_config(c.config);
  if (c.seed) cfg["seed"] = *c.seed;
  cfg["jobs"] = c.jobs;
  return cfg;
}

void add_common(CLI::App* cmd, Common& c, const json& defaults, bool with_seed = true) {
  cmd->add_option("--config", c.config, std::string("JSON config; falls back to $") + kConfigEnvVar);
  if (with_seed)
    cmd->add_option("--seed", c.seed, "master seed")
        ->default_str(std::to_string(defaults.at("seed").get<std::uint64_t>()));
  cmd->add_option("--jobs", c.jobs, "worker threads")->default_val(defaults.at("jobs").get<int>())->check(CLI::PositiveNumber);
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file(p, j.dump(2) + "\n");
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file(p, s);
}

void require_kind(const std::string& kind) {
  const auto kinds = regress::all_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
    fail(ErrorCode::UnknownModel, "unknown model kind '" + kind + "'");
}

std::vector<std::size_t> rows_for(const Dataset& ds, const std::string& which) {
  const Split sp = split(ds.manifest);
  if (which == "test") return sp.test;
  if (which == "train") return sp.train;
  if (which == "all") {
    std::vector<std::size_t> r(ds.records.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
    return r;
  }
  fail(ErrorCode::InvalidArgument, "--split must be test, train or all");
}

std::string train_log(const train::RunOutput& out) {
  if (!out.trajectory.empty()) return nn::train_log_csv(out.trajectory);
  std::string s = "iteration,loss\n";
  if (auto* g = dynamic_cast<const regress::GradientBoostingLad*>(out.model.get()))
    for (std::size_t i = 0; i < g->train_loss().size(); ++i)
      s += std::to_string(i) + "," + format_double(g->train_loss()[i]) + "\n";
  return s;
}

void save_run(const fs::path& dir, train::RunOutput& out) {
  fs::create_directories(dir);
  json model = regress::save_model(*out.model);
  model["preprocessing"] = out.preprocessing;
  write_json(dir / "model.json", model);
  write_text(dir / "train_log.csv", train_log(out));
  out.report.trajectory_file = "train_log.csv";
  write_json(dir / "report.json", out.report.to_json());
}

// ---------------------------------------------------------------- commands

int cmd_synth(const Common& c, std::optional<int> n, std::optional<double> noise, const std::string& out) {
  json cfg = resolve(c);
  if (n) cfg["synth"]["n_cycles"] = *n;
  if (noise) cfg["synth"]["noise_level"] = *noise;
  const auto sc = synth_config(cfg);
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const auto res = synth::generate(sc, seed, c.jobs);
  synth::write_synth(out, res);
  std::cout << json{{"out", out}, {"n_cycles", sc.n_cycles}, {"seed", seed},
                    {"n_train", res.dataset.manifest.n_train}, {"n_test", res.dataset.manifest.n_test},
                    {"dataset_hash", train::dataset_hash(res.dataset)}}.dump()
            << "\n";
  return 0;
}

int cmd_extract(const Common& c, const std::string& data, const std::string& out,
                const std::optional<std::string>& corr_path) {
  const json cfg = resolve(c);
  const Dataset ds = load_dataset(data, c.jobs);
  const FeatureMatrix fm = build_feature_matrix(ds.records, descriptor_config(cfg), c.jobs);
  write_text(out, write_features_csv(fm));
  json summary{{"out", out}, {"n_rows", fm.n_rows()}, {"n_cols", fm.n_cols()},
               {"manifest_hash", fm.manifest_hash()}};
  if (corr_path) {
    const auto cm = correlation_matrix(fm);
    write_text(*corr_path, correlation_csv(cm.r, fm.columns.names()));
    const double thr = cfg.at("featsel").at("correlation_threshold").get<double>();
    summary["n_correlated"] = count_correlated(cm.r, thr);
    summary["correlation_threshold"] = thr;
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_select(const Common& c, const std::string& features, const std::string& labels, std::optional<int> cv,
               const std::string& regime_name_, const std::string& curve_path, const std::string& subset_path) {
  const json cfg = resolve(c);
  const auto regime = parse_regime(regime_name_);
  if (!regime) fail(ErrorCode::InvalidArgument, "--regime must be signals, thermo or both");
  const FeatureMatrix fm = read_features_csv(read_file(features));
  const Dataset ds = load_dataset(labels, c.jobs);
  const Split sp = split(ds.manifest);

  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < ds.records.size(); ++i) pos[ds.records[i].cycle_id] = i;
  std::vector<double> y(fm.n_rows());
  std::vector<char> is_train(ds.records.size(), 0);
  for (auto r : sp.train) is_train[r] = 1;
  std::vector<std::size_t> train_rows;
  for (std::size_t i = 0; i < fm.n_rows(); ++i) {
    const auto it = pos.find(fm.cycle_ids[i]);
    if (it == pos.end()) fail(ErrorCode::MalformedRecord, "cycle " + fm.cycle_ids[i] + " is not in the dataset");
    const auto& w = ds.records[it->second].width_mm;
    if (!w) fail(ErrorCode::MalformedRecord, "cycle " + fm.cycle_ids[i] + " has no width_mm label");
    y[i] = *w;
    if (is_train[it->second]) train_rows.push_back(i);
  }
  const int folds = cv.value_or(cfg.at("featsel").at("folds").get<int>());
  const auto res = train::select_regime(fm, y, train_rows, *regime, folds,
                                        derive_seed(cfg.at("seed").get<std::uint64_t>(), "rfe"));
  write_text(curve_path, rfe_curve_csv(res));
  const json subset{{"regime", regime_name_},     {"features", res.best_names},
                    {"best_r2", res.best_score},  {"n_candidates", res.curve.size()},
                    {"folds", folds},             {"ridge_fallback", res.ridge_fallback},
                    {"manifest_hash", fm.manifest_hash()}};
  write_json(subset_path, subset);
  std::cout << json{{"curve", curve_path}, {"subset", subset_path}, {"n_selected", res.best_names.size()},
                    {"best_r2", res.best_score}}.dump()
            << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& model, const std::string& data, const std::string& out,
              const std::optional<std::string>& regime, const std::vector<std::string>& sets) {
  json cfg = resolve(c);
  json overrides = json::object();
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidArgument, "--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    json v = json::parse(val, nullptr, false);
    overrides[key] = v.is_discarded() ? json(val) : v;
  }

  if (model == "all") {
    if (!sets.empty()) fail(ErrorCode::InvalidArgument, "--set applies to a single model");
    const Dataset ds = load_dataset(data, c.jobs);
    const auto& t = cfg.at("train");
    if (t.at("models").empty() && t.at("neural_models").empty()) {
      std::cerr << json{{"warning", "no models enabled; empty report"}}.dump() << "\n";
      write_text(fs::path(out) / "scores.csv", train::scores_csv({}));
      return 0;
    }
    train::Pipeline p(ds, cfg, c.jobs);
    auto runs = p.compare_all();
    std::vector<train::TrainReport> reports;
    for (auto& r : runs) {
      save_run(fs::path(out) / (r.report.kind + "_" + r.report.regime), r);
      reports.push_back(r.report);
    }
    write_text(fs::path(out) / "scores.csv", train::scores_csv(reports));
    const auto table = train::ranking_table(reports);
    write_text(fs::path(out) / "ranking.txt", table);
    std::cout << table;
    return 0;
  }

  require_kind(model);
  const std::string reg = regime.value_or(train::default_regime(model));
  const Dataset ds = load_dataset(data, c.jobs);
  train::Pipeline p(ds, cfg, c.jobs);
  auto run = p.run(model, reg, overrides.empty() ? std::nullopt : std::optional<json>(overrides));
  save_run(out, run);
  write_text(fs::path(out) / "scores.csv", train::scores_csv({run.report}));
  std::cout << json{{"model", model}, {"regime", reg}, {"mse", run.report.test.mse}, {"r2", run.report.test.r2},
                    {"n_features", run.report.n_features}, {"out", out}}.dump()
            << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::optional<std::string>& model_path, const std::string& data,
             const std::string& which, const std::optional<std::string>& pred_path,
             const std::optional<std::string>& write_pred, const std::string& scores_path) {
  const json cfg = resolve(c);
  if (!model_path && !pred_path) fail(ErrorCode::InvalidArgument, "eval needs --model or --predictions");
  const Dataset ds = load_dataset(data, c.jobs);
  const auto rows = rows_for(ds, which);
  std::vector<CycleRecord> recs;
  for (auto r : rows) recs.push_back(ds.records[r]);

  // Label scale of the training split; standardized MSE matches the train report.
  const auto all_labels = labels_of(ds);
  std::vector<double> ytr;
  for (auto r : split(ds.manifest).train) ytr.push_back(all_labels[r]);
  auto lab = standardize_fit(ytr);

  regress::Vector pred(static_cast<Eigen::Index>(rows.size()));
  std::string kind = "predictions";
  std::string regime = "-";
  std::size_t n_features = 0;
  std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  if (pred_path) {
    std::map<std::string, double> by_id;
    const std::string text = read_file(*pred_path);
    std::size_t pos = 0;
    bool header = true;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string_view line(text.data() + pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      const auto cells = split_csv_line(line);
      if (header) {
        header = false;
        continue;
      }
      double v;
      if (cells.size() != 2 || !parse_double(cells[1], v))
        fail(ErrorCode::MalformedRecord, "predictions rows must be cycle_id,width_mm");
      by_id[std::string(cells[0])] = v;
    }
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const auto it = by_id.find(recs[i].cycle_id);
      if (it == by_id.end()) fail(ErrorCode::MalformedRecord, "no prediction for cycle " + recs[i].cycle_id);
      pred(static_cast<Eigen::Index>(i)) = it->second;
    }
  } else {
    const json doc = json::parse(read_file(*model_path));
    pred = train::predict_records(doc, recs, cfg, c.jobs);
    kind = doc.at("kind").get<std::string>();
    const auto& pre = doc.at("preprocessing");
    regime = pre.value("regime", "-");
    n_features = pre.at("standardizer").at("means").size();
    lab.mean = pre.at("label_mean").get<double>();
    lab.std = pre.at("label_std").get<double>();
    if (doc.at("hyperparameters").contains("seed")) seed = doc["hyperparameters"]["seed"].get<std::uint64_t>();
  }
  if (write_pred) {
    std::string s = "cycle_id,width_mm\n";
    for (std::size_t i = 0; i < recs.size(); ++i) s += recs[i].cycle_id + "," + format_double(pred(static_cast<Eigen::Index>(i))) + "\n";
    write_text(*write_pred, s);
  }

  regress::Vector truth(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) truth(static_cast<Eigen::Index>(i)) = all_labels[rows[i]];
  const Scores mm = score(pred, truth);
  const Scores z = score((pred.array() - lab.mean) / lab.std, (truth.array() - lab.mean) / lab.std);

  train::TrainReport rep;
  rep.kind = kind;
  rep.regime = regime;
  rep.n_features = n_features;
  rep.seed = seed;
  rep.test = z;
  write_text(scores_path, train::scores_csv({rep}));
  std::cout << json{{"model", kind}, {"split", which}, {"n", rows.size()}, {"mse", z.mse}, {"r2", z.r2},
                    {"mse_mm", mm.mse}, {"r2_degenerate", z.r2_degenerate}}.dump()
            << "\n";
  return 0;
}

int cmd_report(const std::string& runs, const std::optional<std::string>& out, const std::optional<std::string>& table_path) {
  if (!fs::is_directory(runs)) fail(ErrorCode::MissingFile, "runs directory not found: " + runs);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(runs))
    if (e.is_regular_file() && e.path().filename() == "report.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<train::TrainReport> reports;
  for (const auto& f : files) reports.push_back(train::TrainReport::from_json(json::parse(read_file(f))));
  if (reports.empty()) std::cerr << json{{"warning", "no report.json found under " + runs}}.dump() << "\n";
  write_text(out.value_or((fs::path(runs) / "scores.csv").string()), train::scores_csv(reports));
  const auto table = train::ranking_table(reports);
  write_text(table_path.value_or((fs::path(runs) / "ranking.txt").string()), table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const json defaults = default_config();
  CLI::App app{"moldline: part-width regression from injection-cycle signals and thermal images"};
  app.require_subcommand(1);

  Common common;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with planted ground truth");
  std::optional<int> n;
  std::optional<double> noise;
  std::string synth_out;
  synth->add_option("--n", n, "number of cycles")->default_str(std::to_string(defaults["synth"]["n_cycles"].get<int>()));
  synth->add_option("--noise", noise, "noise level (0: noiseless)")
      ->default_str(format_double(defaults["synth"]["noise_level"].get<double>()));
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  add_common(synth, common, defaults);

  auto* extract = app.add_subcommand("extract", "compute the descriptor matrix");
  std::string data, features_out;
  std::optional<std::string> corr;
  extract->add_option("--data", data, "dataset directory or manifest.json")->required();
  extract->add_option("--out", features_out, "features CSV")->default_val("features.csv");
  extract->add_option("--correlation", corr, "also write the correlation matrix CSV");
  add_common(extract, common, defaults, false);

  auto* select = app.add_subcommand("select", "recursive feature elimination on training rows");
  std::string features_in, labels, regime_sel = "both", curve = "rfe_curve.csv", subset = "subset.json";
  std::optional<int> cv;
  select->add_option("--features", features_in, "features CSV from extract")->required();
  select->add_option("--labels", labels, "dataset directory or manifest.json holding labels and split")->required();
  select->add_option("--cv", cv, "folds")->default_str(std::to_string(defaults["featsel"]["folds"].get<int>()));
  select->add_option("--regime", regime_sel, "signals, thermo or both")->capture_default_str();
  select->add_option("--curve", curve, "RFE curve CSV")->capture_default_str();
  select->add_option("--subset", subset, "chosen subset JSON")->capture_default_str();
  add_common(select, common, defaults);

  auto* trn = app.add_subcommand("train", "train one model (or all enabled models) and write reports");
  std::string model_kind, train_out = "run";
  std::optional<std::string> regime;
  std::vector<std::string> sets;
  trn->add_option("--model", model_kind, "model kind, or 'all' for every enabled model")->required();
  trn->add_option("--data", data, "dataset directory or manifest.json")->required();
  trn->add_option("--out", train_out, "output directory")->capture_default_str();
  trn->add_option("--regime", regime, "signals, thermo, both (descriptor models); default per model kind");
  trn->add_option("--set", sets, "hyperparameter override key=value (repeatable)");
  add_common(trn, common, defaults);

  auto* ev = app.add_subcommand("eval", "score a trained model or a predictions file");
  std::optional<std::string> model_path, pred_path, write_pred;
  std::string which = "test", scores_path = "scores.csv";
  ev->add_option("--model", model_path, "model JSON written by train");
  ev->add_option("--data", data, "dataset directory or manifest.json")->required();
  ev->add_option("--split", which, "test, train or all")->capture_default_str();
  ev->add_option("--predictions", pred_path, "score a cycle_id,width_mm CSV instead of a model");
  ev->add_option("--write-predictions", write_pred, "write the predictions that were scored");
  ev->add_option("--scores", scores_path, "scores CSV")->capture_default_str();
  add_common(ev, common, defaults, false);

  auto* rep = app.add_subcommand("report", "consolidate report.json files into scores.csv and a ranking table");
  std::string runs;
  std::optional<std::string> rep_out, rep_table;
  rep->add_option("--runs", runs, "directory searched recursively for report.json")->required();
  rep->add_option("--out", rep_out, "scores CSV (default RUNS/scores.csv)");
  rep->add_option("--table", rep_table, "ranking table (default RUNS/ranking.txt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return 2;
  }

  try {
    if (*synth) return cmd_synth(common, n, noise, synth_out);
    if (*extract) return cmd_extract(common, data, features_out, corr);
    if (*select) return cmd_select(common, features_in, labels, cv, regime_sel, curve, subset);
    if (*trn) return cmd_train(common, model_kind, data, train_out, regime, sets);
    if (*ev) return cmd_eval(common, model_path, data, which, pred_path, write_pred, scores_path);
    if (*rep) return cmd_report(runs, rep_out, rep_table);
  } catch (const Error& e) {
    json extra = json::object();
    if (e.code() == ErrorCode::UnknownModel) extra["valid_kinds"] = regress::all_kinds();
    print_error(std::string(error_code_name(e.code())), e.what(), extra);
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    print_error("MalformedRecord", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return 1;
  }
  return 0;
}
