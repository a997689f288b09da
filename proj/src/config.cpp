#include "moldline/config.hpp"

#include <cstdlib>

#include "moldline/error.hpp"
#include "moldline/random.hpp"
#include "moldline/regress/regressor.hpp"
#include "moldline/text_io.hpp"

namespace moldline {

nlohmann::json default_config() {
  using nlohmann::json;
  json models = json::object();
  for (const auto& kind : regress::all_kinds()) {
    json h = regress::default_hyperparameters(kind);
    h.erase("seed");  // always derived from the run seed
    models[kind] = h;
  }
  json channels = json::array();
  for (auto c : kChannels) channels.push_back(std::string(channel_name(c)));

  return {
      {"seed", 7},
      {"jobs", 1},
      {"synth", synth::SynthConfig{}.to_json()},
      {"preprocess", {{"signal_length", 3000}, {"image_size", 28}}},
      {"descriptors",
       {{"cwt_channels", channels},
        {"include_peak_positions", false},
        {"glcm_levels", 8},
        {"max_scale", 32},
        {"min_snr", 1.0},
        {"min_ridge_length", 0},
        {"gap_thresh", 2},
        {"noise_window", 256},
        {"noise_percentile", 95.0}}},
      {"featsel", {{"enabled", true}, {"folds", 5}, {"correlation_threshold", 0.95}}},
      {"train",
       {{"cv_folds", 5},
        {"pooled_r2", false},
        {"cv_report", true},
        {"grid_search", false},
        {"regimes", {"signals", "thermo", "both"}},
        {"models", regress::classical_kinds()},
        {"neural_models", json::array()}}},
      {"models", models},
      {"grids",
       {{"lasso", {{"l1", {0.01, 0.03162, 0.1, 0.3162, 1.0}}}},
        {"elastic_net", {{"l1", {0.00023, 0.0023, 0.023}}, {"l2", {0.00033, 0.0033, 0.033}}}},
        {"svr", {{"C", {0.1, 1.0, 10.0}}}},
        {"knn", {{"k", {1, 2, 3, 5}}}},
        {"tree", {{"max_depth", {1, 2, 3, 4}}}},
        {"gbm", {{"learning_rate", {0.05, 0.1}}}}}}};
}

namespace {

void check_model_kind(const std::string& kind) {
  (void)regress::default_hyperparameters(kind);  // raises UnknownModel
}

void merge_into(nlohmann::json& base, const nlohmann::json& over, const std::string& path) {
  if (!over.is_object()) fail(ErrorCode::BadConfig, "config section '" + path + "' must be an object");
  for (const auto& [key, value] : over.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (path == "models" || path == "grids") {
      check_model_kind(key);
      if (path == "models") {
        const auto defaults = regress::default_hyperparameters(key);
        for (const auto& [hk, _] : value.items())
          if (!defaults.contains(hk)) fail(ErrorCode::BadConfig, "unknown hyperparameter '" + here + "." + hk + "'");
      } else {
        for (const auto& [hk, hv] : value.items())
          if (!hv.is_array() || hv.empty())
            fail(ErrorCode::BadConfig, "grid '" + here + "." + hk + "' must be a non-empty list");
      }
      if (!base.contains(key) || path == "grids") {
        base[key] = value;
        continue;
      }
      merge_into(base[key], value, here);
      continue;
    }
    if (!base.contains(key)) fail(ErrorCode::BadConfig, "unknown config key '" + here + "'");
    if (base[key].is_object() && path != "models")
      merge_into(base[key], value, here);
    else
      base[key] = value;
  }
}

}  // namespace

nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& overrides) {
  nlohmann::json out = base;
  if (overrides.is_null()) return out;
  merge_into(out, overrides, "");
  return out;
}

std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return std::filesystem::path(*flag);
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return std::filesystem::path(env);
  return std::nullopt;
}

nlohmann::json load_config(const std::optional<std::string>& flag) {
  auto cfg = default_config();
  const auto path = resolve_config_path(flag);
  if (!path) return cfg;
  nlohmann::json over;
  try {
    over = nlohmann::json::parse(read_file(*path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::BadConfig, "config " + path->string() + " is not valid JSON: " + e.what());
  }
  return merge_config(cfg, over);
}

DescriptorConfig descriptor_config(const nlohmann::json& cfg) {
  const auto& d = cfg.at("descriptors");
  DescriptorConfig c;
  c.peaks.scales.clear();
  const int max_scale = d.at("max_scale").get<int>();
  if (max_scale < 1) fail(ErrorCode::BadConfig, "descriptors.max_scale must be >= 1");
  for (int s = 1; s <= max_scale; ++s) c.peaks.scales.push_back(s);
  c.peaks.min_snr = d.at("min_snr").get<double>();
  c.peaks.min_ridge_length = d.at("min_ridge_length").get<int>();
  c.peaks.gap_thresh = d.at("gap_thresh").get<int>();
  c.peaks.noise_window = d.at("noise_window").get<int>();
  c.peaks.noise_percentile = d.at("noise_percentile").get<double>();
  c.cwt_channels.fill(false);
  for (const auto& name : d.at("cwt_channels")) {
    const auto ch = parse_channel(name.get<std::string>());
    if (!ch) fail(ErrorCode::BadConfig, "unknown channel '" + name.get<std::string>() + "'");
    c.cwt_channels[static_cast<std::size_t>(*ch)] = true;
  }
  c.include_peak_positions = d.at("include_peak_positions").get<bool>();
  c.glcm_levels = d.at("glcm_levels").get<int>();
  return c;
}

synth::SynthConfig synth_config(const nlohmann::json& cfg) { return synth::SynthConfig::from_json(cfg.at("synth")); }

nlohmann::json model_hyperparameters(const nlohmann::json& cfg, const std::string& kind, std::uint64_t seed) {
  nlohmann::json h = regress::default_hyperparameters(kind);
  if (cfg.contains("models") && cfg.at("models").contains(kind))
    for (const auto& [k, v] : cfg.at("models").at(kind).items()) h[k] = v;
  h["seed"] = derive_seed(seed, kind);
  return h;
}

}  // namespace moldline
