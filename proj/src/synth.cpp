#include "moldline/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <thread>

#include "moldline/error.hpp"
#include "moldline/random.hpp"
#include "moldline/text_io.hpp"

namespace moldline::synth {

namespace {

constexpr double kPi = std::numbers::pi;

double smooth_step(double u, double at, double width) { return 0.5 * (1.0 + std::tanh((u - at) / width)); }

// 0 before a, 1 after b, monotone quintic in between.
double ramp(double u, double a, double b) {
  const double t = std::clamp((u - a) / (b - a), 0.0, 1.0);
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

struct Phases {
  double start;     // injection start
  double inject;    // injection duration
  double pack_end;  // end of packing
};

Phases phases(const Latents& z) {
  Phases p;
  p.start = 0.05;
  p.inject = 0.06 / (1.0 + 0.25 * z.zv);
  p.pack_end = p.start + p.inject + 0.25;
  return p;
}

double peak_amplitude(int k, const Latents& z) {
  switch (k) {
    case 0: return 30.0 + 10.0 * z.zv + 5.0 * z.zP;
    case 1: return 25.0 + 10.0 * z.zP;
    case 2: return 15.0 + 6.0 * z.zT;
    default: return 10.0 + 3.0 * z.zP;
  }
}

CycleRecord make_cycle(const SynthConfig& cfg, std::size_t index, const Latents& z, Rng& rng) {
  CycleRecord rec;
  char id[16];
  std::snprintf(id, sizeof id, "c%04zu", index + 1);
  rec.cycle_id = id;

  std::uniform_real_distribution<double> jitter(-cfg.length_jitter, cfg.length_jitter);
  const int len = std::max(64, static_cast<int>(std::lround(cfg.trace_length * (1.0 + jitter(rng)))));
  const double nl = cfg.noise_level;
  const Phases ph = phases(z);
  const double u_fill = ph.start + ph.inject;

  for (auto c : kChannels) {
    rec.trace(c).channel = c;
    rec.trace(c).sample_rate_hz = cfg.sample_rate_hz;
    rec.trace(c).samples.resize(static_cast<std::size_t>(len));
  }
  auto& pin = rec.trace(Channel::InMoldPressure).samples;
  auto& tin = rec.trace(Channel::InMoldTemperature).samples;
  auto& phyd = rec.trace(Channel::HydraulicPressure).samples;
  auto& pos = rec.trace(Channel::ScrewPosition).samples;

  // Planted in-mold pressure peaks: separated bumps with widths 3..10 samples.
  std::vector<double> centers, sigmas, amps;
  for (int k = 0; k < cfg.pressure_peaks; ++k) {
    centers.push_back((u_fill + 0.07 * k) * (len - 1));
    sigmas.push_back(cfg.pressure_peaks == 1 ? 5.0 : 3.0 + 7.0 * k / (cfg.pressure_peaks - 1));
    amps.push_back(peak_amplitude(k, z));
  }

  const double cushion = 5.0 - 1.5 * z.zP;
  const double t_peak = 60.0 + 20.0 * z.zT;
  const double tau = 0.25 * (1.0 + 0.2 * z.zP);
  const double u_melt = ph.start + 0.5 * ph.inject;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int i = 0; i < len; ++i) {
    const double u = static_cast<double>(i) / (len - 1);
    double p = 1.0;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double d = (i - centers[k]) / sigmas[k];
      p += amps[k] * std::exp(-0.5 * d * d);
    }
    pin[static_cast<std::size_t>(i)] = p + 0.02 * nl * n01(rng);

    double t = 40.0 + 2.0 * z.zT;
    if (u > u_melt) t += t_peak * (1.0 - std::exp(-(u - u_melt) / 0.01)) * std::exp(-(u - u_melt) / tau);
    tin[static_cast<std::size_t>(i)] = t + 0.05 * nl * n01(rng);

    const double inj = smooth_step(u, ph.start, 0.005) * (1.0 - smooth_step(u, u_fill, 0.005));
    const double pack = smooth_step(u, u_fill, 0.005) * (1.0 - smooth_step(u, ph.pack_end, 0.01));
    phyd[static_cast<std::size_t>(i)] =
        5.0 + (60.0 + 25.0 * z.zv) * inj + (40.0 + 20.0 * z.zP) * pack + 0.3 * nl * n01(rng);

    pos[static_cast<std::size_t>(i)] =
        40.0 - (40.0 - cushion) * ramp(u, ph.start, u_fill + 0.02) + 0.01 * nl * n01(rng);
  }

  // Radial cooling field: level tracks melt temperature, radial fall-off the
  // packing pressure, left-right tilt the injection speed.
  const int S = cfg.image_size;
  rec.image.width = S;
  rec.image.height = S;
  rec.image.pixels.resize(static_cast<std::size_t>(S) * S);
  const double c0 = (S - 1) / 2.0;
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double dx = (x - c0) / c0, dy = (y - c0) / c0;
      const double r2 = dx * dx + dy * dy;
      const double v = 0.6 + 0.2 * z.zT - (0.25 + 0.1 * z.zP) * r2 + 0.06 * z.zv * dx + 0.01 * nl * n01(rng);
      rec.image.at(y, x) = std::clamp(v, kImageLo, kImageHi);
    }
  rec.image = snap_to_pgm_grid(rec.image, kImageLo, kImageHi);
  return rec;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_cycles < 2) fail(ErrorCode::BadConfig, "synth: n_cycles must be >= 2");
  if (!(noise_level >= 0.0) || !std::isfinite(noise_level))
    fail(ErrorCode::BadConfig, "synth: noise_level must be a finite value >= 0");
  if (pressure_peaks < 1 || pressure_peaks > 6) fail(ErrorCode::BadConfig, "synth: pressure_peaks must be 1..6");
  if (trace_length < 1000) fail(ErrorCode::BadConfig, "synth: trace_length must be >= 1000");
  if (!(length_jitter >= 0.0 && length_jitter < 0.2))
    fail(ErrorCode::BadConfig, "synth: length_jitter must be in [0, 0.2)");
  if (image_size < 28) fail(ErrorCode::BadConfig, "synth: image_size must be >= 28");
  if (!(sample_rate_hz > 0.0)) fail(ErrorCode::BadConfig, "synth: sample_rate_hz must be positive");
  if (n_test < 0 || n_test >= n_cycles) fail(ErrorCode::BadConfig, "synth: n_test must be in [0, n_cycles)");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"n_cycles", n_cycles},       {"noise_level", noise_level},   {"pressure_peaks", pressure_peaks},
          {"trace_length", trace_length}, {"length_jitter", length_jitter}, {"image_size", image_size},
          {"sample_rate_hz", sample_rate_hz}, {"n_test", n_test}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  for (const auto& [key, _] : j.items())
    if (!c.to_json().contains(key)) fail(ErrorCode::BadConfig, "synth: unknown setting '" + key + "'");
  c.n_cycles = j.value("n_cycles", c.n_cycles);
  c.noise_level = j.value("noise_level", c.noise_level);
  c.pressure_peaks = j.value("pressure_peaks", c.pressure_peaks);
  c.trace_length = j.value("trace_length", c.trace_length);
  c.length_jitter = j.value("length_jitter", c.length_jitter);
  c.image_size = j.value("image_size", c.image_size);
  c.sample_rate_hz = j.value("sample_rate_hz", c.sample_rate_hz);
  c.n_test = j.value("n_test", c.n_test);
  return c;
}

double planted_width(const Latents& z) {
  return 100.0 + 0.30 * z.zT + 0.20 * z.zP - 0.10 * z.zv + 0.08 * z.zT * z.zP + 0.05 * std::sin(kPi * z.zv);
}

std::size_t test_count(const SynthConfig& config) {
  const auto n = static_cast<std::size_t>(config.n_cycles);
  if (config.n_test > 0) return static_cast<std::size_t>(config.n_test);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(n * 27.0 / 204.0)), 1, n - 1);
}

SynthResult generate(const SynthConfig& config, std::uint64_t seed, int jobs) {
  config.validate();
  const auto n = static_cast<std::size_t>(config.n_cycles);
  SynthResult res;
  res.latents.resize(n);
  res.clean_width.resize(n);
  std::vector<CycleRecord> records(n);
  std::vector<double> widths(n);

  auto work = [&](std::size_t i) {
    Rng rng(derive_seed(derive_seed(seed, "cycle"), i));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Latents z;
    z.zT = u(rng);
    z.zP = u(rng);
    z.zv = u(rng);
    const double noise = normal(rng, 0.0, 1.0) * kLabelNoiseMm * config.noise_level;
    res.latents[i] = z;
    res.clean_width[i] = planted_width(z);
    widths[i] = config.noise_level == 0.0 ? res.clean_width[i] : res.clean_width[i] + noise;
    records[i] = make_cycle(config, i, z, rng);
    records[i].width_mm = widths[i];
  };
  const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, 64));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) work(i);
      });
    for (auto& t : pool) t.join();
  }

  const std::size_t n_test = test_count(config);

  auto& m = res.dataset.manifest;
  m.schema_version = kManifestSchemaVersion;
  m.sample_rate_hz = config.sample_rate_hz;
  m.split_seed = seed;
  m.n_test = n_test;
  m.n_train = n - n_test;
  for (std::size_t i = 0; i < n; ++i) {
    ManifestEntry e;
    e.cycle_id = records[i].cycle_id;
    e.trace_path = "cycles/" + e.cycle_id + ".csv";
    e.image_path = "images/" + e.cycle_id + ".pgm";
    e.image_lo = kImageLo;
    e.image_hi = kImageHi;
    e.width_mm = widths[i];
    m.records.push_back(e);
  }
  res.dataset.records = std::move(records);

  nlohmann::json cycles = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& z = res.latents[i];
    cycles.push_back({{"cycle_id", m.records[i].cycle_id},
                      {"zT", z.zT},
                      {"zP", z.zP},
                      {"zv", z.zv},
                      {"melt_temperature_c", 230.0 + 15.0 * z.zT},
                      {"packing_pressure_bar", 60.0 + 20.0 * z.zP},
                      {"injection_speed_mm_s", 50.0 + 12.5 * z.zv},
                      {"width_clean_mm", res.clean_width[i]},
                      {"width_mm", widths[i]}});
  }
  res.ground_truth = {
      {"formula", "width_mm = 100 + 0.30*zT + 0.20*zP - 0.10*zv + 0.08*zT*zP + 0.05*sin(pi*zv) + noise"},
      {"latents", {{"zT", "melt temperature, 230 + 15*zT degC"},
                   {"zP", "packing pressure, 60 + 20*zP bar"},
                   {"zv", "injection speed, 50 + 12.5*zv mm/s"}}},
      {"intercept", 100.0},
      {"oracle_features", {"zT", "zP", "zv", "zT*zP", "sin(pi*zv)"}},
      {"oracle_coefficients", {0.30, 0.20, -0.10, 0.08, 0.05}},
      {"noise_std_mm", kLabelNoiseMm * config.noise_level},
      {"pressure_peaks", config.pressure_peaks},
      {"seed", seed},
      {"config", config.to_json()},
      {"cycles", cycles}};
  return res;
}

void write_synth(const std::filesystem::path& dir, const SynthResult& result) {
  write_dataset(dir, result.dataset);
  write_file(dir / "ground_truth.json", result.ground_truth.dump(2) + "\n");
}

Eigen::MatrixXd oracle_features(const std::vector<Latents>& latents) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(latents.size()), 5);
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const auto& z = latents[i];
    X.row(static_cast<Eigen::Index>(i)) << z.zT, z.zP, z.zv, z.zT * z.zP, std::sin(kPi * z.zv);
  }
  return X;
}

}  // namespace moldline::synth
