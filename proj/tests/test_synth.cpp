#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "fixtures.hpp"
#include "moldline/cwt.hpp"
#include "moldline/error.hpp"
#include "moldline/synth.hpp"

using namespace moldline;
using namespace moldline::synth;

namespace {

SynthConfig small(int n, double noise = 1.0, int peaks = 3) {
  SynthConfig c;
  c.n_cycles = n;
  c.noise_level = noise;
  c.pressure_peaks = peaks;
  c.image_size = 28;
  return c;
}

// Least squares with intercept through a QR solve, scored on the same rows.
double oracle_r2(const Eigen::MatrixXd& F, const std::vector<double>& y) {
  Eigen::MatrixXd A(F.rows(), F.cols() + 1);
  A << Eigen::VectorXd::Ones(F.rows()), F;
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd beta = A.colPivHouseholderQr().solve(b);
  const double ss_res = (A * beta - b).squaredNorm();
  const double ss_tot = (b.array() - b.mean()).square().sum();
  return 1.0 - ss_res / ss_tot;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_records(const Dataset& a, const Dataset& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto &ra = a.records[i], &rb = b.records[i];
    if (ra.cycle_id != rb.cycle_id || ra.width_mm != rb.width_mm || ra.image.pixels != rb.image.pixels) return false;
    for (auto c : kChannels)
      if (ra.trace(c).samples != rb.trace(c).samples) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("noiseless widths equal the planted function") {
  const auto r = generate(small(30, 0.0), 5);
  for (std::size_t i = 0; i < r.latents.size(); ++i) {
    const auto& z = r.latents[i];
    CHECK(r.dataset.records[i].width_mm.value() == planted_width(z));
    CHECK(r.clean_width[i] == planted_width(z));
    for (double v : {z.zT, z.zP, z.zv}) CHECK((v >= -1.0 && v <= 1.0));
  }
  // Hand evaluation at a fixed point.
  Latents z{0.5, -0.5, 0.5};
  CHECK(planted_width(z) == doctest::Approx(100.0 + 0.15 - 0.10 - 0.05 - 0.02 + 0.05).epsilon(1e-15));
}

TEST_CASE("planted function is identifiable from the oracle features") {
  const auto r = generate(small(60, 0.0), 11);
  const auto y = labels_of(r.dataset);
  CHECK(std::abs(oracle_r2(oracle_features(r.latents), y) - 1.0) < 1e-9);

  // Exported coefficients reproduce every clean width.
  const auto coef = r.ground_truth.at("oracle_coefficients").get<std::vector<double>>();
  const auto F = oracle_features(r.latents);
  for (Eigen::Index i = 0; i < F.rows(); ++i) {
    double w = r.ground_truth.at("intercept").get<double>();
    for (Eigen::Index j = 0; j < 5; ++j) w += coef[static_cast<std::size_t>(j)] * F(i, j);
    CHECK(w == doctest::Approx(r.clean_width[static_cast<std::size_t>(i)]).epsilon(1e-13));
  }

  // Label noise lowers the ceiling but leaves it high.
  const auto noisy = generate(small(60, 1.0), 11);
  const double r2 = oracle_r2(oracle_features(noisy.latents), labels_of(noisy.dataset));
  CHECK(r2 < 1.0 - 1e-6);
  CHECK(r2 > 0.8);
}

TEST_CASE("same seed gives a bitwise identical dataset") {
  const auto cfg = small(12);
  const auto a = generate(cfg, 21, 1);
  const auto b = generate(cfg, 21, 3);
  CHECK(same_records(a.dataset, b.dataset));
  CHECK(a.ground_truth == b.ground_truth);
  CHECK_FALSE(same_records(a.dataset, generate(cfg, 22).dataset));

  fixture::TempDir d1("synth_a"), d2("synth_b");
  write_synth(d1.path, a);
  write_synth(d2.path, b);
  for (const auto& e : std::filesystem::recursive_directory_iterator(d1.path)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), d1.path);
    CHECK(slurp(e.path()) == slurp(d2.path / rel));
  }
  const auto loaded = load_dataset(d1.path);
  CHECK(same_records(a.dataset, loaded));
  CHECK(std::filesystem::exists(d1.path / "ground_truth.json"));
}

TEST_CASE("configured pressure peaks are found by the wavelet detector") {
  for (int k = 1; k <= 6; ++k) {
    CAPTURE(k);
    const auto clean = generate(small(8, 0.0, k), 30 + static_cast<std::uint64_t>(k));
    for (const auto& rec : clean.dataset.records)
      CHECK(cwt::find_peaks_cwt(rec.trace(Channel::InMoldPressure).samples, cwt::PeakParams::defaults()).size() ==
            static_cast<std::size_t>(k));

    // With measurement noise every planted peak is still recovered.
    const auto noisy = generate(small(8, 1.0, k), 30 + static_cast<std::uint64_t>(k));
    for (std::size_t i = 0; i < noisy.dataset.records.size(); ++i) {
      const auto& s = noisy.dataset.records[i].trace(Channel::InMoldPressure).samples;
      const auto peaks = cwt::find_peaks_cwt(s, cwt::PeakParams::defaults());
      const auto& z = noisy.latents[i];
      const double fill = 0.05 + 0.06 / (1.0 + 0.25 * z.zv);
      for (int q = 0; q < k; ++q) {
        const double centre = (fill + 0.07 * q) * static_cast<double>(s.size() - 1);
        double best = 1e300;
        for (const auto& p : peaks) best = std::min(best, std::abs(static_cast<double>(p.index) - centre));
        CHECK(best <= 3.0);
      }
    }
  }
}

TEST_CASE("trace and image shape") {
  auto cfg = small(40, 0.0);
  const auto r = generate(cfg, 3);
  for (const auto& rec : r.dataset.records) {
    const auto n = static_cast<double>(rec.trace(Channel::InMoldPressure).samples.size());
    CHECK(std::abs(n / cfg.trace_length - 1.0) <= cfg.length_jitter + 1e-3);
    for (auto c : kChannels) CHECK(rec.trace(c).samples.size() == static_cast<std::size_t>(n));
    // Noiseless screw position moves forward and then holds.
    const auto& pos = rec.trace(Channel::ScrewPosition).samples;
    for (std::size_t i = 1; i < pos.size(); ++i) CHECK(pos[i] <= pos[i - 1]);
    CHECK(rec.image.width == cfg.image_size);
    for (double p : rec.image.pixels) CHECK((p >= kImageLo && p <= kImageHi));
  }
  // Latents are visible in the image: mean intensity rises with melt temperature.
  double lo_sum = 0, hi_sum = 0;
  int lo_n = 0, hi_n = 0;
  for (std::size_t i = 0; i < r.latents.size(); ++i) {
    double m = 0;
    for (double p : r.dataset.records[i].image.pixels) m += p;
    m /= static_cast<double>(r.dataset.records[i].image.pixels.size());
    (r.latents[i].zT < 0 ? lo_sum : hi_sum) += m;
    ++(r.latents[i].zT < 0 ? lo_n : hi_n);
  }
  CHECK(hi_sum / hi_n > lo_sum / lo_n);
}

TEST_CASE("defaults and split sizes") {
  SynthConfig d;
  CHECK(d.n_cycles == 204);
  CHECK(d.n_test == 0);
  CHECK(test_count(d) == 27);
  d.n_test = 30;
  CHECK(test_count(d) == 30);
  d.n_test = 0;
  CHECK(d.noise_level == 1.0);
  const auto r = generate(small(40), 1);
  const auto m = r.dataset.manifest;
  CHECK(m.n_test + m.n_train == 40);
  auto c = small(40);
  c.n_test = 0;
  CHECK(generate(c, 1).dataset.manifest.n_test == 5);
  CHECK(SynthConfig::from_json(d.to_json()).to_json() == d.to_json());
}

TEST_CASE("bad synth configs") {
  auto expect_bad = [](SynthConfig c) {
    try {
      generate(c, 0);
    } catch (const Error& e) {
      return e.code() == ErrorCode::BadConfig;
    }
    return false;
  };
  CHECK(expect_bad(small(1)));
  auto c = small(10);
  c.noise_level = -1;
  CHECK(expect_bad(c));
  c = small(10);
  c.n_test = 10;
  CHECK(expect_bad(c));
  c = small(10);
  c.pressure_peaks = 0;
  CHECK(expect_bad(c));
  CHECK_THROWS_AS(SynthConfig::from_json({{"n_cycle", 3}}), Error);
}
