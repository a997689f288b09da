#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "moldline/dataset.hpp"
#include "moldline/random.hpp"

namespace fixture {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("moldline_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline moldline::CycleRecord random_record(const std::string& id, moldline::Rng& rng, int length = 50,
                                           int img = 8) {
  moldline::CycleRecord r;
  r.cycle_id = id;
  for (auto c : moldline::kChannels) {
    auto& t = r.trace(c);
    t.channel = c;
    t.samples.resize(static_cast<std::size_t>(length + static_cast<int>(c)));
    for (auto& s : t.samples) s = moldline::normal(rng, 10.0, 3.0);
  }
  r.image.width = img;
  r.image.height = img;
  r.image.pixels.resize(static_cast<std::size_t>(img * img));
  for (auto& p : r.image.pixels) p = moldline::uniform01(rng);
  r.image = moldline::snap_to_pgm_grid(r.image, 0.0, 1.0);
  r.width_mm = moldline::normal(rng, 100.0, 0.3);
  return r;
}

inline moldline::Dataset random_dataset(std::size_t n, std::size_t n_test, std::uint64_t seed) {
  moldline::Rng rng(seed);
  moldline::Dataset ds;
  ds.manifest.split_seed = seed;
  ds.manifest.n_test = n_test;
  ds.manifest.n_train = n - n_test;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "r" + std::to_string(1000 + i);
    ds.records.push_back(random_record(id, rng));
    moldline::ManifestEntry e;
    e.cycle_id = id;
    e.trace_path = "cycles/" + id + ".csv";
    e.image_path = "images/" + id + ".pgm";
    e.width_mm = ds.records.back().width_mm;
    ds.manifest.records.push_back(e);
  }
  return ds;
}

}  // namespace fixture
