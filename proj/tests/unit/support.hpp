#pragma once

// Seeded generators shared by the property tests.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kiwi/core.hpp"

namespace kiwi::test {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  BBox box(double max_xy = 200.0, double min_wh = 1.0, double max_wh = 60.0) {
    return {uniform(0.0, max_xy), uniform(0.0, max_xy), uniform(min_wh, max_wh), uniform(min_wh, max_wh)};
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("kiwi_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Largest number of (pred, gt) pairs with IoU >= threshold, each box used at
// most once. Exhaustive over gt subsets; intended for a handful of boxes.
inline std::size_t optimal_matches(std::span<const BBox> preds, std::span<const BBox> gts, double threshold) {
  const std::size_t full = std::size_t{1} << gts.size();
  std::vector<std::vector<int>> memo(preds.size() + 1, std::vector<int>(full, -1));
  std::function<int(std::size_t, std::size_t)> best = [&](std::size_t i, std::size_t used) -> int {
    if (i == preds.size()) return 0;
    int& m = memo[i][used];
    if (m >= 0) return m;
    m = best(i + 1, used);
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (!(used >> j & 1) && iou(preds[i], gts[j]) >= threshold) m = std::max(m, 1 + best(i + 1, used | (std::size_t{1} << j)));
    }
    return m;
  };
  return static_cast<std::size_t>(best(0, 0));
}

}  // namespace kiwi::test
