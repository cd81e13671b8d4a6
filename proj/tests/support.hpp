#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tma/backend.hpp"
#include "tma/tensor.hpp"
#include "tma/weights.hpp"

namespace tma::test {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "tma") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
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

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline Image random_image(int width, int height, std::uint64_t seed) {
  return Image(random_tensor(Shape{3, height, width}, seed, 0.05, 0.95));
}

// Smooth random image: pixels stay away from the clip bounds.
inline Image smooth_image(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(Shape{3, height, width});
  for (int c = 0; c < 3; ++c) {
    const double fx = 1 + 5 * u(rng), fy = 1 + 5 * u(rng), ph = 6.28 * u(rng);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        t(c, y, x) = 0.5 + 0.3 * std::sin(fx * x / width * 6.28 + ph) * std::cos(fy * y / height * 6.28);
  }
  return Image(std::move(t));
}

inline BackendPtr small_backend(BackendFamily family, std::uint64_t seed = 3, double width = 0.125) {
  return std::make_shared<const FeatureBackend>(
      make_synthetic_backend(family, width, seed, family_code(family)));
}

struct Coordinate {
  int c, y, x;
};

inline std::vector<Coordinate> random_coordinates(Shape s, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Coordinate> out;
  for (int i = 0; i < count; ++i)
    out.push_back({static_cast<int>(rng() % s.channels), static_cast<int>(rng() % s.height),
                   static_cast<int>(rng() % s.width)});
  return out;
}

// Central difference of f at one coordinate.
inline double central_difference(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                 Coordinate at, double step) {
  Tensor plus = x, minus = x;
  plus(at.c, at.y, at.x) += step;
  minus(at.c, at.y, at.x) -= step;
  return (f(plus) - f(minus)) / (2.0 * step);
}

// |a - n| / max(|a|, |n|, floor); the floor keeps near-zero entries from
// dominating.
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace tma::test
