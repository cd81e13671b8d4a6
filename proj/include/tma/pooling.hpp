#pragma once

#include <span>
#include <string>
#include <vector>

#include "tma/tensor.hpp"

namespace tma {

enum class PoolingType { MAC, SPoC, GeM, RMAC, CroW };

struct PoolingKind {
  PoolingType type = PoolingType::GeM;
  double p = 3.0;  // GeM exponent, ignored otherwise

  static PoolingKind mac() { return {PoolingType::MAC, 0.0}; }
  static PoolingKind spoc() { return {PoolingType::SPoC, 0.0}; }
  static PoolingKind gem(double p = 3.0);
  static PoolingKind rmac() { return {PoolingType::RMAC, 0.0}; }
  static PoolingKind crow() { return {PoolingType::CroW, 0.0}; }

  // "MAC", "SPoC", "GeM", "GeM(p=2)", "R-MAC", "CroW".
  std::string name() const;
  static PoolingKind parse(const std::string& text);

  bool operator==(const PoolingKind&) const = default;
};

// Activations are clamped at this value before the GeM power.
inline constexpr double kGemEpsilon = 1e-6;
// R-MAC region vectors are divided by (norm + kRmacEpsilon).
inline constexpr double kRmacEpsilon = 1e-6;

struct Region {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

// Global region plus the 3-level square grid with ~40% overlap.
std::vector<Region> rmac_regions(int width, int height, int levels = 3);

// Channel weights log(sum_h Q_h / Q_k) from the nonzero fraction Q of each
// channel; zero for all-zero channels.
std::vector<double> crow_channel_weights(const Tensor& tensor);

// Pooled vector before l2 normalization.
std::vector<double> pool_raw(const Tensor& tensor, PoolingKind kind);
// Gradient of a scalar w.r.t. the tensor, given its gradient w.r.t. pool_raw.
Tensor pool_raw_backward(const Tensor& tensor, PoolingKind kind,
                         std::span<const double> grad_raw);

// l2-normalized pooled descriptor. Throws UndefinedDirection for an all-zero
// tensor and InvalidArgument for negative activations.
Descriptor pool(const Tensor& tensor, PoolingKind kind);

// d/dv of (v/|v|) . direction.
std::vector<double> normalized_dot_gradient(std::span<const double> v,
                                            std::span<const double> direction);

}  // namespace tma
