#pragma once

#include <span>
#include <string>
#include <vector>

#include "tma/tensor.hpp"

namespace tma {

// Eigenvalues of the sample covariance are floored here before inversion.
inline constexpr double kEigenvalueFloor = 1e-9;

// Centering followed by a linear projection (row-major d x d).
struct WhiteningTransform {
  std::vector<double> mean;
  std::vector<double> projection;
  std::string id;

  std::size_t dim() const { return mean.size(); }
  // projection * (v - mean), without normalization.
  std::vector<double> project(std::span<const double> v) const;
};

// l2-normalize(projection * (desc - mean)). Zero result: UndefinedDirection.
Descriptor whiten(const Descriptor& desc, const WhiteningTransform& t);

// PCA whitening: mean = sample mean, projection = L^{-1/2} V^T from the
// eigendecomposition of the (1/N) sample covariance. Fewer than two
// descriptors: InsufficientData.
WhiteningTransform learn_whitening(std::span<const Descriptor> descriptors);

WhiteningTransform identity_whitening(std::size_t dim);

}  // namespace tma
