#include "tma/whitening.hpp"

#include <algorithm>

#include <Eigen/Eigenvalues>

#include "tma/error.hpp"

namespace tma {

std::vector<double> WhiteningTransform::project(std::span<const double> v) const {
  const std::size_t d = dim();
  if (v.size() != d || projection.size() != d * d)
    fail(ErrorKind::InvalidArgument, "whitening dimension mismatch");
  std::vector<double> centered(d);
  for (std::size_t i = 0; i < d; ++i) centered[i] = v[i] - mean[i];
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += projection[r * d + c] * centered[c];
    out[r] = acc;
  }
  return out;
}

Descriptor whiten(const Descriptor& desc, const WhiteningTransform& t) {
  std::vector<double> v = t.project(desc.values());
  // Zero up to round-off relative to |P| |desc - mean| counts as zero.
  double frob = 0.0, centered = 0.0, out = 0.0;
  for (double p : t.projection) frob += p * p;
  for (std::size_t i = 0; i < t.dim(); ++i) centered += (desc[i] - t.mean[i]) * (desc[i] - t.mean[i]);
  for (double x : v) out += x * x;
  if (out <= 1e-24 * frob * centered)
    fail(ErrorKind::UndefinedDirection, "whitened descriptor has zero norm");
  return Descriptor::normalized(std::move(v));
}

WhiteningTransform learn_whitening(std::span<const Descriptor> descriptors) {
  if (descriptors.size() < 2)
    fail(ErrorKind::InsufficientData, "whitening needs at least two descriptors, got " +
                                          std::to_string(descriptors.size()));
  const std::size_t d = descriptors.front().dim();
  const auto n = static_cast<Eigen::Index>(descriptors.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (descriptors[i].dim() != d) fail(ErrorKind::InvalidArgument, "mixed descriptor dimensions");
    for (std::size_t j = 0; j < d; ++j) x(i, static_cast<Eigen::Index>(j)) = descriptors[i][j];
  }
  const Eigen::VectorXd mu = x.colwise().mean();
  x.rowwise() -= mu.transpose();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    fail(ErrorKind::NumericalFailure, "covariance eigendecomposition failed");
  // Sign convention: the largest-magnitude entry of each eigenvector is positive.
  Eigen::MatrixXd vectors = eig.eigenvectors();
  for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
    Eigen::Index arg = 0;
    vectors.col(k).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, k) < 0.0) vectors.col(k) *= -1.0;
  }
  const Eigen::VectorXd scale =
      eig.eigenvalues().cwiseMax(kEigenvalueFloor).cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd p = scale.asDiagonal() * vectors.transpose();

  WhiteningTransform t;
  t.mean.assign(mu.data(), mu.data() + d);
  t.projection.resize(d * d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c)
      t.projection[r * d + c] = p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  t.id = "pca-" + std::to_string(descriptors.size()) + "x" + std::to_string(d);
  return t;
}

WhiteningTransform identity_whitening(std::size_t dim) {
  WhiteningTransform t;
  t.mean.assign(dim, 0.0);
  t.projection.assign(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) t.projection[i * dim + i] = 1.0;
  t.id = "identity";
  return t;
}

}  // namespace tma
