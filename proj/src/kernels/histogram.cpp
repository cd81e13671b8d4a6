#include <cmath>

#include "tma/error.hpp"
#include "tma/kernels.hpp"

namespace tma::kernels {

std::vector<double> soft_histogram(const Tensor& input, std::span<const double> centers,
                                   double sigma, double scale) {
  if (!(scale > 0.0)) fail(ErrorKind::InvalidArgument, "histogram scale must be positive");
  const int bins = static_cast<int>(centers.size());
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> hist(static_cast<std::size_t>(input.channels()) * bins, 0.0);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < input.channels(); ++c) {
    double* row = hist.data() + static_cast<std::size_t>(c) * bins;
    for (double v : input.channel(c)) {
      const double a = v / scale;
      for (int k = 0; k < bins; ++k) {
        const double d = a - centers[k];
        row[k] += std::exp(-d * d * inv);
      }
    }
  }
  return hist;
}

Tensor soft_histogram_backward(const Tensor& input, std::span<const double> centers,
                               double sigma, double scale,
                               std::span<const double> grad_histogram) {
  const int bins = static_cast<int>(centers.size());
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const double chain = 1.0 / (sigma * sigma * scale);
  Tensor grad(input.shape());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < input.channels(); ++c) {
    const double* g = grad_histogram.data() + static_cast<std::size_t>(c) * bins;
    const auto src = input.channel(c);
    auto dst = grad.channel(c);
    for (std::size_t j = 0; j < src.size(); ++j) {
      const double a = src[j] / scale;
      double acc = 0.0;
      for (int k = 0; k < bins; ++k) {
        const double d = a - centers[k];
        acc -= g[k] * std::exp(-d * d * inv) * d;
      }
      dst[j] = acc * chain;
    }
  }
  return grad;
}

}  // namespace tma::kernels
