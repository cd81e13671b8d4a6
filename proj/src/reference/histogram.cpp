#include <cmath>

#include "tma/reference.hpp"

namespace tma::reference {

std::vector<double> soft_histogram(const Tensor& input, std::span<const double> centers,
                                   double sigma, double scale) {
  const std::size_t bins = centers.size();
  std::vector<double> hist(input.channels() * bins, 0.0);
  for (int c = 0; c < input.channels(); ++c)
    for (int y = 0; y < input.height(); ++y)
      for (int x = 0; x < input.width(); ++x)
        for (std::size_t k = 0; k < bins; ++k) {
          const double d = input(c, y, x) / scale - centers[k];
          hist[c * bins + k] += std::exp(-(d * d) / (2.0 * sigma * sigma));
        }
  return hist;
}

Tensor soft_histogram_backward(const Tensor& input, std::span<const double> centers,
                               double sigma, double scale,
                               std::span<const double> grad_histogram) {
  const std::size_t bins = centers.size();
  Tensor grad(input.shape());
  for (int c = 0; c < input.channels(); ++c)
    for (int y = 0; y < input.height(); ++y)
      for (int x = 0; x < input.width(); ++x)
        for (std::size_t k = 0; k < bins; ++k) {
          const double d = input(c, y, x) / scale - centers[k];
          const double kernel = std::exp(-(d * d) / (2.0 * sigma * sigma));
          grad(c, y, x) += grad_histogram[c * bins + k] * kernel * (-d / (sigma * sigma)) / scale;
        }
  return grad;
}

}  // namespace tma::reference
