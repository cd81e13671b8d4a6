#pragma once

// OpenMP data-parallel kernels. Each has a serial counterpart with the same
// signature in tma/reference.hpp, used by the tests and the benchmark.

#include <span>
#include <vector>

#include "tma/tensor.hpp"

namespace tma {

struct Window {
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  // Output length for an input of length n; 0 when the window does not fit.
  int output_length(int n) const {
    return n + 2 * pad < kernel ? 0 : (n + 2 * pad - kernel) / stride + 1;
  }
};

struct MaxPoolOutput {
  Tensor output;
  // Flat index into the input channel plane of each output element's maximum.
  std::vector<int> argmax;
};

// Mirror index into [0, n) without repeating the edge sample (d c b | a b c d).
int reflect_index(int i, int n);

// Normalized 1-D Gaussian taps, radius ceil(4 sigma).
std::vector<double> gaussian_taps(double sigma);

// Output size of a bilinear resize along one axis given a scale factor.
int scaled_length(int n, double factor);

namespace kernels {

// Weight layout: out x in x k x k. Bias may be empty.
Tensor conv2d_forward(const Tensor& input, std::span<const double> weight,
                      std::span<const double> bias, int out_channels, Window w);
Tensor conv2d_backward_input(const Tensor& grad_output, std::span<const double> weight,
                             Shape input_shape, Window w);

MaxPoolOutput maxpool2d_forward(const Tensor& input, Window w);
Tensor maxpool2d_backward(const Tensor& grad_output, std::span<const int> argmax,
                          Shape input_shape);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& grad_output, const Tensor& input);

// Bilinear with half-pixel centers, edge clamped, no corner alignment.
Tensor resample_bilinear(const Tensor& input, int out_height, int out_width);
Tensor resample_bilinear_adjoint(const Tensor& grad_output, int in_height, int in_width);

// Separable Gaussian with reflect padding.
Tensor gaussian_blur(const Tensor& input, double sigma);
Tensor gaussian_blur_adjoint(const Tensor& grad_output, double sigma);

// d x |centers| row-major soft counts of input/scale under an RBF kernel.
std::vector<double> soft_histogram(const Tensor& input, std::span<const double> centers,
                                   double sigma, double scale);
Tensor soft_histogram_backward(const Tensor& input, std::span<const double> centers,
                               double sigma, double scale,
                               std::span<const double> grad_histogram);

}  // namespace kernels

}  // namespace tma
