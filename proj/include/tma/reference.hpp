#pragma once

// Serial reference kernels. Straightforward loops, no parallelism, kept as
// the ground truth for tma::kernels.

#include "tma/kernels.hpp"

namespace tma::reference {

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

}  // namespace tma::reference
