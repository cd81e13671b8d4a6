#include <algorithm>
#include <cmath>

#include "tma/error.hpp"
#include "tma/reference.hpp"

namespace tma::reference {
namespace {

// Source coordinate of output sample o (half-pixel centers).
void source(int o, int in, int out, int& lo, int& hi, double& frac) {
  const double src = std::max((o + 0.5) * in / out - 0.5, 0.0);
  lo = std::min(static_cast<int>(std::floor(src)), in - 1);
  hi = std::min(lo + 1, in - 1);
  frac = lo == in - 1 ? 0.0 : src - lo;
}

}  // namespace

// Direct 2-D bilinear formula, one output pixel at a time.
Tensor resample_bilinear(const Tensor& input, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1)
    fail(ErrorKind::InvalidArgument, "resample target must be positive");
  Tensor out(Shape{input.channels(), out_height, out_width});
  for (int c = 0; c < input.channels(); ++c) {
    for (int y = 0; y < out_height; ++y) {
      int y0, y1;
      double fy;
      source(y, input.height(), out_height, y0, y1, fy);
      for (int x = 0; x < out_width; ++x) {
        int x0, x1;
        double fx;
        source(x, input.width(), out_width, x0, x1, fx);
        out(c, y, x) = (1 - fy) * (1 - fx) * input(c, y0, x0) + (1 - fy) * fx * input(c, y0, x1) +
                       fy * (1 - fx) * input(c, y1, x0) + fy * fx * input(c, y1, x1);
      }
    }
  }
  return out;
}

Tensor resample_bilinear_adjoint(const Tensor& grad_output, int in_height, int in_width) {
  Tensor grad(Shape{grad_output.channels(), in_height, in_width});
  for (int c = 0; c < grad_output.channels(); ++c) {
    for (int y = 0; y < grad_output.height(); ++y) {
      int y0, y1;
      double fy;
      source(y, in_height, grad_output.height(), y0, y1, fy);
      for (int x = 0; x < grad_output.width(); ++x) {
        int x0, x1;
        double fx;
        source(x, in_width, grad_output.width(), x0, x1, fx);
        const double g = grad_output(c, y, x);
        grad(c, y0, x0) += (1 - fy) * (1 - fx) * g;
        grad(c, y0, x1) += (1 - fy) * fx * g;
        grad(c, y1, x0) += fy * (1 - fx) * g;
        grad(c, y1, x1) += fy * fx * g;
      }
    }
  }
  return grad;
}

// Dense 2-D convolution with the outer-product kernel.
Tensor gaussian_blur(const Tensor& input, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const int r = static_cast<int>(taps.size() / 2);
  Tensor out(input.shape());
  for (int c = 0; c < input.channels(); ++c)
    for (int y = 0; y < input.height(); ++y)
      for (int x = 0; x < input.width(); ++x) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            acc += taps[dy + r] * taps[dx + r] *
                   input(c, reflect_index(y + dy, input.height()),
                         reflect_index(x + dx, input.width()));
        out(c, y, x) = acc;
      }
  return out;
}

Tensor gaussian_blur_adjoint(const Tensor& grad_output, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const int r = static_cast<int>(taps.size() / 2);
  Tensor grad(grad_output.shape());
  for (int c = 0; c < grad_output.channels(); ++c)
    for (int y = 0; y < grad_output.height(); ++y)
      for (int x = 0; x < grad_output.width(); ++x)
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            grad(c, reflect_index(y + dy, grad.height()), reflect_index(x + dx, grad.width())) +=
                taps[dy + r] * taps[dx + r] * grad_output(c, y, x);
  return grad;
}

}  // namespace tma::reference
