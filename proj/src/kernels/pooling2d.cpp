#include <limits>

#include "tma/error.hpp"
#include "tma/kernels.hpp"

namespace tma::kernels {

MaxPoolOutput maxpool2d_forward(const Tensor& input, Window w) {
  const Shape in = input.shape();
  const Shape out{in.channels, w.output_length(in.height), w.output_length(in.width)};
  if (out.height < 1 || out.width < 1)
    fail(ErrorKind::InvalidInput, "input " + to_string(in) + " is smaller than the pooling window");
  if (2 * w.pad > w.kernel) fail(ErrorKind::InvalidArgument, "pooling pad exceeds half window");

  MaxPoolOutput result{Tensor(out), std::vector<int>(out.size(), -1)};
#pragma omp parallel for schedule(static)
  for (int c = 0; c < out.channels; ++c) {
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int best_index = -1;
        for (int ky = 0; ky < w.kernel; ++ky) {
          const int iy = oy * w.stride - w.pad + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < w.kernel; ++kx) {
            const int ix = ox * w.stride - w.pad + kx;
            if (ix < 0 || ix >= in.width) continue;
            const double v = input(c, iy, ix);
            if (v > best) {
              best = v;
              best_index = iy * in.width + ix;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(c) * out.height + oy) * out.width + ox;
        result.output.data()[o] = best;
        result.argmax[o] = best_index;
      }
    }
  }
  return result;
}

Tensor maxpool2d_backward(const Tensor& grad_output, std::span<const int> argmax,
                          Shape input_shape) {
  Tensor grad(input_shape);
  const std::size_t plane = grad_output.shape().plane();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < grad_output.channels(); ++c) {
    const double* g = grad_output.data() + c * plane;
    const int* idx = argmax.data() + c * plane;
    double* dst = grad.channel(c).data();
    for (std::size_t i = 0; i < plane; ++i) {
      if (idx[i] >= 0) dst[idx[i]] += g[i];
    }
  }
  return grad;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  const double* src = input.data();
  double* dst = out.data();
  const auto n = static_cast<std::ptrdiff_t>(input.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_output, const Tensor& input) {
  Tensor grad(input.shape());
  const double* g = grad_output.data();
  const double* x = input.data();
  double* dst = grad.data();
  const auto n = static_cast<std::ptrdiff_t>(input.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = x[i] > 0.0 ? g[i] : 0.0;
  return grad;
}

}  // namespace tma::kernels
