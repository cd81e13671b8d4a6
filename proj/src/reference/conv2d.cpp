#include "tma/error.hpp"
#include "tma/reference.hpp"

namespace tma::reference {

Tensor conv2d_forward(const Tensor& input, std::span<const double> weight,
                      std::span<const double> bias, int out_channels, Window w) {
  const Shape in = input.shape();
  const Shape out{out_channels, w.output_length(in.height), w.output_length(in.width)};
  if (out.height < 1 || out.width < 1)
    fail(ErrorKind::InvalidInput, "input smaller than convolution window");
  const int k = w.kernel;
  Tensor result(out);
  for (int o = 0; o < out.channels; ++o) {
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (int c = 0; c < in.channels; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * w.stride - w.pad + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * w.stride - w.pad + kx;
              if (ix < 0 || ix >= in.width) continue;
              acc += weight[((static_cast<std::size_t>(o) * in.channels + c) * k + ky) * k + kx] *
                     input(c, iy, ix);
            }
          }
        }
        result(o, oy, ox) = acc;
      }
    }
  }
  return result;
}

Tensor conv2d_backward_input(const Tensor& grad_output, std::span<const double> weight,
                             Shape input_shape, Window w) {
  const Shape out = grad_output.shape();
  const int k = w.kernel;
  Tensor grad(input_shape);
  for (int o = 0; o < out.channels; ++o) {
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        const double g = grad_output(o, oy, ox);
        for (int c = 0; c < input_shape.channels; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * w.stride - w.pad + ky;
            if (iy < 0 || iy >= input_shape.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * w.stride - w.pad + kx;
              if (ix < 0 || ix >= input_shape.width) continue;
              grad(c, iy, ix) +=
                  g * weight[((static_cast<std::size_t>(o) * input_shape.channels + c) * k + ky) * k + kx];
            }
          }
        }
      }
    }
  }
  return grad;
}

}  // namespace tma::reference
