#include <limits>

#include "tma/error.hpp"
#include "tma/reference.hpp"

namespace tma::reference {

MaxPoolOutput maxpool2d_forward(const Tensor& input, Window w) {
  const Shape in = input.shape();
  const Shape out{in.channels, w.output_length(in.height), w.output_length(in.width)};
  if (out.height < 1 || out.width < 1)
    fail(ErrorKind::InvalidInput, "input smaller than pooling window");
  MaxPoolOutput result{Tensor(out), {}};
  result.argmax.reserve(out.size());
  for (int c = 0; c < out.channels; ++c) {
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int arg = -1;
        for (int iy = oy * w.stride - w.pad; iy < oy * w.stride - w.pad + w.kernel; ++iy) {
          for (int ix = ox * w.stride - w.pad; ix < ox * w.stride - w.pad + w.kernel; ++ix) {
            if (iy < 0 || ix < 0 || iy >= in.height || ix >= in.width) continue;
            if (input(c, iy, ix) > best) {
              best = input(c, iy, ix);
              arg = iy * in.width + ix;
            }
          }
        }
        result.output(c, oy, ox) = best;
        result.argmax.push_back(arg);
      }
    }
  }
  return result;
}

Tensor maxpool2d_backward(const Tensor& grad_output, std::span<const int> argmax,
                          Shape input_shape) {
  Tensor grad(input_shape);
  std::size_t i = 0;
  for (int c = 0; c < grad_output.channels(); ++c)
    for (int y = 0; y < grad_output.height(); ++y)
      for (int x = 0; x < grad_output.width(); ++x, ++i)
        if (argmax[i] >= 0)
          grad(c, argmax[i] / input_shape.width, argmax[i] % input_shape.width) +=
              grad_output(c, y, x);
  return grad;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values())
    if (v < 0.0) v = 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_output, const Tensor& input) {
  Tensor grad = grad_output;
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(input.data()[i] > 0.0)) grad.data()[i] = 0.0;
  return grad;
}

}  // namespace tma::reference
