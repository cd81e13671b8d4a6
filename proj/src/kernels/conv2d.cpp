#include <algorithm>

#include <Eigen/Core>

#include "tma/error.hpp"
#include "tma/kernels.hpp"

namespace tma::kernels {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using ConstMap = Eigen::Map<const RowMatrix>;

// Unfolded patch blocks of about 1 MB stay cache resident between im2col and GEMM.
constexpr std::size_t kColumnBudget = std::size_t{1} << 17;

int rows_per_block(int patch, int out_w, int out_h) {
  const std::size_t per_row = static_cast<std::size_t>(patch) * out_w;
  return std::clamp(static_cast<int>(kColumnBudget / std::max<std::size_t>(per_row, 1)), 1,
                    out_h);
}

// Unfolds output rows [r0, r1) into a (C*k*k) x ((r1-r0)*out_w) matrix.
void im2col(const Tensor& in, Window w, int out_w, int r0, int r1, double* cols) {
  const int k = w.kernel;
  const int n = (r1 - r0) * out_w;
  const int rows = in.channels() * k * k;
#pragma omp parallel for schedule(static)
  for (int row = 0; row < rows; ++row) {
    const int c = row / (k * k);
    const int ky = (row / k) % k;
    const int kx = row % k;
    double* dst = cols + static_cast<std::size_t>(row) * n;
    for (int oy = r0; oy < r1; ++oy) {
      const int iy = oy * w.stride - w.pad + ky;
      double* line = dst + (oy - r0) * out_w;
      if (iy < 0 || iy >= in.height()) {
        std::fill(line, line + out_w, 0.0);
        continue;
      }
      for (int ox = 0; ox < out_w; ++ox) {
        const int ix = ox * w.stride - w.pad + kx;
        line[ox] = (ix < 0 || ix >= in.width()) ? 0.0 : in(c, iy, ix);
      }
    }
  }
}

// Scatter-adds a patch matrix back onto the input gradient. Rows of one
// channel touch only that channel, so channels run in parallel.
void col2im(const double* cols, Window w, int out_w, int r0, int r1, Tensor& grad) {
  const int k = w.kernel;
  const int n = (r1 - r0) * out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < grad.channels(); ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * n;
        for (int oy = r0; oy < r1; ++oy) {
          const int iy = oy * w.stride - w.pad + ky;
          if (iy < 0 || iy >= grad.height()) continue;
          const double* line = src + (oy - r0) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * w.stride - w.pad + kx;
            if (ix >= 0 && ix < grad.width()) grad(c, iy, ix) += line[ox];
          }
        }
      }
    }
  }
}

Shape conv_output_shape(Shape in, int out_channels, Window w) {
  Shape out{out_channels, w.output_length(in.height), w.output_length(in.width)};
  if (out.height < 1 || out.width < 1)
    fail(ErrorKind::InvalidInput, "input " + to_string(in) +
                                      " is smaller than the convolution window");
  return out;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, std::span<const double> weight,
                      std::span<const double> bias, int out_channels, Window w) {
  const int patch = input.channels() * w.kernel * w.kernel;
  if (weight.size() != static_cast<std::size_t>(out_channels) * patch)
    fail(ErrorKind::InvalidArgument, "conv weight size does not match input channels");
  const Shape out_shape = conv_output_shape(input.shape(), out_channels, w);
  Tensor out(out_shape);
  const int block = rows_per_block(patch, out_shape.width, out_shape.height);
  std::vector<double> cols(static_cast<std::size_t>(patch) * block * out_shape.width);
  const ConstMap kernel_matrix(weight.data(), out_channels, patch);
  const auto plane = static_cast<Eigen::Index>(out_shape.plane());

  for (int r0 = 0; r0 < out_shape.height; r0 += block) {
    const int r1 = std::min(r0 + block, out_shape.height);
    const int n = (r1 - r0) * out_shape.width;
    im2col(input, w, out_shape.width, r0, r1, cols.data());
    StridedMap result(out.data() + static_cast<std::size_t>(r0) * out_shape.width,
                      out_channels, n, Eigen::OuterStride<>(plane));
    result.noalias() = kernel_matrix * ConstMap(cols.data(), patch, n);
  }

  if (!bias.empty()) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < out_channels; ++c) {
      for (double& v : out.channel(c)) v += bias[c];
    }
  }
  return out;
}

Tensor conv2d_backward_input(const Tensor& grad_output, std::span<const double> weight,
                             Shape input_shape, Window w) {
  const int out_channels = grad_output.channels();
  const int patch = input_shape.channels * w.kernel * w.kernel;
  if (weight.size() != static_cast<std::size_t>(out_channels) * patch)
    fail(ErrorKind::InvalidArgument, "conv weight size does not match gradient channels");
  const Shape out_shape = grad_output.shape();
  Tensor grad(input_shape);
  const int block = rows_per_block(patch, out_shape.width, out_shape.height);
  std::vector<double> cols(static_cast<std::size_t>(patch) * block * out_shape.width);
  const ConstMap kernel_matrix(weight.data(), out_channels, patch);
  const auto plane = static_cast<Eigen::Index>(out_shape.plane());

  for (int r0 = 0; r0 < out_shape.height; r0 += block) {
    const int r1 = std::min(r0 + block, out_shape.height);
    const int n = (r1 - r0) * out_shape.width;
    ConstStridedMap g(grad_output.data() + static_cast<std::size_t>(r0) * out_shape.width,
                      out_channels, n, Eigen::OuterStride<>(plane));
    Eigen::Map<RowMatrix> c(cols.data(), patch, n);
    c.noalias() = kernel_matrix.transpose() * g;
    col2im(cols.data(), w, out_shape.width, r0, r1, grad);
  }
  return grad;
}

}  // namespace tma::kernels
