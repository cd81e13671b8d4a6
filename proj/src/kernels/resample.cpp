#include <algorithm>
#include <cmath>

#include "tma/error.hpp"
#include "tma/kernels.hpp"

namespace tma {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_taps(double sigma) {
  if (!(sigma > 0.0)) fail(ErrorKind::InvalidArgument, "blur sigma must be positive");
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    taps[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += taps[k + radius];
  }
  for (double& t : taps) t /= total;
  return taps;
}

int scaled_length(int n, double factor) {
  return std::max(1, static_cast<int>(std::lround(n * factor)));
}

namespace kernels {
namespace {

// Two-tap interpolation stencil for one output sample along an axis.
struct Stencil {
  int lo;
  int hi;
  double frac;
};

std::vector<Stencil> axis_stencils(int in, int out) {
  std::vector<Stencil> st(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = std::max((o + 0.5) * scale - 0.5, 0.0);
    int lo = static_cast<int>(src);
    if (lo >= in - 1) {
      st[o] = {in - 1, in - 1, 0.0};
    } else {
      st[o] = {lo, lo + 1, src - lo};
    }
  }
  return st;
}

void check_resample(const Tensor& t, int h, int w) {
  if (h < 1 || w < 1) fail(ErrorKind::InvalidArgument, "resample target must be positive");
  if (t.height() < 1 || t.width() < 1) fail(ErrorKind::InvalidInput, "resample of empty tensor");
}

}  // namespace

Tensor resample_bilinear(const Tensor& input, int out_height, int out_width) {
  check_resample(input, out_height, out_width);
  if (input.height() == out_height && input.width() == out_width) return input;
  const auto xs = axis_stencils(input.width(), out_width);
  const auto ys = axis_stencils(input.height(), out_height);
  const int channels = input.channels();

  Tensor horizontal(Shape{channels, input.height(), out_width});
  const int rows = channels * input.height();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* src = input.data() + static_cast<std::size_t>(r) * input.width();
    double* dst = horizontal.data() + static_cast<std::size_t>(r) * out_width;
    for (int x = 0; x < out_width; ++x) {
      const Stencil& s = xs[x];
      dst[x] = src[s.lo] + s.frac * (src[s.hi] - src[s.lo]);
    }
  }

  Tensor out(Shape{channels, out_height, out_width});
  const int out_rows = channels * out_height;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < out_rows; ++r) {
    const int c = r / out_height;
    const Stencil& s = ys[r % out_height];
    const double* a = &horizontal(c, s.lo, 0);
    const double* b = &horizontal(c, s.hi, 0);
    double* dst = out.data() + static_cast<std::size_t>(r) * out_width;
    for (int x = 0; x < out_width; ++x) dst[x] = a[x] + s.frac * (b[x] - a[x]);
  }
  return out;
}

Tensor resample_bilinear_adjoint(const Tensor& grad_output, int in_height, int in_width) {
  check_resample(grad_output, in_height, in_width);
  if (grad_output.height() == in_height && grad_output.width() == in_width) return grad_output;
  const int out_height = grad_output.height();
  const int out_width = grad_output.width();
  const auto xs = axis_stencils(in_width, out_width);
  const auto ys = axis_stencils(in_height, out_height);
  const int channels = grad_output.channels();

  // Vertical pass adjoint; each channel accumulates into its own plane.
  Tensor horizontal(Shape{channels, in_height, out_width});
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < out_height; ++y) {
      const Stencil& s = ys[y];
      const double* g = grad_output.data() + (static_cast<std::size_t>(c) * out_height + y) * out_width;
      double* a = &horizontal(c, s.lo, 0);
      double* b = &horizontal(c, s.hi, 0);
      for (int x = 0; x < out_width; ++x) {
        a[x] += (1.0 - s.frac) * g[x];
        b[x] += s.frac * g[x];
      }
    }
  }

  Tensor grad(Shape{channels, in_height, in_width});
  const int rows = channels * in_height;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* g = horizontal.data() + static_cast<std::size_t>(r) * out_width;
    double* dst = grad.data() + static_cast<std::size_t>(r) * in_width;
    for (int x = 0; x < out_width; ++x) {
      const Stencil& s = xs[x];
      dst[s.lo] += (1.0 - s.frac) * g[x];
      dst[s.hi] += s.frac * g[x];
    }
  }
  return grad;
}

namespace {

enum class Pass { Forward, Adjoint };

// One separable pass along rows (horizontal) or columns (vertical).
Tensor blur_axis(const Tensor& in, const std::vector<double>& taps, bool horizontal, Pass pass) {
  const int radius = static_cast<int>(taps.size() / 2);
  Tensor out(in.shape());
  const int channels = in.channels();
  const int h = in.height();
  const int w = in.width();
  const int n = horizontal ? w : h;

  // Per-axis tap indices; the same table serves both passes.
  std::vector<int> index(static_cast<std::size_t>(n) * taps.size());
  for (int i = 0; i < n; ++i)
    for (int k = -radius; k <= radius; ++k)
      index[static_cast<std::size_t>(i) * taps.size() + k + radius] = reflect_index(i + k, n);

#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const double* src = in.channel(c).data();
    double* dst = out.channel(c).data();
    const int lines = horizontal ? h : w;
    const std::size_t step = horizontal ? 1 : static_cast<std::size_t>(w);
    for (int line = 0; line < lines; ++line) {
      const std::size_t base = horizontal ? static_cast<std::size_t>(line) * w : line;
      for (int i = 0; i < n; ++i) {
        const int* idx = &index[static_cast<std::size_t>(i) * taps.size()];
        if (pass == Pass::Forward) {
          double acc = 0.0;
          for (std::size_t t = 0; t < taps.size(); ++t) acc += taps[t] * src[base + idx[t] * step];
          dst[base + i * step] = acc;
        } else {
          const double g = src[base + i * step];
          for (std::size_t t = 0; t < taps.size(); ++t) dst[base + idx[t] * step] += taps[t] * g;
        }
      }
    }
  }
  return out;
}

}  // namespace

Tensor gaussian_blur(const Tensor& input, double sigma) {
  const auto taps = gaussian_taps(sigma);
  return blur_axis(blur_axis(input, taps, true, Pass::Forward), taps, false, Pass::Forward);
}

Tensor gaussian_blur_adjoint(const Tensor& grad_output, double sigma) {
  const auto taps = gaussian_taps(sigma);
  return blur_axis(blur_axis(grad_output, taps, false, Pass::Adjoint), taps, true,
                   Pass::Adjoint);
}

}  // namespace kernels
}  // namespace tma
