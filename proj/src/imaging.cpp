#include "tma/imaging.hpp"

#include <algorithm>

#include "tma/error.hpp"
#include "tma/kernels.hpp"

namespace tma {
namespace {

void check_resolution(int resolution) {
  if (resolution < kMinResolution)
    fail(ErrorKind::InvalidResolution, "resolution " + std::to_string(resolution) +
                                           " is below the minimum of " +
                                           std::to_string(kMinResolution));
}

Shape scaled_shape(Shape in, int frame_extent, int resolution) {
  const double factor = static_cast<double>(resolution) / frame_extent;
  return Shape{in.channels, scaled_length(in.height, factor), scaled_length(in.width, factor)};
}

}  // namespace

double blur_sigma(int frame_extent, int resolution) {
  check_resolution(resolution);
  return 0.3 * frame_extent / resolution;
}

Image resample(const Image& image, int resolution) {
  check_resolution(resolution);
  const Shape out = scaled_shape(image.pixels().shape(), image.frame_extent(), resolution);
  Image result = Image::clamped(kernels::resample_bilinear(image.pixels(), out.height, out.width),
                                image.id(), std::max(resolution, std::max(out.height, out.width)));
  return result;
}

Image resample_to(const Image& image, int width, int height) {
  if (width < 1 || height < 1) fail(ErrorKind::InvalidArgument, "resample to empty size");
  const double factor = std::max(static_cast<double>(width) / image.width(),
                                 static_cast<double>(height) / image.height());
  const int frame = std::max(std::max(width, height), scaled_length(image.frame_extent(), factor));
  return Image::clamped(kernels::resample_bilinear(image.pixels(), height, width), image.id(),
                        frame);
}

Image gaussian_blur(const Image& image, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorKind::InvalidArgument, "blur sigma must be positive");
  return Image::clamped(kernels::gaussian_blur(image.pixels(), sigma), image.id(),
                        image.frame_extent());
}

Image blur_resample(const Image& image, int resolution) {
  return resample(gaussian_blur(image, blur_sigma(image.frame_extent(), resolution)), resolution);
}

ResolutionTransform::ResolutionTransform(Shape input, int frame_extent, int resolution, bool blur)
    : input_(input),
      output_(scaled_shape(input, frame_extent, resolution)),
      blur_(blur),
      sigma_(blur ? blur_sigma(frame_extent, resolution) : 0.0) {
  check_resolution(resolution);
}

Tensor ResolutionTransform::apply(const Tensor& pixels) const {
  if (!(pixels.shape() == input_))
    fail(ErrorKind::InvalidArgument, "transform input shape mismatch");
  if (blur_)
    return kernels::resample_bilinear(kernels::gaussian_blur(pixels, sigma_), output_.height,
                                      output_.width);
  return kernels::resample_bilinear(pixels, output_.height, output_.width);
}

Tensor ResolutionTransform::adjoint(const Tensor& grad_output) const {
  Tensor g = kernels::resample_bilinear_adjoint(grad_output, input_.height, input_.width);
  if (blur_) return kernels::gaussian_blur_adjoint(g, sigma_);
  return g;
}

}  // namespace tma
