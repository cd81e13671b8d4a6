#pragma once

#include "tma/tensor.hpp"

namespace tma {

// Smallest accepted resolution (largest image side). Below this the
// backends' strides leave no spatial extent.
inline constexpr int kMinResolution = 32;

// Blur width used before down-sampling to resolution s.
double blur_sigma(int frame_extent, int resolution);

// Re-samples so that the image's frame has largest side s. For uncropped
// images this makes max(W, H) == s; cropped images are scaled by the same
// factor their full frame would get.
Image resample(const Image& image, int resolution);

// Bilinear resize to explicit dimensions. frame_extent is scaled along.
Image resample_to(const Image& image, int width, int height);

Image gaussian_blur(const Image& image, double sigma);

// gaussian_blur with blur_sigma(frame, s), then resample to s.
Image blur_resample(const Image& image, int resolution);

// The linear image transform applied before the network at one attack or
// test resolution. Exposes the adjoint for back-propagation to pixels.
class ResolutionTransform {
 public:
  ResolutionTransform(Shape input, int frame_extent, int resolution, bool blur);

  const Shape& input_shape() const { return input_; }
  const Shape& output_shape() const { return output_; }
  bool identity() const { return !blur_ && input_ == output_; }

  Tensor apply(const Tensor& pixels) const;
  Tensor adjoint(const Tensor& grad_output) const;

 private:
  Shape input_;
  Shape output_;
  bool blur_;
  double sigma_;
};

}  // namespace tma
