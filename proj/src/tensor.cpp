#include "tma/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "tma/error.hpp"

namespace tma {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InvalidResolution: return "invalid-resolution";
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::UndefinedDirection: return "undefined-direction";
    case ErrorKind::DegenerateTarget: return "degenerate-target";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Io: return "io";
    case ErrorKind::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {
  if (shape.channels < 0 || shape.height < 0 || shape.width < 0)
    fail(ErrorKind::InvalidArgument, "negative tensor dimension " + to_string(shape));
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape.size())
    fail(ErrorKind::InvalidArgument, "tensor value count does not match shape " +
                                         to_string(shape));
}

double Tensor::max() const {
  if (data_.empty()) fail(ErrorKind::InvalidInput, "max of empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!(shape_ == other.shape_))
    fail(ErrorKind::InvalidArgument, "shape mismatch " + to_string(shape_) + " vs " +
                                         to_string(other.shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double factor) {
  for (double& v : data_) v *= factor;
  return *this;
}

double squared_distance(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape()))
    fail(ErrorKind::InvalidArgument, "shape mismatch " + to_string(a.shape()) + " vs " +
                                         to_string(b.shape()));
  double acc = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = pa[i] - pb[i];
    acc += d * d;
  }
  return acc;
}

Image::Image(Tensor pixels, std::string id, int frame_extent)
    : pixels_(std::move(pixels)), id_(std::move(id)) {
  if (pixels_.channels() != 3)
    fail(ErrorKind::InvalidInput, "image must have 3 channels, got " +
                                      std::to_string(pixels_.channels()));
  if (pixels_.width() < 1 || pixels_.height() < 1)
    fail(ErrorKind::InvalidInput, "image dimensions must be positive");
  for (double v : pixels_.values()) {
    if (!(v >= 0.0 && v <= 1.0))
      fail(ErrorKind::InvalidInput, "image pixel outside [0,1]: " + std::to_string(v));
  }
  set_frame_extent(frame_extent);
}

Image Image::clamped(Tensor pixels, std::string id, int frame_extent) {
  for (double& v : pixels.values()) {
    if (std::isnan(v))
      fail(ErrorKind::NumericalFailure, "NaN pixel while building image");
    v = std::clamp(v, 0.0, 1.0);
  }
  return Image(std::move(pixels), std::move(id), frame_extent);
}

Image Image::constant(int width, int height, double value, std::string id) {
  return Image(Tensor(Shape{3, height, width}, value), std::move(id));
}

int Image::max_dim() const { return std::max(width(), height()); }

void Image::set_frame_extent(int extent) {
  if (extent < 0) fail(ErrorKind::InvalidArgument, "negative frame extent");
  frame_extent_ = extent == 0 ? max_dim() : extent;
  if (frame_extent_ < max_dim())
    fail(ErrorKind::InvalidArgument, "frame extent smaller than image");
}

Descriptor Descriptor::normalized(std::vector<double> values) {
  double norm2 = 0.0;
  for (double v : values) norm2 += v * v;
  const double norm = std::sqrt(norm2);
  if (!(norm > 0.0) || !std::isfinite(norm))
    fail(ErrorKind::UndefinedDirection, "cannot normalize a zero-norm vector");
  for (double& v : values) v /= norm;
  return Descriptor(std::move(values));
}

double Descriptor::dot(const Descriptor& other) const {
  if (dim() != other.dim())
    fail(ErrorKind::InvalidArgument, "descriptor dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) acc += values_[i] * other.values_[i];
  return acc;
}

}  // namespace tma
