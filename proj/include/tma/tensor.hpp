#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tma {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// Dense channel-planar (C x H x W) array of doubles. Used for images,
// activation tensors and their gradients.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
  }
  double operator()(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> channel(int c) {
    return std::span<double>(data_).subspan(c * shape_.plane(), shape_.plane());
  }
  std::span<const double> channel(int c) const {
    return std::span<const double>(data_).subspan(c * shape_.plane(), shape_.plane());
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double max() const;
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double factor);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

double squared_distance(const Tensor& a, const Tensor& b);

// An RGB image with pixel values in [0,1].
//
// frame_extent is the largest dimension of the uncropped frame the image was
// cut from. Resolutions are expressed relative to it, so a cropped query is
// down-sampled with the factor its full frame would have received. For
// uncropped images it equals max(width, height).
class Image {
 public:
  Image() = default;
  // Validates range and dimensions.
  explicit Image(Tensor pixels, std::string id = {}, int frame_extent = 0);
  // Clamps values into [0,1] instead of rejecting them.
  static Image clamped(Tensor pixels, std::string id = {}, int frame_extent = 0);
  static Image constant(int width, int height, double value, std::string id = {});

  int width() const { return pixels_.width(); }
  int height() const { return pixels_.height(); }
  int max_dim() const;
  int frame_extent() const { return frame_extent_; }
  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }
  void set_frame_extent(int extent);

  const Tensor& pixels() const { return pixels_; }
  std::size_t size() const { return pixels_.size(); }

  bool operator==(const Image& other) const { return pixels_ == other.pixels_; }

 private:
  Tensor pixels_;
  std::string id_;
  int frame_extent_ = 0;
};

using ActivationTensor = Tensor;

// Unit-norm global descriptor.
class Descriptor {
 public:
  Descriptor() = default;
  // l2-normalizes; throws UndefinedDirection on a zero vector.
  static Descriptor normalized(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double dot(const Descriptor& other) const;

  bool operator==(const Descriptor&) const = default;

 private:
  explicit Descriptor(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

}  // namespace tma
