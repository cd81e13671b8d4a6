#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tma/kernels.hpp"
#include "tma/tensor.hpp"

namespace tma {

namespace layers {

struct Conv {
  int in_channels = 0;
  int out_channels = 0;
  Window window;
  std::vector<double> weight;  // out x in x k x k
  std::vector<double> bias;    // out, or empty
};

struct Relu {};

struct MaxPool {
  Window window;
};

// Two 3x3 convolutions with an identity or 1x1-projection shortcut,
// followed by ReLU (ResNet basic block, batch norm folded into the convs).
struct BasicBlock {
  Conv conv1;
  Conv conv2;
  std::optional<Conv> shortcut;
};

}  // namespace layers

using Layer = std::variant<layers::Conv, layers::Relu, layers::MaxPool, layers::BasicBlock>;

// Intermediate state saved by a forward pass for back-propagation.
struct LayerTape {
  Shape shape;   // input shape
  Tensor input;  // input values, kept only where the backward pass needs them
  std::vector<int> argmax;
  std::vector<LayerTape> inner;
};

struct ForwardTape {
  Shape input_shape;
  std::vector<LayerTape> layers;
};

// Closed index range [first, last] along one spatial axis.
struct Interval {
  int first = 0;
  int last = -1;
  bool empty() const { return last < first; }
};

enum class BackendFamily { AlexNet, ResNet, VGG };

const char* family_code(BackendFamily f);  // "A", "R", "V"
BackendFamily parse_family(const std::string& code);

// A fully convolutional feature extractor. Immutable after construction and
// safe to share across threads.
class FeatureBackend {
 public:
  FeatureBackend(std::string name, BackendFamily family, std::array<double, 3> mean,
                 std::array<double, 3> stddev, std::vector<Layer> layers);

  const std::string& name() const { return name_; }
  BackendFamily family() const { return family_; }
  const std::array<double, 3>& mean() const { return mean_; }
  const std::array<double, 3>& stddev() const { return stddev_; }
  const std::vector<Layer>& layers() const { return layers_; }
  int output_channels() const { return output_channels_; }

  // Throws InvalidInput when the image is too small for the network.
  Shape output_shape(Shape input) const;
  // Smallest square input that still yields a non-empty tensor.
  int min_input_size() const;

  // Activation tensor of pixels in [0,1], clamped at zero.
  Tensor forward(const Tensor& pixels) const;
  Tensor forward(const Image& image) const { return forward(image.pixels()); }
  Tensor forward(const Tensor& pixels, ForwardTape& tape) const;
  // Gradient w.r.t. the input pixels given the gradient w.r.t. the output.
  Tensor backward(const ForwardTape& tape, const Tensor& grad_output) const;

  // Output cells along one axis that can be influenced by input cells in
  // `region` on an axis of length `length`.
  Interval footprint(Interval region, int length) const;

  // Copy whose final layer emits channels in the order given by permutation
  // (output channel i = original channel permutation[i]).
  FeatureBackend with_permuted_output(const std::vector<int>& permutation) const;

 private:
  std::string name_;
  BackendFamily family_;
  std::array<double, 3> mean_;
  std::array<double, 3> stddev_;
  std::vector<Layer> layers_;
  int output_channels_ = 0;
};

using BackendPtr = std::shared_ptr<const FeatureBackend>;

}  // namespace tma
