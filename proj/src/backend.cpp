#include "tma/backend.hpp"

#include <algorithm>

#include "tma/error.hpp"

namespace tma {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Shape window_shape(Shape in, int channels, Window w) {
  return Shape{channels, w.output_length(in.height), w.output_length(in.width)};
}

Shape layer_shape(const Layer& layer, Shape in) {
  return std::visit(
      Overloaded{
          [&](const layers::Conv& c) { return window_shape(in, c.out_channels, c.window); },
          [&](const layers::Relu&) { return in; },
          [&](const layers::MaxPool& p) { return window_shape(in, in.channels, p.window); },
          [&](const layers::BasicBlock& b) {
            const Shape mid = window_shape(in, b.conv1.out_channels, b.conv1.window);
            return window_shape(mid, b.conv2.out_channels, b.conv2.window);
          },
      },
      layer);
}

Tensor conv_forward(const layers::Conv& c, const Tensor& in) {
  return kernels::conv2d_forward(in, c.weight, c.bias, c.out_channels, c.window);
}

Tensor conv_backward(const layers::Conv& c, const Tensor& grad, Shape in) {
  return kernels::conv2d_backward_input(grad, c.weight, in, c.window);
}

Tensor block_forward(const layers::BasicBlock& b, const Tensor& in, LayerTape* tape) {
  Tensor mid = conv_forward(b.conv1, in);
  Tensor hidden = kernels::relu_forward(mid);
  Tensor sum = conv_forward(b.conv2, hidden);
  if (b.shortcut) {
    sum += conv_forward(*b.shortcut, in);
  } else {
    sum += in;
  }
  Tensor out = kernels::relu_forward(sum);
  if (tape) {
    tape->inner.resize(2);
    tape->inner[0].input = std::move(mid);
    tape->inner[1].input = std::move(sum);
  }
  return out;
}

Tensor block_backward(const layers::BasicBlock& b, const Tensor& grad, const LayerTape& tape) {
  const Tensor& mid = tape.inner[0].input;
  const Tensor& sum = tape.inner[1].input;
  const Tensor g_sum = kernels::relu_backward(grad, sum);
  Tensor g_hidden = conv_backward(b.conv2, g_sum, mid.shape());
  Tensor g_mid = kernels::relu_backward(g_hidden, mid);
  Tensor g_in = conv_backward(b.conv1, g_mid, tape.shape);
  if (b.shortcut) {
    g_in += conv_backward(*b.shortcut, g_sum, tape.shape);
  } else {
    g_in += g_sum;
  }
  return g_in;
}

Interval window_footprint(Interval r, int length, Window w, int& out_length) {
  out_length = w.output_length(length);
  if (r.empty() || out_length < 1) return {};
  auto floor_div = [](int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
  const int lo = -floor_div(-(r.first + w.pad - w.kernel + 1), w.stride);
  const int hi = floor_div(r.last + w.pad, w.stride);
  return {std::max(lo, 0), std::min(hi, out_length - 1)};
}

void check_conv(const layers::Conv& c, int in_channels) {
  if (c.in_channels != in_channels)
    fail(ErrorKind::Configuration, "conv expects " + std::to_string(c.in_channels) +
                                       " input channels, got " + std::to_string(in_channels));
  const std::size_t expected = static_cast<std::size_t>(c.out_channels) * c.in_channels *
                               c.window.kernel * c.window.kernel;
  if (c.weight.size() != expected)
    fail(ErrorKind::Configuration, "conv weight has wrong size");
  if (!c.bias.empty() && c.bias.size() != static_cast<std::size_t>(c.out_channels))
    fail(ErrorKind::Configuration, "conv bias has wrong size");
}

void permute_rows(layers::Conv& c, const std::vector<int>& perm) {
  const std::size_t row = c.weight.size() / c.out_channels;
  std::vector<double> weight(c.weight.size());
  std::vector<double> bias(c.bias.size());
  for (int i = 0; i < c.out_channels; ++i) {
    std::copy_n(c.weight.begin() + perm[i] * row, row, weight.begin() + i * row);
    if (!bias.empty()) bias[i] = c.bias[perm[i]];
  }
  c.weight = std::move(weight);
  c.bias = std::move(bias);
}

}  // namespace

const char* family_code(BackendFamily f) {
  switch (f) {
    case BackendFamily::AlexNet: return "A";
    case BackendFamily::ResNet: return "R";
    case BackendFamily::VGG: return "V";
  }
  return "?";
}

BackendFamily parse_family(const std::string& code) {
  if (code == "A" || code == "alexnet") return BackendFamily::AlexNet;
  if (code == "R" || code == "resnet18") return BackendFamily::ResNet;
  if (code == "V" || code == "vgg16") return BackendFamily::VGG;
  fail(ErrorKind::Configuration, "unknown backend family '" + code + "'");
}

FeatureBackend::FeatureBackend(std::string name, BackendFamily family,
                               std::array<double, 3> mean, std::array<double, 3> stddev,
                               std::vector<Layer> layers)
    : name_(std::move(name)),
      family_(family),
      mean_(mean),
      stddev_(stddev),
      layers_(std::move(layers)) {
  for (double s : stddev_)
    if (!(s > 0.0)) fail(ErrorKind::Configuration, "input normalization stddev must be positive");
  int channels = 3;
  for (const Layer& layer : layers_) {
    std::visit(Overloaded{
                   [&](const layers::Conv& c) {
                     check_conv(c, channels);
                     channels = c.out_channels;
                   },
                   [&](const layers::Relu&) {},
                   [&](const layers::MaxPool& p) {
                     if (2 * p.window.pad > p.window.kernel)
                       fail(ErrorKind::Configuration, "pooling pad exceeds half window");
                   },
                   [&](const layers::BasicBlock& b) {
                     check_conv(b.conv1, channels);
                     check_conv(b.conv2, b.conv1.out_channels);
                     if (b.shortcut) {
                       check_conv(*b.shortcut, channels);
                       if (b.shortcut->out_channels != b.conv2.out_channels)
                         fail(ErrorKind::Configuration, "shortcut channel mismatch");
                     } else if (b.conv2.out_channels != channels || b.conv1.window.stride != 1) {
                       fail(ErrorKind::Configuration, "identity shortcut needs matching shape");
                     }
                     channels = b.conv2.out_channels;
                   },
               },
               layer);
  }
  output_channels_ = channels;
}

Shape FeatureBackend::output_shape(Shape input) const {
  Shape s = input;
  for (const Layer& layer : layers_) {
    s = layer_shape(layer, s);
    if (s.height < 1 || s.width < 1)
      fail(ErrorKind::InvalidInput, "image " + std::to_string(input.width) + "x" +
                                        std::to_string(input.height) +
                                        " is smaller than the receptive field of backend " +
                                        name_);
  }
  return s;
}

int FeatureBackend::min_input_size() const {
  for (int n = 1;; ++n) {
    try {
      output_shape(Shape{3, n, n});
      return n;
    } catch (const Error&) {
    }
  }
}

Tensor FeatureBackend::forward(const Tensor& pixels) const {
  ForwardTape unused;
  return forward(pixels, unused);
}

Tensor FeatureBackend::forward(const Tensor& pixels, ForwardTape& tape) const {
  if (pixels.channels() != 3) fail(ErrorKind::InvalidInput, "backend input must be RGB");
  output_shape(pixels.shape());
  tape.input_shape = pixels.shape();
  tape.layers.assign(layers_.size(), LayerTape{});

  Tensor x(pixels.shape());
  for (int c = 0; c < 3; ++c) {
    const auto src = pixels.channel(c);
    auto dst = x.channel(c);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - mean_[c]) / stddev_[c];
  }

  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerTape& lt = tape.layers[i];
    x = std::visit(Overloaded{
                       [&](const layers::Conv& c) {
                         lt.shape = x.shape();
                         return conv_forward(c, x);
                       },
                       [&](const layers::Relu&) {
                         lt.shape = x.shape();
                         lt.input = x;
                         return kernels::relu_forward(x);
                       },
                       [&](const layers::MaxPool& p) {
                         lt.shape = x.shape();
                         auto pooled = kernels::maxpool2d_forward(x, p.window);
                         lt.argmax = std::move(pooled.argmax);
                         return std::move(pooled.output);
                       },
                       [&](const layers::BasicBlock& b) {
                         lt.shape = x.shape();
                         return block_forward(b, x, &lt);
                       },
                   },
                   layers_[i]);
  }
  // Post-ReLU maps are nonnegative already; clamping removes -0.0 and
  // guarantees the invariant for layer stacks that end in a convolution.
  for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
  return x;
}

Tensor FeatureBackend::backward(const ForwardTape& tape, const Tensor& grad_output) const {
  if (tape.layers.size() != layers_.size())
    fail(ErrorKind::InvalidArgument, "tape does not belong to this backend");
  Tensor g = grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const LayerTape& lt = tape.layers[i];
    g = std::visit(Overloaded{
                       [&](const layers::Conv& c) { return conv_backward(c, g, lt.shape); },
                       [&](const layers::Relu&) { return kernels::relu_backward(g, lt.input); },
                       [&](const layers::MaxPool&) {
                         return kernels::maxpool2d_backward(g, lt.argmax, lt.shape);
                       },
                       [&](const layers::BasicBlock& b) { return block_backward(b, g, lt); },
                   },
                   layers_[i]);
  }
  for (int c = 0; c < 3; ++c)
    for (double& v : g.channel(c)) v /= stddev_[c];
  return g;
}

Interval FeatureBackend::footprint(Interval region, int length) const {
  int n = length;
  for (const Layer& layer : layers_) {
    int out = n;
    region = std::visit(
        Overloaded{
            [&](const layers::Conv& c) { return window_footprint(region, n, c.window, out); },
            [&](const layers::Relu&) { return region; },
            [&](const layers::MaxPool& p) { return window_footprint(region, n, p.window, out); },
            [&](const layers::BasicBlock& b) {
              int mid = 0;
              Interval branch = window_footprint(region, n, b.conv1.window, mid);
              branch = window_footprint(branch, mid, b.conv2.window, out);
              int skip_len = 0;
              const Interval skip = b.shortcut
                                        ? window_footprint(region, n, b.shortcut->window, skip_len)
                                        : region;
              if (branch.empty()) return skip;
              if (skip.empty()) return branch;
              return Interval{std::min(branch.first, skip.first),
                              std::max(branch.last, skip.last)};
            },
        },
        layer);
    n = out;
  }
  return region;
}

FeatureBackend FeatureBackend::with_permuted_output(const std::vector<int>& permutation) const {
  std::vector<int> check = permutation;
  std::sort(check.begin(), check.end());
  for (int i = 0; i < static_cast<int>(check.size()); ++i)
    if (check[i] != i || static_cast<int>(check.size()) != output_channels_)
      fail(ErrorKind::InvalidArgument, "not a permutation of the output channels");

  std::vector<Layer> copy = layers_;
  for (std::size_t i = copy.size(); i-- > 0;) {
    if (auto* conv = std::get_if<layers::Conv>(&copy[i])) {
      permute_rows(*conv, permutation);
      return FeatureBackend(name_, family_, mean_, stddev_, std::move(copy));
    }
    if (auto* block = std::get_if<layers::BasicBlock>(&copy[i])) {
      if (!block->shortcut)
        fail(ErrorKind::InvalidArgument, "cannot permute through an identity shortcut");
      permute_rows(block->conv2, permutation);
      permute_rows(*block->shortcut, permutation);
      return FeatureBackend(name_, family_, mean_, stddev_, std::move(copy));
    }
  }
  fail(ErrorKind::InvalidArgument, "backend has no parametric layer");
}

}  // namespace tma
