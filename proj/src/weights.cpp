#include "tma/weights.hpp"

#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "tma/error.hpp"

namespace tma {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'T', 'M', 'A', 'W', 'G', 'T', '0', '1'};
constexpr std::array<double, 3> kImagenetMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImagenetStd{0.229, 0.224, 0.225};

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian; add byte swapping for this platform");

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  layers::Conv conv(int in, int out, int kernel, int stride, int pad, double gain = 1.0) {
    layers::Conv c{in, out, Window{kernel, stride, pad}, {}, {}};
    const double fan_in = static_cast<double>(in) * kernel * kernel;
    std::normal_distribution<double> normal(0.0, gain * std::sqrt(2.0 / fan_in));
    c.weight.resize(static_cast<std::size_t>(out) * in * kernel * kernel);
    // Rounded to float so that a saved and reloaded backend is identical.
    // Zero-mean filters respond to structure rather than to mean brightness,
    // which keeps random-feature descriptors from collapsing onto one direction.
    const std::size_t taps = static_cast<std::size_t>(in) * kernel * kernel;
    for (int o = 0; o < out; ++o) {
      double* f = c.weight.data() + o * taps;
      double mean = 0.0;
      for (std::size_t i = 0; i < taps; ++i) mean += (f[i] = normal(rng_));
      mean /= static_cast<double>(taps);
      for (std::size_t i = 0; i < taps; ++i) f[i] = static_cast<float>(f[i] - mean);
    }
    std::uniform_real_distribution<double> uniform(0.0, 0.05);
    c.bias.resize(out);
    for (double& b : c.bias) b = static_cast<float>(uniform(rng_));
    return c;
  }

 private:
  std::mt19937_64 rng_;
};

int scaled(int channels, double multiplier) {
  return std::max(1, static_cast<int>(std::lround(channels * multiplier)));
}

std::vector<Layer> alexnet(Initializer& init, double m) {
  const int c1 = scaled(64, m), c2 = scaled(192, m), c3 = scaled(384, m), c4 = scaled(256, m),
            c5 = scaled(256, m);
  return {init.conv(3, c1, 11, 4, 2),  layers::Relu{}, layers::MaxPool{{3, 2, 0}},
          init.conv(c1, c2, 5, 1, 2),  layers::Relu{}, layers::MaxPool{{3, 2, 0}},
          init.conv(c2, c3, 3, 1, 1),  layers::Relu{}, init.conv(c3, c4, 3, 1, 1),
          layers::Relu{},              init.conv(c4, c5, 3, 1, 1), layers::Relu{}};
}

std::vector<Layer> vgg16(Initializer& init, double m) {
  // 0 marks a 2x2 max pooling; the final pooling is dropped.
  const int config[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512};
  std::vector<Layer> net;
  int channels = 3;
  for (int c : config) {
    if (c == 0) {
      net.emplace_back(layers::MaxPool{{2, 2, 0}});
    } else {
      const int out = scaled(c, m);
      net.emplace_back(init.conv(channels, out, 3, 1, 1));
      net.emplace_back(layers::Relu{});
      channels = out;
    }
  }
  return net;
}

std::vector<Layer> resnet18(Initializer& init, double m) {
  std::vector<Layer> net;
  const int stem = scaled(64, m);
  net.emplace_back(init.conv(3, stem, 7, 2, 3));
  net.emplace_back(layers::Relu{});
  net.emplace_back(layers::MaxPool{{3, 2, 1}});
  int channels = stem;
  const int widths[] = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage) {
    const int out = scaled(widths[stage], m);
    for (int b = 0; b < 2; ++b) {
      const int stride = (stage > 0 && b == 0) ? 2 : 1;
      layers::BasicBlock block{init.conv(channels, out, 3, stride, 1),
                               init.conv(out, out, 3, 1, 1, 0.5), std::nullopt};
      if (stride != 1 || channels != out) block.shortcut = init.conv(channels, out, 1, stride, 0);
      net.emplace_back(std::move(block));
      channels = out;
    }
  }
  return net;
}

json conv_json(const layers::Conv& c, std::vector<float>& blob) {
  json j{{"in", c.in_channels},        {"out", c.out_channels}, {"kernel", c.window.kernel},
         {"stride", c.window.stride}, {"pad", c.window.pad},   {"weight", blob.size()}};
  blob.insert(blob.end(), c.weight.begin(), c.weight.end());
  if (!c.bias.empty()) {
    j["bias"] = blob.size();
    blob.insert(blob.end(), c.bias.begin(), c.bias.end());
  }
  return j;
}

layers::Conv conv_from_json(const json& j, const std::vector<float>& blob) {
  layers::Conv c;
  c.in_channels = j.at("in");
  c.out_channels = j.at("out");
  c.window = Window{j.at("kernel"), j.at("stride"), j.at("pad")};
  const std::size_t n = static_cast<std::size_t>(c.out_channels) * c.in_channels *
                        c.window.kernel * c.window.kernel;
  auto take = [&](std::size_t offset, std::size_t count) {
    if (offset + count > blob.size())
      fail(ErrorKind::Configuration, "weight file parameter block out of range");
    return std::vector<double>(blob.begin() + offset, blob.begin() + offset + count);
  };
  c.weight = take(j.at("weight").get<std::size_t>(), n);
  if (j.contains("bias")) c.bias = take(j.at("bias").get<std::size_t>(), c.out_channels);
  return c;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

FeatureBackend make_synthetic_backend(BackendFamily family, double width_multiplier,
                                      std::uint64_t seed, std::string name) {
  if (!(width_multiplier > 0.0)) fail(ErrorKind::InvalidArgument, "width multiplier must be positive");
  Initializer init(seed);
  std::vector<Layer> net;
  switch (family) {
    case BackendFamily::AlexNet: net = alexnet(init, width_multiplier); break;
    case BackendFamily::ResNet: net = resnet18(init, width_multiplier); break;
    case BackendFamily::VGG: net = vgg16(init, width_multiplier); break;
  }
  if (name.empty()) name = family_code(family);
  return FeatureBackend(std::move(name), family, kImagenetMean, kImagenetStd, std::move(net));
}

void save_backend(const FeatureBackend& backend, const std::filesystem::path& path) {
  std::vector<float> blob;
  json layers = json::array();
  for (const Layer& layer : backend.layers()) {
    layers.push_back(std::visit(
        Overloaded{
            [&](const layers::Conv& c) {
              json j = conv_json(c, blob);
              j["type"] = "conv";
              return j;
            },
            [&](const layers::Relu&) { return json{{"type", "relu"}}; },
            [&](const layers::MaxPool& p) {
              return json{{"type", "maxpool"},
                          {"kernel", p.window.kernel},
                          {"stride", p.window.stride},
                          {"pad", p.window.pad}};
            },
            [&](const layers::BasicBlock& b) {
              json j{{"type", "basic_block"},
                     {"conv1", conv_json(b.conv1, blob)},
                     {"conv2", conv_json(b.conv2, blob)}};
              j["shortcut"] = b.shortcut ? conv_json(*b.shortcut, blob) : json(nullptr);
              return j;
            },
        },
        layer));
  }
  const json header{{"name", backend.name()},
                    {"family", family_code(backend.family())},
                    {"mean", backend.mean()},
                    {"std", backend.stddev()},
                    {"parameters", blob.size()},
                    {"layers", layers}};
  const std::string text = header.dump();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write weights to " + tmp.string());
    const std::uint64_t length = text.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!out) fail(ErrorKind::Io, "failed writing weights to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

FeatureBackend load_backend(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Configuration, "cannot open weights file " + path.string());
  char magic[8];
  std::uint64_t length = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0 || length > (1u << 28))
    fail(ErrorKind::Configuration, path.string() + " is not a weights file");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Configuration, path.string() + ": bad header: " + e.what());
  }
  std::vector<float> blob(header.at("parameters").get<std::size_t>());
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!in) fail(ErrorKind::Configuration, path.string() + ": truncated parameter block");

  std::vector<Layer> net;
  try {
    for (const json& j : header.at("layers")) {
      const std::string type = j.at("type");
      if (type == "conv") {
        net.emplace_back(conv_from_json(j, blob));
      } else if (type == "relu") {
        net.emplace_back(layers::Relu{});
      } else if (type == "maxpool") {
        net.emplace_back(layers::MaxPool{{j.at("kernel"), j.at("stride"), j.at("pad")}});
      } else if (type == "basic_block") {
        layers::BasicBlock b{conv_from_json(j.at("conv1"), blob),
                             conv_from_json(j.at("conv2"), blob), std::nullopt};
        if (!j.at("shortcut").is_null()) b.shortcut = conv_from_json(j.at("shortcut"), blob);
        net.emplace_back(std::move(b));
      } else {
        fail(ErrorKind::Configuration, "unknown layer type '" + type + "'");
      }
    }
    return FeatureBackend(header.at("name"), parse_family(header.at("family")),
                          header.at("mean").get<std::array<double, 3>>(),
                          header.at("std").get<std::array<double, 3>>(), std::move(net));
  } catch (const json::exception& e) {
    fail(ErrorKind::Configuration, path.string() + ": " + e.what());
  }
}

std::filesystem::path default_weights_directory() {
  if (const char* dir = std::getenv(kWeightsDirEnv); dir && *dir) return dir;
  return "weights";
}

BackendPtr load_backend_by_name(const std::string& name, const std::filesystem::path& dir) {
  const auto path = dir / (name + kWeightsExtension);
  if (!std::filesystem::exists(path))
    fail(ErrorKind::Configuration, "weights for backend '" + name + "' not found at " +
                                       path.string());
  return std::make_shared<const FeatureBackend>(load_backend(path));
}

}  // namespace tma
