#include "tma/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <json.hpp>

#include "tma/error.hpp"
#include "tma/image_io.hpp"
#include "tma/persistence.hpp"

namespace tma {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Blob {
  double cx, cy, rx, ry, angle;
  double color[3];
};

struct Grating {
  double x0, y0, x1, y1, freq, angle;
  double color[3];
};

}  // namespace

Image procedural_scene(int width, int height, std::uint64_t seed, std::string id) {
  if (width < 1 || height < 1) fail(ErrorKind::InvalidArgument, "scene size must be positive");
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 17);
  double base[2][3];
  for (auto& corner : base)
    for (double& v : corner) v = uniform(rng, 0.1, 0.9);

  std::vector<Blob> blobs(6 + rng() % 5);
  for (Blob& b : blobs) {
    b = {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0.04, 0.25), uniform(rng, 0.04, 0.25),
         uniform(rng, 0, std::numbers::pi), {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}};
  }
  std::vector<Grating> gratings(2 + rng() % 3);
  for (Grating& g : gratings) {
    const double x0 = uniform(rng, 0, 0.7), y0 = uniform(rng, 0, 0.7);
    g = {x0, y0, x0 + uniform(rng, 0.15, 0.3), y0 + uniform(rng, 0.15, 0.3), uniform(rng, 20, 80),
         uniform(rng, 0, std::numbers::pi), {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}};
  }

  Tensor t(Shape{3, height, width});
  const double scale = std::max(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / scale, v = (y + 0.5) / scale;
      const double a = (x + 0.5) / width;
      double rgb[3];
      for (int c = 0; c < 3; ++c) rgb[c] = (1 - a) * base[0][c] + a * base[1][c];
      for (const Blob& b : blobs) {
        const double dx = u - b.cx, dy = v - b.cy;
        const double px = std::cos(b.angle) * dx + std::sin(b.angle) * dy;
        const double py = -std::sin(b.angle) * dx + std::cos(b.angle) * dy;
        const double r2 = (px * px) / (b.rx * b.rx) + (py * py) / (b.ry * b.ry);
        const double w = 1.0 / (1.0 + std::exp(12.0 * (r2 - 1.0)));
        for (int c = 0; c < 3; ++c) rgb[c] = (1 - w) * rgb[c] + w * b.color[c];
      }
      for (const Grating& g : gratings) {
        if (u < g.x0 || u > g.x1 || v < g.y0 || v > g.y1) continue;
        const double phase = g.freq * (std::cos(g.angle) * u + std::sin(g.angle) * v);
        const double w = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * phase);
        for (int c = 0; c < 3; ++c) rgb[c] = (1 - w) * rgb[c] + w * g.color[c];
      }
      for (int c = 0; c < 3; ++c) t(c, y, x) = rgb[c];
    }
  }
  return Image::clamped(std::move(t), std::move(id));
}

Image procedural_flower(int width, int height) {
  if (width < 1 || height < 1) fail(ErrorKind::InvalidArgument, "flower size must be positive");
  Tensor t(Shape{3, height, width});
  const double scale = std::min(width, height);
  const double cx = 0.5 * width, cy = 0.5 * height;
  constexpr int kPetals = 7;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = (x + 0.5 - cx) / scale, dy = (y + 0.5 - cy) / scale;
      const double r = std::hypot(dx, dy), theta = std::atan2(dy, dx);
      // foliage: green with leafy stripes
      const double leaf = 0.5 + 0.5 * std::sin(37.0 * dx + 11.0 * std::sin(23.0 * dy));
      double rgb[3] = {0.10 + 0.08 * leaf, 0.35 + 0.25 * leaf, 0.12 + 0.05 * leaf};
      const double petal_edge = 0.42 * (0.55 + 0.45 * std::pow(std::abs(std::cos(0.5 * kPetals * theta)), 0.6));
      if (r < petal_edge) {
        const double vein = 0.85 + 0.15 * std::cos(9.0 * kPetals * theta);
        const double shade = 1.0 - 0.5 * r / 0.42;
        rgb[0] = 0.95 * vein;
        rgb[1] = (0.35 + 0.4 * shade) * vein;
        rgb[2] = (0.55 + 0.35 * shade) * vein;
      }
      if (r < 0.09) {
        const double seedy = 0.5 + 0.5 * std::sin(160.0 * dx) * std::sin(160.0 * dy);
        rgb[0] = 0.85 + 0.1 * seedy;
        rgb[1] = 0.65 + 0.15 * seedy;
        rgb[2] = 0.05;
      }
      for (int c = 0; c < 3; ++c) t(c, y, x) = rgb[c];
    }
  }
  return Image::clamped(std::move(t), "flower");
}

Image perturbed_view(const Image& image, std::uint64_t seed, double strength) {
  Rng rng(seed * 0xD1B54A32D192ED03ULL + 5);
  const int w = image.width(), h = image.height();
  const int sx = static_cast<int>(std::lround(uniform(rng, -0.04, 0.04) * strength * w));
  const int sy = static_cast<int>(std::lround(uniform(rng, -0.04, 0.04) * strength * h));
  double gain[3], offset[3];
  for (int c = 0; c < 3; ++c) {
    gain[c] = 1.0 + uniform(rng, -0.1, 0.1) * strength;
    offset[c] = uniform(rng, -0.05, 0.05) * strength;
  }
  std::normal_distribution<double> noise(0.0, 0.01 * strength);
  Tensor t(image.pixels().shape());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int ys = std::clamp(y + sy, 0, h - 1), xs = std::clamp(x + sx, 0, w - 1);
        t(c, y, x) = gain[c] * image.pixels()(c, ys, xs) + offset[c] + noise(rng);
      }
  return Image::clamped(std::move(t), image.id(), image.frame_extent());
}

std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir,
                                              const SyntheticDatasetOptions& o) {
  if (o.groups < 1 || o.views_per_group < 1 || o.distractors < 0)
    fail(ErrorKind::InvalidArgument, "synthetic dataset needs at least one group and view");
  const auto images = dir / "images";
  std::filesystem::create_directories(images);
  nlohmann::json gt;
  gt["name"] = o.name;
  gt["protocol"] = o.crop_queries ? "crop" : "full";
  gt["ap"] = to_string(o.convention);
  gt["images_dir"] = "images";
  gt["original_size"] = o.original_size;
  gt["exclude_query"] = false;
  gt["database"] = nlohmann::json::array();
  gt["queries"] = nlohmann::json::array();

  char buf[64];
  for (int g = 0; g < o.groups; ++g) {
    const std::uint64_t scene_seed = o.seed * 1000 + g;
    std::snprintf(buf, sizeof buf, "q%03d", g);
    const std::string qid = buf;
    const Image scene = procedural_scene(o.width, o.height, scene_seed, qid);
    write_png16(scene, images / (qid + ".png"));
    nlohmann::json query{{"image", qid}, {"relevant", nlohmann::json::array()},
                         {"junk", nlohmann::json::array()}};
    if (o.crop_queries) {
      query["crop"] = {o.width / 5, o.height / 5, o.width - o.width / 5, o.height - o.height / 5};
    } else {
      query["crop"] = nullptr;
    }
    for (int v = 0; v < o.views_per_group; ++v) {
      std::snprintf(buf, sizeof buf, "g%03d_v%02d", g, v);
      const std::string vid = buf;
      write_png16(perturbed_view(scene, scene_seed * 31 + v), images / (vid + ".png"));
      gt["database"].push_back(vid);
      const bool is_junk = o.junk && o.views_per_group > 1 && v == o.views_per_group - 1;
      query[is_junk ? "junk" : "relevant"].push_back(vid);
    }
    gt["queries"].push_back(query);
  }
  for (int d = 0; d < o.distractors; ++d) {
    std::snprintf(buf, sizeof buf, "d%03d", d);
    const std::string did = buf;
    write_png16(procedural_scene(o.width, o.height, o.seed * 1000 + 500 + d, did),
                images / (did + ".png"));
    gt["database"].push_back(did);
  }
  const auto path = dir / "gt.json";
  atomic_write(path, gt.dump(2));
  return path;
}

}  // namespace tma
