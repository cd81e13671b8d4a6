#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "tma/evaluation.hpp"
#include "tma/tensor.hpp"

namespace tma {

// Procedural test imagery. Everything is a pure function of its arguments.

// Smooth color field with blobs, bars and a few textured patches; enough
// structure to give convolutional features something to respond to.
Image procedural_scene(int width, int height, std::uint64_t seed, std::string id = {});

// Procedural "flower" carrier: petals around a disc on a
// foliage background.
Image procedural_flower(int width, int height);

// A related view of a scene: small shift, global color change and noise.
Image perturbed_view(const Image& image, std::uint64_t seed, double strength = 1.0);

struct SyntheticDatasetOptions {
  std::string name = "synthetic";
  int groups = 5;           // one query per group
  int views_per_group = 2;  // relevant database images per query
  int distractors = 0;      // unrelated database images
  int width = 256;
  int height = 192;
  int original_size = 256;
  bool crop_queries = false;  // crop-protocol queries (central 60%)
  bool junk = false;          // mark each group's last view as junk
  ApConvention convention = ApConvention::Classic;
  std::uint64_t seed = 1;
};

// Writes <dir>/images/*.png (16 bit) and <dir>/gt.json; returns the gt path.
std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir,
                                              const SyntheticDatasetOptions& options);

}  // namespace tma
