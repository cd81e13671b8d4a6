#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "tma/backend.hpp"

namespace tma {

// Environment variable naming the directory that holds backend weight files.
inline constexpr const char* kWeightsDirEnv = "TMA_WEIGHTS_DIR";
inline constexpr const char* kWeightsExtension = ".tmaw";

// Deterministically initialized backend with the layer topology of the
// family (AlexNet / ResNet18 / VGG16 feature extractor, final pooling
// removed). Channel counts are the standard ones times width_multiplier.
FeatureBackend make_synthetic_backend(BackendFamily family, double width_multiplier,
                                      std::uint64_t seed, std::string name = {});

// Weight file: 8-byte magic "TMAWGT01", uint64 LE header length, JSON
// header describing the layers, then float32 LE parameters.
void save_backend(const FeatureBackend& backend, const std::filesystem::path& path);
FeatureBackend load_backend(const std::filesystem::path& path);

// $TMA_WEIGHTS_DIR if set, otherwise ./weights.
std::filesystem::path default_weights_directory();

// Loads <dir>/<name>.tmaw; a missing file is a Configuration error.
BackendPtr load_backend_by_name(const std::string& name, const std::filesystem::path& dir);

}  // namespace tma
