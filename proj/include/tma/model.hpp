#pragma once

#include <optional>
#include <string>

#include "tma/backend.hpp"
#include "tma/pooling.hpp"
#include "tma/whitening.hpp"

namespace tma {

// The retrieval pipeline: resample -> network -> pooling -> (whitening).
// An empty resolution means the image is used at its original size.
struct RetrievalModel {
  BackendPtr backend;
  std::optional<int> resolution;
  PoolingKind pooling = PoolingKind::gem();
  std::optional<WhiteningTransform> whitening;

  // Throws InvalidResolution / Configuration for an unusable model.
  void validate() const;
  // e.g. "[A, GeM, 1024]" or "[A, GeM, orig, white]".
  std::string label() const;
};

Descriptor describe(const RetrievalModel& model, const Image& image);

}  // namespace tma
