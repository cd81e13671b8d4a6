#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tma/evaluation.hpp"
#include "tma/tensor.hpp"

namespace tma {

// Half-open pixel box [x0, x1) x [y0, y1) in the stored image's coordinates.
struct CropBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

struct QueryRecord {
  std::string image;
  std::optional<CropBox> crop;
  std::set<std::string> relevant;
  std::set<std::string> junk;
};

// Ground-truth file layout (JSON):
//   {"name": "...", "protocol": "medium", "ap": "classic" | "interpolated",
//    "images_dir": "images", "original_size": 1024, "exclude_query": true,
//    "query_limit": 50, "database": ["id", ...],
//    "queries": [{"image": "id", "crop": [x0, y0, x1, y1], "relevant": [...],
//                 "junk": [...]}]}
// Images are <images_dir>/<id>.png, .jpg or .jpeg.
struct RetrievalDataset {
  std::string name;
  std::string protocol;
  std::filesystem::path root;
  std::filesystem::path images_dir;
  ApConvention convention = ApConvention::Classic;
  int original_size = 1024;
  bool exclude_query = false;
  std::optional<int> query_limit;
  std::vector<std::string> database;
  std::vector<QueryRecord> queries;

  static RetrievalDataset load(const std::filesystem::path& ground_truth);

  // Throws Configuration on inconsistent ground truth or missing images.
  void validate() const;
  std::filesystem::path image_path(const std::string& id) const;
  // Indices of the attacked queries: the first 50 for Holidays and
  // Copydays, all of them otherwise, unless query_limit overrides.
  std::vector<std::size_t> query_subset() const;
};

// Stored image scaled to largest side original_size.
Image load_original(const RetrievalDataset& dataset, const std::string& id);

// Query at original scale (crop taken with the factor of its full frame),
// then optionally at a test resolution relative to that frame.
Image prepare_query(const RetrievalDataset& dataset, const QueryRecord& query,
                    std::optional<int> test_resolution = std::nullopt);
// Same scaling rule for an arbitrary stored image (the crop is optional).
Image prepare_query_image(const Image& stored, const std::optional<CropBox>& crop,
                          int original_size, std::optional<int> test_resolution);

}  // namespace tma
