#include "tma/dataset.hpp"

#include <algorithm>

#include <json.hpp>

#include "tma/error.hpp"
#include "tma/image_io.hpp"
#include "tma/imaging.hpp"
#include "tma/persistence.hpp"

namespace tma {

RetrievalDataset RetrievalDataset::load(const std::filesystem::path& ground_truth) {
  if (!std::filesystem::exists(ground_truth))
    fail(ErrorKind::Configuration, "dataset ground truth not found: " + ground_truth.string());
  const nlohmann::json j = read_json(ground_truth);
  RetrievalDataset d;
  try {
    d.name = j.value("name", ground_truth.parent_path().filename().string());
    d.protocol = j.value("protocol", std::string("classic"));
    d.root = ground_truth.parent_path();
    d.images_dir = d.root / j.value("images_dir", std::string("images"));
    d.convention = parse_ap_convention(j.value("ap", std::string("classic")));
    d.original_size = j.value("original_size", 1024);
    d.exclude_query = j.value("exclude_query", false);
    if (j.contains("query_limit")) d.query_limit = j.at("query_limit").get<int>();
    d.database = j.at("database").get<std::vector<std::string>>();
    for (const auto& q : j.at("queries")) {
      QueryRecord r;
      r.image = q.at("image");
      if (q.contains("crop") && !q.at("crop").is_null()) {
        const auto box = q.at("crop").get<std::vector<int>>();
        if (box.size() != 4) fail(ErrorKind::Configuration, "crop box needs 4 numbers");
        r.crop = CropBox{box[0], box[1], box[2], box[3]};
      }
      for (const auto& id : q.value("relevant", std::vector<std::string>{})) r.relevant.insert(id);
      for (const auto& id : q.value("junk", std::vector<std::string>{})) r.junk.insert(id);
      d.queries.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Configuration, ground_truth.string() + ": " + e.what());
  }
  return d;
}

void RetrievalDataset::validate() const {
  if (original_size < kMinResolution)
    fail(ErrorKind::Configuration, "dataset original_size below minimum resolution");
  const std::set<std::string> ids(database.begin(), database.end());
  if (ids.size() != database.size()) fail(ErrorKind::Configuration, name + ": duplicate database ids");
  for (const auto& id : database) image_path(id);
  for (const QueryRecord& q : queries) {
    image_path(q.image);
    for (const auto& r : q.relevant)
      if (!ids.contains(r))
        fail(ErrorKind::Configuration, name + ": relevant id '" + r + "' not in database");
    if (!q.crop) continue;
    if (q.crop->x0 < 0 || q.crop->y0 < 0 || q.crop->width() < 1 || q.crop->height() < 1)
      fail(ErrorKind::Configuration, name + ": bad crop box for query " + q.image);
    const Image stored = read_image(image_path(q.image));
    if (q.crop->x1 > stored.width() || q.crop->y1 > stored.height())
      fail(ErrorKind::Configuration, name + ": crop box outside query image " + q.image);
  }
}

std::filesystem::path RetrievalDataset::image_path(const std::string& id) const {
  for (const char* ext : {".png", ".jpg", ".jpeg", ".JPG"}) {
    auto p = images_dir / (id + ext);
    if (std::filesystem::exists(p)) return p;
  }
  fail(ErrorKind::Configuration, name + ": image '" + id + "' not found in " + images_dir.string());
}

std::vector<std::size_t> RetrievalDataset::query_subset() const {
  std::size_t limit = queries.size();
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
  if (lower == "holidays" || lower == "copydays") limit = std::min<std::size_t>(limit, 50);
  if (query_limit) limit = std::min<std::size_t>(queries.size(), std::max(*query_limit, 0));
  std::vector<std::size_t> subset(limit);
  for (std::size_t i = 0; i < limit; ++i) subset[i] = i;
  return subset;
}

Image load_original(const RetrievalDataset& dataset, const std::string& id) {
  return resample(read_image(dataset.image_path(id)), dataset.original_size);
}

Image prepare_query_image(const Image& stored, const std::optional<CropBox>& crop,
                          int original_size, std::optional<int> test_resolution) {
  Image original;
  if (!crop) {
    original = resample(stored, original_size);
  } else {
    const CropBox& b = *crop;
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > stored.width() || b.y1 > stored.height() ||
        b.width() < 1 || b.height() < 1)
      fail(ErrorKind::InvalidInput, "crop box outside image " + stored.id());
    Tensor t(Shape{3, b.height(), b.width()});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < b.height(); ++y)
        for (int x = 0; x < b.width(); ++x) t(c, y, x) = stored.pixels()(c, b.y0 + y, b.x0 + x);
    const double factor = static_cast<double>(original_size) / stored.max_dim();
    Image region(std::move(t), stored.id(), stored.max_dim());
    original = resample_to(region, scaled_length(b.width(), factor), scaled_length(b.height(), factor));
    original.set_frame_extent(original_size);
  }
  return test_resolution ? resample(original, *test_resolution) : original;
}

Image prepare_query(const RetrievalDataset& dataset, const QueryRecord& query,
                    std::optional<int> test_resolution) {
  return prepare_query_image(read_image(dataset.image_path(query.image)), query.crop,
                             dataset.original_size, test_resolution);
}

}  // namespace tma
