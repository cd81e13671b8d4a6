#include "tma/evaluation.hpp"

#include <algorithm>
#include <numeric>

#include "tma/error.hpp"

namespace tma {

const char* to_string(ApConvention c) {
  return c == ApConvention::Classic ? "classic" : "interpolated";
}

ApConvention parse_ap_convention(const std::string& text) {
  if (text == "classic") return ApConvention::Classic;
  if (text == "interpolated" || text == "revisited") return ApConvention::Interpolated;
  fail(ErrorKind::Configuration, "unknown AP convention '" + text + "'");
}

std::optional<double> average_precision(std::span<const std::string> ranking,
                                        const std::set<std::string>& relevant,
                                        const std::set<std::string>& junk,
                                        ApConvention convention) {
  if (relevant.empty()) return std::nullopt;
  // 0-based ranks of relevant items after junk removal.
  std::vector<int> positions;
  int rank = 0;
  for (const std::string& id : ranking) {
    if (junk.contains(id)) continue;
    if (relevant.contains(id)) positions.push_back(rank);
    ++rank;
  }
  const double n = static_cast<double>(relevant.size());
  double ap = 0.0;
  for (std::size_t j = 0; j < positions.size(); ++j) {
    const double r = positions[j];
    if (convention == ApConvention::Classic) {
      ap += static_cast<double>(j + 1) / (r + 1.0);
    } else {
      const double p0 = positions[j] == 0 ? 1.0 : static_cast<double>(j) / r;
      const double p1 = static_cast<double>(j + 1) / (r + 1.0);
      ap += (p0 + p1) / 2.0;
    }
  }
  return ap / n;
}

std::vector<std::string> rank_database(const Descriptor& query, std::span<const std::string> ids,
                                       std::span<const Descriptor> database) {
  if (ids.size() != database.size())
    fail(ErrorKind::InvalidArgument, "database ids and descriptors differ in count");
  std::vector<double> scores(database.size());
  for (std::size_t i = 0; i < database.size(); ++i) scores[i] = query.dot(database[i]);
  std::vector<std::size_t> order(database.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  std::vector<std::string> ranked;
  ranked.reserve(order.size());
  for (std::size_t i : order) ranked.push_back(ids[i]);
  return ranked;
}

}  // namespace tma
