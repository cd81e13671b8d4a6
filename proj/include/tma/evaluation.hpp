#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tma/tensor.hpp"

namespace tma {

enum class ApConvention {
  // Mean of precision at the rank of each relevant item.
  Classic,
  // Trapezoidal precision/recall interpolation of the revisited
  // Oxford/Paris evaluation kit.
  Interpolated,
};

const char* to_string(ApConvention c);
ApConvention parse_ap_convention(const std::string& text);

// Junk ids are dropped from the ranking before scoring. Returns nullopt for
// an empty relevant set (the query is skipped, not scored as zero).
std::optional<double> average_precision(std::span<const std::string> ranking,
                                        const std::set<std::string>& relevant,
                                        const std::set<std::string>& junk,
                                        ApConvention convention = ApConvention::Classic);

// Database ids by descending inner product; ties by ascending id.
std::vector<std::string> rank_database(const Descriptor& query, std::span<const std::string> ids,
                                       std::span<const Descriptor> database);

}  // namespace tma
