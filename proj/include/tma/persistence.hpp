#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tma/attack.hpp"
#include "tma/whitening.hpp"

namespace tma {

// Writes to <path>.tmp and renames over path.
void atomic_write(const std::filesystem::path& path, std::string_view contents);
std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

// 16 hex digits of FNV-1a over the compact JSON dump.
std::string config_hash(const nlohmann::json& config);

struct DescriptorSet {
  std::vector<std::string> ids;
  std::vector<Descriptor> descriptors;
  nlohmann::json metadata;  // model, pooling, resolution, whitening, ...
};

// <path> holds count*dim little-endian float32; <path>.json the sidecar
// with ids, count, dim and the given metadata.
void save_descriptors(const std::filesystem::path& path, const DescriptorSet& set);
DescriptorSet load_descriptors(const std::filesystem::path& path);

nlohmann::json whitening_to_json(const WhiteningTransform& t);
WhiteningTransform whitening_from_json(const nlohmann::json& j);

// iteration,distortion,perf_loss,sim_target,sim_carrier,total_loss,restart,learning_rate
std::string trace_csv(const AttackTrace& trace);
std::vector<TraceRecord> parse_trace_csv(std::string_view text);

}  // namespace tma
