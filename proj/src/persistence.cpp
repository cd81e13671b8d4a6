#include "tma/persistence.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tma/error.hpp"

namespace tma {

using nlohmann::json;

void atomic_write(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorKind::Io, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "cannot move " + tmp.string() + " to " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Configuration, path.string() + ": " + e.what());
  }
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

void save_descriptors(const std::filesystem::path& path, const DescriptorSet& set) {
  static_assert(std::endian::native == std::endian::little);
  if (set.ids.size() != set.descriptors.size())
    fail(ErrorKind::InvalidArgument, "descriptor ids and vectors differ in count");
  const std::size_t dim = set.descriptors.empty() ? 0 : set.descriptors.front().dim();
  std::string blob;
  blob.reserve(set.descriptors.size() * dim * sizeof(float));
  for (const Descriptor& d : set.descriptors) {
    if (d.dim() != dim) fail(ErrorKind::InvalidArgument, "mixed descriptor dimensions");
    for (double v : d.values()) {
      const float f = static_cast<float>(v);
      blob.append(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
  json sidecar = set.metadata.is_object() ? set.metadata : json::object();
  sidecar["count"] = set.descriptors.size();
  sidecar["dim"] = dim;
  sidecar["ids"] = set.ids;
  sidecar["format"] = "float32-le";
  atomic_write(path, blob);
  atomic_write(path.string() + ".json", sidecar.dump(2));
}

DescriptorSet load_descriptors(const std::filesystem::path& path) {
  DescriptorSet set;
  set.metadata = read_json(path.string() + ".json");
  const std::size_t count = set.metadata.at("count");
  const std::size_t dim = set.metadata.at("dim");
  set.ids = set.metadata.at("ids").get<std::vector<std::string>>();
  const std::string blob = read_text(path);
  if (blob.size() != count * dim * sizeof(float) || set.ids.size() != count)
    fail(ErrorKind::Io, path.string() + ": descriptor file does not match its sidecar");
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> v(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      float f;
      std::memcpy(&f, blob.data() + (i * dim + j) * sizeof f, sizeof f);
      v[j] = f;
    }
    set.descriptors.push_back(Descriptor::normalized(std::move(v)));
  }
  return set;
}

json whitening_to_json(const WhiteningTransform& t) {
  return json{{"id", t.id}, {"dim", t.dim()}, {"mean", t.mean}, {"projection", t.projection}};
}

WhiteningTransform whitening_from_json(const json& j) {
  WhiteningTransform t;
  try {
    t.id = j.value("id", std::string("whitening"));
    t.mean = j.at("mean").get<std::vector<double>>();
    t.projection = j.at("projection").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Configuration, std::string("bad whitening file: ") + e.what());
  }
  if (t.projection.size() != t.mean.size() * t.mean.size())
    fail(ErrorKind::Configuration, "whitening projection is not d x d");
  return t;
}

std::string trace_csv(const AttackTrace& trace) {
  std::string out = "iteration,distortion,perf_loss,sim_target,sim_carrier,total_loss,restart,learning_rate\n";
  char line[512];
  for (const TraceRecord& r : trace.records) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n", r.iteration,
                  r.distortion, r.perf_loss, r.sim_target, r.sim_carrier, r.total_loss, r.restart,
                  r.learning_rate);
    out += line;
  }
  return out;
}

std::vector<TraceRecord> parse_trace_csv(std::string_view text) {
  std::vector<TraceRecord> records;
  std::istringstream in{std::string(text)};
  std::string line;
  // Leading '#' lines carry metadata such as the config hash.
  while (std::getline(in, line) && line.starts_with('#')) {
  }
  if (!in || line.rfind("iteration,distortion,perf_loss,sim_target,sim_carrier", 0) != 0)
    fail(ErrorKind::InvalidInput, "not a trace CSV (missing header)");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TraceRecord r;
    const int n = std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%d,%lf", &r.iteration,
                              &r.distortion, &r.perf_loss, &r.sim_target, &r.sim_carrier,
                              &r.total_loss, &r.restart, &r.learning_rate);
    if (n < 5) fail(ErrorKind::InvalidInput, "malformed trace row: " + line);
    records.push_back(r);
  }
  return records;
}

}  // namespace tma
