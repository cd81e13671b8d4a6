#include "tma/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "tma/error.hpp"
#include "tma/image_io.hpp"
#include "tma/imaging.hpp"
#include "tma/synthetic.hpp"
#include "tma/weights.hpp"

namespace tma {

const char* to_string(AttackMode mode) {
  switch (mode) {
    case AttackMode::Optimize: return "optimize";
    case AttackMode::Null: return "null";
    case AttackMode::Random: return "random";
  }
  return "?";
}

AttackMode parse_attack_mode(const std::string& text) {
  if (text == "optimize" || text == "attack") return AttackMode::Optimize;
  if (text == "null" || text == "identity") return AttackMode::Null;
  if (text == "random") return AttackMode::Random;
  fail(ErrorKind::Configuration, "unknown attack mode '" + text + "'");
}

nlohmann::json ExperimentSpec::to_json() const {
  nlohmann::json j{{"name", name},
                   {"dataset", dataset.string()},
                   {"carrier", carrier.string()},
                   {"weights_dir", weights_dir.string()},
                   {"output_dir", output_dir.string()},
                   {"cache_dir", cache_dir.string()},
                   {"mode", tma::to_string(mode)},
                   {"attack", attack},
                   {"learning_rate", learning_rate},
                   {"iterations", iterations},
                   {"max_restarts", max_restarts},
                   {"seed", seed},
                   {"noise", noise},
                   {"test_backend", test_backend},
                   {"test_pooling", test_pooling},
                   {"test_resolution", nullptr},
                   {"whitening", whitening.string()},
                   {"query_limit", nullptr},
                   {"reuse_adversarials", reuse_adversarials},
                   {"save_adversarials", save_adversarials}};
  if (test_resolution) j["test_resolution"] = *test_resolution;
  if (query_limit) j["query_limit"] = *query_limit;
  return j;
}

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  try {
    s.name = j.value("name", s.name);
    s.dataset = j.value("dataset", std::string());
    s.carrier = j.value("carrier", std::string());
    s.weights_dir = j.value("weights_dir", std::string());
    s.output_dir = j.value("output_dir", s.output_dir.string());
    s.cache_dir = j.value("cache_dir", std::string());
    s.mode = parse_attack_mode(j.value("mode", std::string("optimize")));
    if (j.contains("attack")) s.attack = j.at("attack").get<LossSpecDocument>();
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.iterations = j.value("iterations", s.iterations);
    s.max_restarts = j.value("max_restarts", s.max_restarts);
    s.seed = j.value("seed", s.seed);
    s.noise = j.value("noise", s.noise);
    s.test_backend = j.value("test_backend", s.test_backend);
    s.test_pooling = j.value("test_pooling", s.test_pooling);
    if (j.contains("test_resolution") && !j.at("test_resolution").is_null())
      s.test_resolution = j.at("test_resolution").get<int>();
    s.whitening = j.value("whitening", std::string());
    if (j.contains("query_limit") && !j.at("query_limit").is_null())
      s.query_limit = j.at("query_limit").get<int>();
    s.reuse_adversarials = j.value("reuse_adversarials", s.reuse_adversarials);
    s.save_adversarials = j.value("save_adversarials", s.save_adversarials);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Configuration, std::string("experiment spec: ") + e.what());
  }
  return s;
}

std::string ExperimentSpec::hash() const { return config_hash(to_json()); }

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

double mean_of(const std::vector<QueryRow>& rows, double QueryRow::*field) {
  if (rows.empty()) return 0.0;
  double sum = 0.0;
  for (const QueryRow& r : rows) sum += r.*field;
  return sum / static_cast<double>(rows.size());
}

std::string query_key(std::size_t index, const std::string& id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu_", index);
  return buf + id;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"experiment", experiment},
                   {"config_hash", config_hash},
                   {"attack", attack_label},
                   {"test", test_label},
                   {"original_map", original_map},
                   {"attacked_map", attacked_map},
                   {"delta_map", delta_map},
                   {"mean_sim_target", mean_sim_target},
                   {"mean_sim_carrier", mean_sim_carrier},
                   {"mean_distortion", mean_distortion},
                   {"queries", rows.size()}};
  return j;
}

std::string EvalReport::rows_csv() const {
  std::ostringstream out;
  out << "query,original_ap,attacked_ap,sim_target,sim_carrier,distortion,converged,restarts,seconds\n";
  for (const QueryRow& r : rows) {
    out << r.query << ',' << format_optional(r.original_ap) << ',' << format_optional(r.attacked_ap)
        << ',' << format_number(r.sim_target) << ',' << format_number(r.sim_carrier) << ','
        << format_number(r.distortion) << ',' << (r.converged ? 1 : 0) << ',' << r.restarts << ','
        << format_number(r.seconds) << '\n';
  }
  return out.str();
}

ExperimentContext::ExperimentContext(ExperimentSpec spec) : spec_(std::move(spec)) {
  if (spec_.dataset.empty()) fail(ErrorKind::Configuration, "experiment has no dataset");
  dataset_ = RetrievalDataset::load(spec_.dataset);
  if (spec_.query_limit) dataset_.query_limit = spec_.query_limit;
  dataset_.validate();

  weights_dir_ = spec_.weights_dir.empty() ? default_weights_directory() : spec_.weights_dir;
  if (!std::filesystem::is_directory(weights_dir_))
    fail(ErrorKind::Configuration, "weights directory not found: " + weights_dir_.string());
  backend(spec_.test_backend);
  if (spec_.mode == AttackMode::Optimize) attack_config().validate();

  PoolingKind::parse(spec_.test_pooling);
  if (spec_.test_resolution && *spec_.test_resolution < kMinResolution)
    fail(ErrorKind::Configuration, "test resolution below " + std::to_string(kMinResolution));

  if (spec_.carrier.empty()) {
    carrier_ = procedural_flower(dataset_.original_size, dataset_.original_size);
  } else {
    if (!std::filesystem::exists(spec_.carrier))
      fail(ErrorKind::Configuration, "carrier image not found: " + spec_.carrier.string());
    carrier_ = read_image(spec_.carrier);
  }
  if (!spec_.whitening.empty()) {
    if (!std::filesystem::exists(spec_.whitening))
      fail(ErrorKind::Configuration, "whitening file not found: " + spec_.whitening.string());
    whitening_ = whitening_from_json(read_json(spec_.whitening));
  }
  if (spec_.reuse_adversarials && !std::filesystem::is_directory(spec_.output_dir / "adversarial"))
    fail(ErrorKind::Configuration,
         "no persisted adversarials under " + (spec_.output_dir / "adversarial").string());
}

BackendPtr ExperimentContext::backend(const std::string& name) const {
  auto it = backends_.find(name);
  if (it != backends_.end()) return it->second;
  BackendPtr b = load_backend_by_name(name, weights_dir_);
  backends_.emplace(name, b);
  return b;
}

RetrievalModel ExperimentContext::test_model(std::optional<int> resolution) const {
  RetrievalModel m{backend(spec_.test_backend), resolution, PoolingKind::parse(spec_.test_pooling),
                   whitening_};
  m.validate();
  return m;
}

AttackConfig ExperimentContext::attack_config() const {
  AttackConfig c;
  c.loss = resolve(spec_.attack, [this](const std::string& n) { return backend(n); });
  c.lambda = spec_.attack.lambda;
  c.learning_rate = spec_.learning_rate;
  c.iterations = spec_.iterations;
  c.max_restarts = spec_.max_restarts;
  c.seed = spec_.seed;
  return c;
}

std::vector<std::size_t> ExperimentContext::queries() const { return dataset_.query_subset(); }

std::vector<AttackedQuery> ExperimentContext::attack_queries() const {
  const auto adv_dir = spec_.output_dir / "adversarial";
  const auto trace_dir = spec_.output_dir / "traces";
  std::optional<AttackConfig> config;
  if (spec_.mode == AttackMode::Optimize) config = attack_config();
  const RetrievalModel monitor = test_model(spec_.test_resolution);

  std::vector<AttackedQuery> out;
  for (std::size_t index : queries()) {
    const QueryRecord& q = dataset_.queries[index];
    AttackedQuery a;
    a.index = index;
    a.target = prepare_query(dataset_, q);
    a.carrier = crop_to_aspect(carrier_, a.target);
    const std::string key = query_key(index, q.image);
    const auto png = adv_dir / (key + ".png");

    if (spec_.reuse_adversarials && std::filesystem::exists(png)) {
      Image adv = read_image(png);
      if (adv.width() != a.target.width() || adv.height() != a.target.height())
        fail(ErrorKind::Configuration, "persisted adversarial has wrong size: " + png.string());
      adv.set_frame_extent(a.target.frame_extent());
      a.adversarial = std::move(adv);
    } else {
      switch (spec_.mode) {
        case AttackMode::Null:
          a.adversarial = a.target;
          break;
        case AttackMode::Random: {
          std::mt19937_64 rng(spec_.seed * 0x9E3779B97F4A7C15ULL + index);
          std::normal_distribution<double> noise(0.0, spec_.noise);
          Tensor t = a.target.pixels();
          for (double& v : t.values()) v += noise(rng);
          a.adversarial = Image::clamped(std::move(t), q.image, a.target.frame_extent());
          break;
        }
        case AttackMode::Optimize: {
          AttackResult r = run_attack(a.target, a.carrier, *config, monitor);
          a.adversarial = std::move(r.adversarial);
          a.converged = r.converged;
          a.restarts = r.restarts_used;
          a.seconds = r.seconds;
          if (spec_.save_adversarials) {
            std::filesystem::create_directories(trace_dir);
            atomic_write(trace_dir / (key + ".csv"), trace_csv(r.trace));
          }
          break;
        }
      }
      // The canonical artifact is 16-bit; evaluate exactly what is persisted.
      // The null attack stays the target itself.
      if (spec_.mode != AttackMode::Null) a.adversarial = quantize(a.adversarial, 16);
      a.adversarial.set_frame_extent(a.target.frame_extent());
      if (spec_.save_adversarials) {
        std::filesystem::create_directories(adv_dir);
        write_png16(a.adversarial, png);
      }
    }
    a.adversarial.set_id(q.image);
    out.push_back(std::move(a));
  }
  return out;
}

DescriptorSet ExperimentContext::database_descriptors(const RetrievalModel& model) const {
  const nlohmann::json key{
      {"dataset", std::filesystem::weakly_canonical(spec_.dataset).string()},
      {"dataset_name", dataset_.name},
      {"original_size", dataset_.original_size},
      {"backend", model.backend->name()},
      {"pooling", model.pooling.name()},
      {"resolution", model.resolution ? *model.resolution : 0},
      {"whitening", model.whitening ? model.whitening->id : std::string()}};
  const auto cache = spec_.cache_dir.empty() ? spec_.output_dir / "cache" : spec_.cache_dir;
  const auto path = cache / ("db_" + config_hash(key) + ".f32");
  if (std::filesystem::exists(path)) {
    DescriptorSet cached = load_descriptors(path);
    if (cached.ids == dataset_.database) return cached;
  }
  DescriptorSet set;
  set.ids = dataset_.database;
  set.metadata = key;
  set.descriptors.reserve(set.ids.size());
  for (const auto& id : set.ids) set.descriptors.push_back(describe(model, load_original(dataset_, id)));
  std::filesystem::create_directories(cache);
  save_descriptors(path, set);
  // Rank with the stored precision so cached reruns score identically.
  return load_descriptors(path);
}

EvalReport ExperimentContext::evaluate(const std::vector<AttackedQuery>& attacked,
                                       const RetrievalModel& model, bool with_map) const {
  EvalReport report;
  report.experiment = spec_.name;
  report.config_hash = spec_.hash();
  report.test_label = model.label();
  switch (spec_.mode) {
    case AttackMode::Optimize:
      report.attack_label = "(" + [&] {
        std::string names;
        for (const auto& b : spec_.attack.backends) names += (names.empty() ? "" : "+") + b;
        return names;
      }() + ", " + attack_config().loss.label() + ", " + format_number(spec_.attack.lambda) + ")";
      break;
    case AttackMode::Null: report.attack_label = "null"; break;
    case AttackMode::Random: report.attack_label = "random(" + format_number(spec_.noise) + ")"; break;
  }

  std::optional<DescriptorSet> db;
  if (with_map) db = database_descriptors(model);

  double original_sum = 0.0, attacked_sum = 0.0;
  int scored = 0;
  for (const AttackedQuery& a : attacked) {
    const QueryRecord& q = dataset_.queries[a.index];
    QueryRow row;
    row.query = q.image;
    row.converged = a.converged;
    row.restarts = a.restarts;
    row.seconds = a.seconds;
    const Descriptor dt = describe(model, a.target);
    const Descriptor da = describe(model, a.adversarial);
    const Descriptor dc = describe(model, a.carrier);
    row.sim_target = da.dot(dt);
    row.sim_carrier = da.dot(dc);
    row.distortion = distortion(a.adversarial, a.carrier);
    if (db) {
      std::set<std::string> junk = q.junk;
      if (dataset_.exclude_query) junk.insert(q.image);
      const auto original = rank_database(dt, db->ids, db->descriptors);
      const auto adversarial = rank_database(da, db->ids, db->descriptors);
      row.original_ap = average_precision(original, q.relevant, junk, dataset_.convention);
      row.attacked_ap = average_precision(adversarial, q.relevant, junk, dataset_.convention);
      if (row.original_ap) {
        original_sum += *row.original_ap;
        attacked_sum += *row.attacked_ap;
        ++scored;
      }
    }
    report.rows.push_back(std::move(row));
  }
  if (scored > 0) {
    report.original_map = 100.0 * original_sum / scored;
    report.attacked_map = 100.0 * attacked_sum / scored;
  }
  report.delta_map = report.attacked_map - report.original_map;
  report.mean_sim_target = mean_of(report.rows, &QueryRow::sim_target);
  report.mean_sim_carrier = mean_of(report.rows, &QueryRow::sim_carrier);
  report.mean_distortion = mean_of(report.rows, &QueryRow::distortion);
  return report;
}

EvalReport run_experiment(const ExperimentSpec& spec) {
  ExperimentContext ctx(spec);
  return ctx.evaluate(ctx.attack_queries(), ctx.test_model(spec.test_resolution), true);
}

EvalReport similarity_report(const ExperimentSpec& spec) {
  ExperimentContext ctx(spec);
  return ctx.evaluate(ctx.attack_queries(), ctx.test_model(spec.test_resolution), false);
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream out;
  out << "series,x,sim_target,sim_carrier,distortion,map\n";
  for (const SweepPoint& p : points)
    out << p.series << ',' << format_number(p.x) << ',' << format_number(p.mean_sim_target) << ','
        << format_number(p.mean_sim_carrier) << ',' << format_number(p.mean_distortion) << ','
        << format_optional(p.map) << '\n';
  return out.str();
}

std::vector<SweepPoint> parse_sweep_csv(std::string_view text) {
  std::vector<SweepPoint> points;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line) && line.starts_with('#')) {
  }
  if (!in || line.rfind("series,x,", 0) != 0)
    fail(ErrorKind::InvalidInput, "not a sweep report");
  auto number = [](const std::string& field) {
    try {
      return std::stod(field);
    } catch (const std::exception&) {
      fail(ErrorKind::InvalidInput, "bad number '" + field + "' in sweep report");
    }
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() == 5) f.emplace_back();
    if (f.size() != 6) fail(ErrorKind::InvalidInput, "malformed sweep row: " + line);
    SweepPoint p{f[0], number(f[1]), number(f[2]), number(f[3]), number(f[4]), std::nullopt};
    if (!f[5].empty()) p.map = number(f[5]);
    points.push_back(p);
  }
  return points;
}

std::vector<SweepPoint> sweep_lambda(const ExperimentSpec& spec, const std::vector<double>& lambdas,
                                     bool with_map) {
  std::vector<SweepPoint> points;
  for (double lambda : lambdas) {
    ExperimentSpec s = spec;
    s.attack.lambda = lambda;
    s.output_dir = spec.output_dir / ("lambda_" + sanitize(format_number(lambda)));
    if (s.cache_dir.empty()) s.cache_dir = spec.output_dir / "cache";
    ExperimentContext ctx(s);
    const EvalReport r = ctx.evaluate(ctx.attack_queries(), ctx.test_model(s.test_resolution), with_map);
    SweepPoint p{"lambda", lambda, r.mean_sim_target, r.mean_sim_carrier, r.mean_distortion, std::nullopt};
    if (with_map) p.map = r.attacked_map;
    points.push_back(p);
  }
  return points;
}

std::vector<SweepPoint> sweep_resolution(const ExperimentSpec& spec,
                                         const std::vector<SweepVariant>& variants,
                                         const std::vector<int>& test_resolutions, bool with_map) {
  std::vector<SweepPoint> points;
  for (const SweepVariant& v : variants) {
    ExperimentSpec s = spec;
    s.attack = v.attack;
    s.output_dir = spec.output_dir / ("variant_" + sanitize(v.label));
    if (s.cache_dir.empty()) s.cache_dir = spec.output_dir / "cache";
    ExperimentContext ctx(s);
    const auto attacked = ctx.attack_queries();
    for (int res : test_resolutions) {
      const EvalReport r = ctx.evaluate(attacked, ctx.test_model(res), with_map);
      SweepPoint p{v.label, static_cast<double>(res), r.mean_sim_target, r.mean_sim_carrier,
                   r.mean_distortion, std::nullopt};
      if (with_map) p.map = r.attacked_map;
      points.push_back(p);
    }
  }
  return points;
}

}  // namespace tma
