// Command-line front end: attack, evaluate, extract, whiten, plot, sweeps.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tma/attack.hpp"
#include "tma/dataset.hpp"
#include "tma/error.hpp"
#include "tma/experiment.hpp"
#include "tma/image_io.hpp"
#include "tma/imaging.hpp"
#include "tma/loss_spec.hpp"
#include "tma/persistence.hpp"
#include "tma/plot.hpp"
#include "tma/synthetic.hpp"
#include "tma/weights.hpp"
#include "tma/whitening.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfiguration = 1;
constexpr int kExitRuntime = 2;

int exit_code(tma::ErrorKind kind) {
  switch (kind) {
    case tma::ErrorKind::Configuration:
    case tma::ErrorKind::InvalidArgument:
    case tma::ErrorKind::InvalidResolution:
      return kExitConfiguration;
    default:
      return kExitRuntime;
  }
}

std::vector<std::string> split(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

// "S2" stays a preset; "1024,512" becomes a list.
json resolutions_value(const std::string& text) {
  if (!text.empty() && (text[0] == 'S' || text[0] == 's')) {
    std::string preset = text;
    preset[0] = 'S';
    return preset;
  }
  std::vector<int> list;
  for (const auto& item : split(text)) {
    try {
      list.push_back(std::stoi(item));
    } catch (const std::exception&) {
      tma::fail(tma::ErrorKind::Configuration, "bad resolution '" + item + "'");
    }
  }
  return list;
}

fs::path relative_to(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

void write_json(const fs::path& path, const json& j) { tma::atomic_write(path, j.dump(2) + "\n"); }

std::string hash_line(const std::string& hash) { return "# config_hash: " + hash + "\n"; }

fs::path prepare_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) tma::fail(tma::ErrorKind::Io, "cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

tma::BackendResolver resolver_for(const fs::path& weights_dir) {
  return [weights_dir](const std::string& name) { return tma::load_backend_by_name(name, weights_dir); };
}

fs::path weights_dir_or_default(const std::optional<std::string>& flag, const json& cfg) {
  if (flag) return *flag;
  if (cfg.contains("weights_dir") && !cfg.at("weights_dir").get<std::string>().empty())
    return cfg.at("weights_dir").get<std::string>();
  return tma::default_weights_directory();
}

// ---------------------------------------------------------------- attack

struct AttackArgs {
  std::string target, carrier, output;
  std::optional<std::string> config, loss, resolutions, weights_dir, monitor_pooling;
  std::optional<std::vector<std::string>> poolings, backends;
  std::optional<bool> blur;
  std::optional<double> lambda, lr, preset_scale, sigma, bin_step;
  std::optional<int> iterations, restarts, original_size, monitor_resolution;
  std::optional<std::uint64_t> seed;
  bool export8 = false;
};

int cmd_attack(const AttackArgs& a) {
  json cfg = a.config ? tma::read_json(*a.config) : json::object();
  if (a.loss) cfg["kind"] = *a.loss;
  if (a.poolings) cfg["poolings"] = *a.poolings;
  if (a.resolutions) cfg["resolutions"] = resolutions_value(*a.resolutions);
  if (a.blur) cfg["blur"] = *a.blur;
  if (a.lambda) cfg["lambda"] = *a.lambda;
  if (a.backends) cfg["backends"] = *a.backends;
  if (a.preset_scale) cfg["preset_scale"] = *a.preset_scale;
  if (a.sigma) cfg["sigma"] = *a.sigma;
  if (a.bin_step) cfg["bin_step"] = *a.bin_step;
  if (a.lr) cfg["learning_rate"] = *a.lr;
  if (a.iterations) cfg["iterations"] = *a.iterations;
  if (a.restarts) cfg["max_restarts"] = *a.restarts;
  if (a.seed) cfg["seed"] = *a.seed;
  if (a.original_size) cfg["original_size"] = *a.original_size;
  if (a.monitor_pooling) cfg["monitor_pooling"] = *a.monitor_pooling;
  if (a.monitor_resolution) cfg["monitor_resolution"] = *a.monitor_resolution;

  const tma::LossSpecDocument doc = cfg.get<tma::LossSpecDocument>();
  const fs::path weights_dir = weights_dir_or_default(a.weights_dir, cfg);
  tma::AttackConfig config;
  config.loss = tma::resolve(doc, resolver_for(weights_dir));
  config.lambda = doc.lambda;
  config.learning_rate = cfg.value("learning_rate", config.learning_rate);
  config.iterations = cfg.value("iterations", config.iterations);
  config.max_restarts = cfg.value("max_restarts", config.max_restarts);
  config.seed = cfg.value("seed", config.seed);
  config.validate();
  const std::optional<int> original_size =
      cfg.contains("original_size") ? std::optional<int>(cfg.at("original_size").get<int>()) : std::nullopt;
  const std::optional<int> monitor_resolution =
      cfg.contains("monitor_resolution") ? std::optional<int>(cfg.at("monitor_resolution").get<int>())
                                         : std::nullopt;
  const tma::RetrievalModel monitor{config.loss.backends.front(), monitor_resolution,
                                    tma::PoolingKind::parse(cfg.value("monitor_pooling", std::string("GeM"))),
                                    std::nullopt};
  monitor.validate();

  const json resolved{{"command", "attack"},
                      {"target", a.target},
                      {"carrier", a.carrier},
                      {"loss", doc},
                      {"learning_rate", config.learning_rate},
                      {"iterations", config.base_iterations()},
                      {"max_restarts", config.max_restarts},
                      {"convergence_threshold", config.threshold()},
                      {"seed", config.seed},
                      {"original_size", original_size ? json(*original_size) : json(nullptr)},
                      {"monitor", monitor.label()},
                      {"weights_dir", weights_dir.string()}};
  const std::string hash = tma::config_hash(resolved);

  tma::Image target = tma::read_image(a.target);
  if (original_size) target = tma::resample(target, *original_size);
  const tma::Image carrier = tma::crop_to_aspect(tma::read_image(a.carrier), target);
  const fs::path out = prepare_output_dir(a.output);

  const tma::AttackResult r = tma::run_attack(target, carrier, config, monitor);

  const tma::PngText text{{"config_hash", hash}, {"Software", "tma"}};
  tma::write_png16(r.adversarial, out / "adversarial.png", text);
  const tma::Image q16 = tma::quantize(r.adversarial, 16);
  json quantization{{"sim_target_16bit", tma::trace_metrics(q16, target, carrier, monitor).sim_target}};
  if (a.export8) {
    tma::write_png8(r.adversarial, out / "adversarial_8bit.png", text);
    quantization["sim_target_8bit"] =
        tma::trace_metrics(tma::quantize(r.adversarial, 8), target, carrier, monitor).sim_target;
  }
  tma::atomic_write(out / "trace.csv", hash_line(hash) + tma::trace_csv(r.trace));
  const json meta{{"config", resolved},
                  {"config_hash", hash},
                  {"attack", config.loss.label()},
                  {"converged", r.converged},
                  {"restarts_used", r.restarts_used},
                  {"iterations_run", r.trace.records.size()},
                  {"perf_loss", r.perf_loss},
                  {"total_loss", r.total_loss},
                  {"distortion", r.metrics.distortion},
                  {"sim_target", r.metrics.sim_target},
                  {"sim_carrier", r.metrics.sim_carrier},
                  {"quantization", quantization},
                  {"adam", {{"beta1", r.trace.adam.beta1}, {"beta2", r.trace.adam.beta2},
                            {"epsilon", r.trace.adam.epsilon}}},
                  {"seconds", r.seconds}};
  write_json(out / "meta.json", meta);
  std::printf("%s: sim_target %.4f sim_carrier %.4f distortion %.6f converged %s (%d restarts, %.1f s)\n",
              config.loss.label().c_str(), r.metrics.sim_target, r.metrics.sim_carrier,
              r.metrics.distortion, r.converged ? "yes" : "no", r.restarts_used, r.seconds);
  return 0;
}

// ---------------------------------------------------------------- experiments

struct ExperimentArgs {
  std::string spec;
  std::optional<std::string> output, weights_dir, dataset, mode, carrier;
  std::optional<int> query_limit;
  bool reuse = false;
};

tma::ExperimentSpec load_experiment(const ExperimentArgs& a) {
  const fs::path spec_path = a.spec;
  if (!fs::exists(spec_path)) tma::fail(tma::ErrorKind::Configuration, "experiment spec not found: " + a.spec);
  json j = tma::read_json(spec_path);
  if (a.output) j["output_dir"] = fs::absolute(*a.output).string();
  if (a.weights_dir) j["weights_dir"] = fs::absolute(*a.weights_dir).string();
  if (a.dataset) j["dataset"] = fs::absolute(*a.dataset).string();
  if (a.carrier) j["carrier"] = fs::absolute(*a.carrier).string();
  if (a.mode) j["mode"] = *a.mode;
  if (a.query_limit) j["query_limit"] = *a.query_limit;
  if (a.reuse) j["reuse_adversarials"] = true;
  tma::ExperimentSpec s = tma::ExperimentSpec::from_json(j);
  const fs::path base = spec_path.parent_path();
  s.dataset = relative_to(base, s.dataset);
  s.carrier = relative_to(base, s.carrier);
  s.weights_dir = s.weights_dir.empty() ? tma::default_weights_directory() : relative_to(base, s.weights_dir);
  s.output_dir = relative_to(base, s.output_dir);
  s.cache_dir = relative_to(base, s.cache_dir);
  s.whitening = relative_to(base, s.whitening);
  return s;
}

int cmd_evaluate(const ExperimentArgs& a) {
  const tma::ExperimentSpec spec = load_experiment(a);
  const tma::EvalReport report = tma::run_experiment(spec);
  prepare_output_dir(spec.output_dir);
  json j = report.to_json();
  j["config"] = spec.to_json();
  write_json(spec.output_dir / "report.json", j);
  tma::atomic_write(spec.output_dir / "queries.csv", hash_line(report.config_hash) + report.rows_csv());
  std::printf("%s %s | original mAP %.2f attacked %.2f delta %+.2f | sim %.4f distortion %.6f (%zu queries)\n",
              report.attack_label.c_str(), report.test_label.c_str(), report.original_map,
              report.attacked_map, report.delta_map, report.mean_sim_target, report.mean_distortion,
              report.rows.size());
  return 0;
}

int cmd_sweep_lambda(const ExperimentArgs& a, const std::string& lambdas, bool with_map) {
  const tma::ExperimentSpec spec = load_experiment(a);
  std::vector<double> values;
  for (const auto& item : split(lambdas)) values.push_back(std::stod(item));
  if (values.empty()) tma::fail(tma::ErrorKind::Configuration, "no lambda values given");
  const auto points = tma::sweep_lambda(spec, values, with_map);
  prepare_output_dir(spec.output_dir);
  tma::atomic_write(spec.output_dir / "sweep_lambda.csv", hash_line(spec.hash()) + tma::sweep_csv(points));
  for (const auto& p : points)
    std::printf("lambda %-6g sim_target %.4f distortion %.6f\n", p.x, p.mean_sim_target, p.mean_distortion);
  return 0;
}

int cmd_sweep_resolution(const ExperimentArgs& a, const std::string& resolutions, const std::string& blur,
                         bool with_map) {
  const tma::ExperimentSpec spec = load_experiment(a);
  std::vector<int> test;
  for (const auto& item : split(resolutions)) test.push_back(std::stoi(item));
  if (test.empty()) tma::fail(tma::ErrorKind::Configuration, "no test resolutions given");
  std::vector<tma::SweepVariant> variants;
  for (const auto& mode : split(blur)) {
    tma::LossSpecDocument doc = spec.attack;
    if (mode != "on" && mode != "off")
      tma::fail(tma::ErrorKind::Configuration, "--blur takes on, off or on,off");
    doc.blur = mode == "on";
    const std::string set = doc.resolution_preset.empty() ? "custom" : doc.resolution_preset;
    variants.push_back({set + (doc.blur ? "^" : ""), doc});
  }
  const auto points = tma::sweep_resolution(spec, variants, test, with_map);
  prepare_output_dir(spec.output_dir);
  tma::atomic_write(spec.output_dir / "sweep_resolution.csv", hash_line(spec.hash()) + tma::sweep_csv(points));
  for (const auto& p : points)
    std::printf("%-8s s=%-5g sim_target %.4f\n", p.series.c_str(), p.x, p.mean_sim_target);
  return 0;
}

// ---------------------------------------------------------------- extract / whiten

struct ExtractArgs {
  std::string dataset, output, backend = "A", pooling = "GeM";
  std::optional<int> resolution;
  std::optional<std::string> whitening, weights_dir;
  bool queries = false;
};

int cmd_extract(const ExtractArgs& a) {
  tma::RetrievalDataset dataset = tma::RetrievalDataset::load(a.dataset);
  dataset.validate();
  const fs::path weights_dir = a.weights_dir ? fs::path(*a.weights_dir) : tma::default_weights_directory();
  tma::RetrievalModel model{tma::load_backend_by_name(a.backend, weights_dir), a.resolution,
                            tma::PoolingKind::parse(a.pooling), std::nullopt};
  if (a.whitening) model.whitening = tma::whitening_from_json(tma::read_json(*a.whitening));
  model.validate();
  const json config{{"command", "extract"},
                    {"dataset", fs::absolute(a.dataset).string()},
                    {"model", model.label()},
                    {"backend", a.backend},
                    {"pooling", model.pooling.name()},
                    {"resolution", a.resolution ? json(*a.resolution) : json(nullptr)},
                    {"whitening", a.whitening ? json(*a.whitening) : json(nullptr)},
                    {"queries", a.queries}};
  tma::DescriptorSet set;
  set.metadata = config;
  set.metadata["config_hash"] = tma::config_hash(config);
  if (a.queries) {
    for (std::size_t i : dataset.query_subset()) {
      const auto& q = dataset.queries[i];
      set.ids.push_back(q.image);
      set.descriptors.push_back(tma::describe(model, tma::prepare_query(dataset, q)));
    }
  } else {
    for (const auto& id : dataset.database) {
      set.ids.push_back(id);
      set.descriptors.push_back(tma::describe(model, tma::load_original(dataset, id)));
    }
  }
  const fs::path out = a.output;
  if (out.has_parent_path()) prepare_output_dir(out.parent_path());
  tma::save_descriptors(out, set);
  std::printf("%zu descriptors of dimension %zu -> %s\n", set.ids.size(),
              set.descriptors.empty() ? std::size_t{0} : set.descriptors.front().dim(), a.output.c_str());
  return 0;
}

int cmd_whiten(const std::string& descriptors, const std::string& output) {
  const tma::DescriptorSet set = tma::load_descriptors(descriptors);
  const tma::WhiteningTransform t = tma::learn_whitening(set.descriptors);
  const json config{{"command", "whiten"},
                    {"descriptors", fs::absolute(descriptors).string()},
                    {"source", set.metadata}};
  json j = tma::whitening_to_json(t);
  j["provenance"] = {{"config", config},
                     {"config_hash", tma::config_hash(config)},
                     {"count", set.ids.size()},
                     {"dim", t.mean.size()}};
  const fs::path out = output;
  if (out.has_parent_path()) prepare_output_dir(out.parent_path());
  write_json(out, j);
  std::printf("whitening (%zu-dim, %zu descriptors) -> %s\n", t.mean.size(), set.ids.size(), output.c_str());
  return 0;
}

// ---------------------------------------------------------------- plot

std::string first_comment(const std::string& text) {
  if (text.starts_with("# ")) return text.substr(2, text.find('\n') - 2);
  return {};
}

int cmd_plot(const std::optional<std::string>& trace, const std::optional<std::string>& sweep,
             const std::string& output) {
  if (trace.has_value() == sweep.has_value())
    tma::fail(tma::ErrorKind::Configuration, "plot needs exactly one of --trace or --sweep");
  const std::string text = tma::read_text(trace ? *trace : *sweep);
  const std::string comment = first_comment(text);
  std::vector<std::pair<std::string, tma::PlotSpec>> figures;

  if (trace) {
    const auto records = tma::parse_trace_csv(text);
    if (records.empty()) tma::fail(tma::ErrorKind::InvalidInput, "trace is empty: " + *trace);
    auto panel = [&](const char* file, const char* title, const char* ylabel, double tma::TraceRecord::*field) {
      tma::PlotSpec p{title, "Iteration", ylabel, {}, comment, false};
      // one curve per restart, as each restarts from the carrier
      for (const auto& r : records) {
        if (p.series.empty() || p.series.back().label != "restart " + std::to_string(r.restart))
          p.series.push_back({"restart " + std::to_string(r.restart), {}, {}});
        p.series.back().x.push_back(r.iteration);
        p.series.back().y.push_back(r.*field);
      }
      if (p.series.size() == 1) p.series.front().label.clear();
      figures.emplace_back(file, p);
    };
    panel("distortion.svg", "Distortion", "||x_a - x_c||^2", &tma::TraceRecord::distortion);
    panel("perf_loss.svg", "Performance loss", "loss(x_a, x_t)", &tma::TraceRecord::perf_loss);
    panel("sim_target.svg", "Similarity to target", "h(x_a) . h(x_t)", &tma::TraceRecord::sim_target);
    panel("sim_carrier.svg", "Similarity to carrier", "h(x_a) . h(x_c)", &tma::TraceRecord::sim_carrier);
  } else {
    const auto points = tma::parse_sweep_csv(text);
    if (points.empty()) tma::fail(tma::ErrorKind::InvalidInput, "sweep report is empty: " + *sweep);
    const bool lambda = points.front().series == "lambda";
    const char* xlabel = lambda ? "lambda" : "Test resolution";
    auto figure = [&](const char* file, const char* title, const char* ylabel, auto value) {
      tma::PlotSpec p{title, xlabel, ylabel, {}, comment, true};
      for (const auto& pt : points) {
        const auto y = value(pt);
        if (!y) continue;
        auto it = std::find_if(p.series.begin(), p.series.end(), [&](const auto& s) { return s.label == pt.series; });
        if (it == p.series.end()) it = p.series.insert(p.series.end(), tma::PlotSeries{pt.series, {}, {}});
        it->x.push_back(pt.x);
        it->y.push_back(*y);
      }
      if (!p.series.empty()) figures.emplace_back(file, p);
    };
    figure("similarity.svg", "Similarity to target", "mean h(x_a) . h(x_t)",
           [](const tma::SweepPoint& p) { return std::optional<double>(p.mean_sim_target); });
    figure("map.svg", "Retrieval with adversarial queries", "mAP", [](const tma::SweepPoint& p) { return p.map; });
    if (lambda)
      figure("distortion.svg", "Distortion", "mean distortion",
             [](const tma::SweepPoint& p) { return std::optional<double>(p.mean_distortion); });
  }

  const fs::path out = prepare_output_dir(output);
  for (const auto& [file, spec] : figures) {
    tma::atomic_write(out / file, tma::svg_line_plot(spec));
    std::printf("%s\n", (out / file).c_str());
  }
  return 0;
}

// ---------------------------------------------------------------- synthetic assets

int cmd_init_weights(const std::string& family, double width, std::uint64_t seed, const std::string& name,
                     const std::optional<std::string>& dir) {
  const fs::path out = prepare_output_dir(dir ? fs::path(*dir) : tma::default_weights_directory());
  const auto fam = tma::parse_family(family);
  const std::string label = name.empty() ? tma::family_code(fam) : name;
  const tma::FeatureBackend b = tma::make_synthetic_backend(fam, width, seed, label);
  const fs::path path = out / (label + tma::kWeightsExtension);
  tma::save_backend(b, path);
  std::printf("%s (%d output channels) -> %s\n", label.c_str(), b.output_channels(), path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted mismatch attacks on CNN image retrieval"};
  app.require_subcommand(1);

  AttackArgs attack;
  auto* c_attack = app.add_subcommand("attack", "Build a concealed query for a target image");
  c_attack->add_option("--target", attack.target, "Target image")->required();
  c_attack->add_option("--carrier", attack.carrier, "Carrier image")->required();
  c_attack->add_option("--output,-o", attack.output, "Output directory")->required();
  c_attack->add_option("--config", attack.config, "Flat JSON attack config; flags override it");
  c_attack->add_option("--loss", attack.loss, "desc | tensor | hist | pool_ensemble");
  c_attack->add_option("--pooling", attack.poolings, "Pooling(s) for desc / pool_ensemble, or 'all'");
  c_attack->add_option("--resolutions", attack.resolutions, "Preset S0..S3 or a comma list");
  c_attack->add_option("--blur", attack.blur, "Blur before down-sampling (true/false)");
  c_attack->add_option("--lambda", attack.lambda, "Distortion weight");
  c_attack->add_option("--backends", attack.backends, "Attack backends (weight file names)");
  c_attack->add_option("--preset-scale", attack.preset_scale, "Multiply preset resolutions");
  c_attack->add_option("--sigma", attack.sigma, "Histogram RBF width");
  c_attack->add_option("--bin-step", attack.bin_step, "Histogram bin spacing");
  c_attack->add_option("--lr", attack.lr, "Learning rate");
  c_attack->add_option("--iterations", attack.iterations, "Iterations before the first restart");
  c_attack->add_option("--restarts", attack.restarts, "Maximum restarts");
  c_attack->add_option("--seed", attack.seed, "Seed");
  c_attack->add_option("--original-size", attack.original_size, "Resample the target to this size first");
  c_attack->add_option("--monitor-pooling", attack.monitor_pooling, "Pooling of the trace monitor");
  c_attack->add_option("--monitor-resolution", attack.monitor_resolution, "Resolution of the trace monitor");
  c_attack->add_option("--weights-dir", attack.weights_dir, "Weights directory (default $TMA_WEIGHTS_DIR)");
  c_attack->add_flag("--export8", attack.export8, "Also write an 8-bit PNG");

  ExperimentArgs experiment;
  auto add_experiment = [&](CLI::App* c) {
    c->add_option("spec", experiment.spec, "Experiment spec (JSON)")->required();
    c->add_option("--output,-o", experiment.output, "Output directory");
    c->add_option("--weights-dir", experiment.weights_dir, "Weights directory");
    c->add_option("--dataset", experiment.dataset, "Dataset ground truth");
    c->add_option("--carrier", experiment.carrier, "Carrier image");
    c->add_option("--mode", experiment.mode, "optimize | null | random");
    c->add_option("--query-limit", experiment.query_limit, "Attack only the first N queries");
    c->add_flag("--reuse", experiment.reuse, "Reuse persisted adversarial images");
  };
  auto* c_eval = app.add_subcommand("evaluate", "Attack a query set and report mAP");
  add_experiment(c_eval);

  std::string lambdas = "0,0.1,1,10";
  bool with_map = false;
  auto* c_lambda = app.add_subcommand("sweep-lambda", "Similarity and distortion over lambda");
  add_experiment(c_lambda);
  c_lambda->add_option("--lambdas", lambdas, "Comma-separated lambda values");
  c_lambda->add_flag("--map", with_map, "Also compute mAP");

  std::string test_resolutions, blur_modes = "off,on";
  auto* c_res = app.add_subcommand("sweep-resolution", "Similarity over test resolution");
  add_experiment(c_res);
  c_res->add_option("--resolutions", test_resolutions, "Comma-separated test resolutions")->required();
  c_res->add_option("--blur", blur_modes, "Variants to build: off, on or off,on");
  c_res->add_flag("--map", with_map, "Also compute mAP");

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "Extract dataset descriptors");
  c_extract->add_option("--dataset", extract.dataset, "Dataset ground truth")->required();
  c_extract->add_option("--output,-o", extract.output, "Descriptor file")->required();
  c_extract->add_option("--backend", extract.backend, "Backend name");
  c_extract->add_option("--pooling", extract.pooling, "Pooling");
  c_extract->add_option("--resolution", extract.resolution, "Test resolution (default original)");
  c_extract->add_option("--whitening", extract.whitening, "Whitening file");
  c_extract->add_option("--weights-dir", extract.weights_dir, "Weights directory");
  c_extract->add_flag("--queries", extract.queries, "Extract the query subset instead of the database");

  std::string whiten_in, whiten_out;
  auto* c_whiten = app.add_subcommand("whiten", "Learn PCA whitening from a descriptor file");
  c_whiten->add_option("--descriptors", whiten_in, "Descriptor file")->required();
  c_whiten->add_option("--output,-o", whiten_out, "Whitening JSON")->required();

  std::optional<std::string> plot_trace, plot_sweep;
  std::string plot_out;
  auto* c_plot = app.add_subcommand("plot", "SVG plots of a trace or a sweep report");
  c_plot->add_option("--trace", plot_trace, "Trace CSV");
  c_plot->add_option("--sweep", plot_sweep, "Sweep CSV");
  c_plot->add_option("--output,-o", plot_out, "Output directory")->required();

  std::string family = "A", weights_name;
  double width = 1.0;
  std::uint64_t weights_seed = 7;
  std::optional<std::string> weights_dir;
  auto* c_init = app.add_subcommand("init-weights", "Write deterministic synthetic backend weights");
  c_init->add_option("--family", family, "A | R | V");
  c_init->add_option("--width", width, "Channel width multiplier");
  c_init->add_option("--seed", weights_seed, "Initialization seed");
  c_init->add_option("--name", weights_name, "Backend name (default: family code)");
  c_init->add_option("--dir", weights_dir, "Weights directory");

  tma::SyntheticDatasetOptions synth;
  std::string synth_dir, synth_ap = "classic";
  auto* c_synth = app.add_subcommand("make-dataset", "Write a procedural retrieval dataset");
  c_synth->add_option("--dir", synth_dir, "Output directory")->required();
  c_synth->add_option("--name", synth.name, "Dataset name");
  c_synth->add_option("--groups", synth.groups, "Queries (one per group)");
  c_synth->add_option("--views", synth.views_per_group, "Relevant views per query");
  c_synth->add_option("--distractors", synth.distractors, "Unrelated database images");
  c_synth->add_option("--width", synth.width, "Image width");
  c_synth->add_option("--height", synth.height, "Image height");
  c_synth->add_option("--original-size", synth.original_size, "Original resolution of the dataset");
  c_synth->add_flag("--crop", synth.crop_queries, "Crop-protocol queries");
  c_synth->add_flag("--junk", synth.junk, "Mark one view per group as junk");
  c_synth->add_option("--ap", synth_ap, "classic | interpolated");
  c_synth->add_option("--seed", synth.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfiguration;
  }

  try {
    if (*c_attack) return cmd_attack(attack);
    if (*c_eval) return cmd_evaluate(experiment);
    if (*c_lambda) return cmd_sweep_lambda(experiment, lambdas, with_map);
    if (*c_res) return cmd_sweep_resolution(experiment, test_resolutions, blur_modes, with_map);
    if (*c_extract) return cmd_extract(extract);
    if (*c_whiten) return cmd_whiten(whiten_in, whiten_out);
    if (*c_plot) return cmd_plot(plot_trace, plot_sweep, plot_out);
    if (*c_init) return cmd_init_weights(family, width, weights_seed, weights_name, weights_dir);
    if (*c_synth) {
      synth.convention = tma::parse_ap_convention(synth_ap);
      const auto gt = tma::write_synthetic_dataset(synth_dir, synth);
      std::printf("%s\n", gt.c_str());
      return 0;
    }
  } catch (const tma::Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", tma::to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error (configuration): %s\n", e.what());
    return kExitConfiguration;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error (io): %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
