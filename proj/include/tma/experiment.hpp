#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tma/attack.hpp"
#include "tma/dataset.hpp"
#include "tma/loss_spec.hpp"
#include "tma/model.hpp"
#include "tma/persistence.hpp"

namespace tma {

enum class AttackMode {
  Optimize,  // targeted mismatch attack
  Null,      // adversarial := target
  Random,    // control: target plus seeded Gaussian noise
};

const char* to_string(AttackMode mode);
AttackMode parse_attack_mode(const std::string& text);

// One attack triplet evaluated under one test triplet on one dataset.
//
// Paths are taken as given; the CLI resolves them relative to the spec file.
struct ExperimentSpec {
  std::string name = "experiment";
  std::filesystem::path dataset;      // ground-truth JSON
  std::filesystem::path carrier;      // empty: procedural flower
  std::filesystem::path weights_dir;  // empty: default_weights_directory()
  std::filesystem::path output_dir = "out";
  std::filesystem::path cache_dir;  // empty: <output_dir>/cache

  AttackMode mode = AttackMode::Optimize;
  LossSpecDocument attack;  // attack backends, loss and lambda
  double learning_rate = 0.01;
  int iterations = 0;  // 0: loss default
  int max_restarts = 3;
  std::uint64_t seed = 0;
  double noise = 0.02;  // Random mode standard deviation

  std::string test_backend = "A";
  std::string test_pooling = "GeM";
  std::optional<int> test_resolution;  // empty: original size
  std::filesystem::path whitening;     // empty: none

  std::optional<int> query_limit;  // overrides the dataset's subset rule
  bool reuse_adversarials = false;  // read <output_dir>/adversarial/*.png when present
  bool save_adversarials = true;

  nlohmann::json to_json() const;
  static ExperimentSpec from_json(const nlohmann::json& j);
  std::string hash() const;
};

struct QueryRow {
  std::string query;
  std::optional<double> original_ap;  // empty: no relevant items, skipped
  std::optional<double> attacked_ap;
  double sim_target = 0.0;
  double sim_carrier = 0.0;
  double distortion = 0.0;
  bool converged = true;
  int restarts = 0;
  double seconds = 0.0;
};

struct EvalReport {
  std::string experiment;
  std::string config_hash;
  std::string attack_label;
  std::string test_label;
  double original_map = 0.0;
  double attacked_map = 0.0;
  double delta_map = 0.0;  // attacked - original, in mAP points (x100)
  double mean_sim_target = 0.0;
  double mean_sim_carrier = 0.0;
  double mean_distortion = 0.0;
  std::vector<QueryRow> rows;

  nlohmann::json to_json() const;
  std::string rows_csv() const;
};

// Attacked queries kept in memory for re-evaluation under several test models.
struct AttackedQuery {
  std::size_t index = 0;
  Image target;   // query at original scale
  Image carrier;  // carrier cropped to the target's aspect
  Image adversarial;
  bool converged = true;
  int restarts = 0;
  double seconds = 0.0;
};

// Checks every artifact the spec names, loads them, and caches backends.
// Missing or malformed artifacts raise Configuration before any compute.
class ExperimentContext {
 public:
  explicit ExperimentContext(ExperimentSpec spec);

  const ExperimentSpec& spec() const { return spec_; }
  const RetrievalDataset& dataset() const { return dataset_; }
  const Image& carrier() const { return carrier_; }
  BackendPtr backend(const std::string& name) const;
  RetrievalModel test_model(std::optional<int> resolution) const;
  AttackConfig attack_config() const;
  std::vector<std::size_t> queries() const;

  std::vector<AttackedQuery> attack_queries() const;

  // Database descriptors for a test model, cached on disk.
  DescriptorSet database_descriptors(const RetrievalModel& model) const;

  // Rows and aggregates for the given adversarials. Without with_map only
  // similarities and distortion are filled in.
  EvalReport evaluate(const std::vector<AttackedQuery>& attacked, const RetrievalModel& model,
                      bool with_map) const;

 private:
  ExperimentSpec spec_;
  RetrievalDataset dataset_;
  Image carrier_;
  std::filesystem::path weights_dir_;
  std::optional<WhiteningTransform> whitening_;
  mutable std::map<std::string, BackendPtr> backends_;
};

// Attack the query subset, extract the test triplet, rank, and score.
EvalReport run_experiment(const ExperimentSpec& spec);

// Similarities only, without database extraction.
EvalReport similarity_report(const ExperimentSpec& spec);

struct SweepPoint {
  std::string series;
  double x = 0.0;  // lambda or test resolution
  double mean_sim_target = 0.0;
  double mean_sim_carrier = 0.0;
  double mean_distortion = 0.0;
  std::optional<double> map;
};

// CSV header: series,x,sim_target,sim_carrier,distortion,map
std::string sweep_csv(const std::vector<SweepPoint>& points);
std::vector<SweepPoint> parse_sweep_csv(std::string_view text);

// Re-runs the attack for each lambda and reports the test-triplet means.
std::vector<SweepPoint> sweep_lambda(const ExperimentSpec& spec, const std::vector<double>& lambdas,
                                     bool with_map);

// Each named attack variant is built once and tested at every resolution.
struct SweepVariant {
  std::string label;
  LossSpecDocument attack;
};
std::vector<SweepPoint> sweep_resolution(const ExperimentSpec& spec,
                                         const std::vector<SweepVariant>& variants,
                                         const std::vector<int>& test_resolutions, bool with_map);

}  // namespace tma
