#pragma once

#include <cstdint>
#include <vector>

#include "tma/losses.hpp"
#include "tma/model.hpp"

namespace tma {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// 100 for descriptor/histogram/pooling-ensemble losses, 1000 for tensor.
int default_iterations(LossKind kind);
// 1e-3 for descriptor losses, 1e-2 for histogram and tensor.
double default_convergence_threshold(LossKind kind);

struct AttackConfig {
  PerformanceLossSpec loss;
  double lambda = 0.0;
  double learning_rate = 0.01;
  int iterations = 0;                  // 0: default_iterations(loss.kind)
  int max_restarts = 3;
  double convergence_threshold = 0.0;  // 0: default_convergence_threshold(loss.kind)
  std::uint64_t seed = 0;
  AdamSettings adam;

  int base_iterations() const;
  double threshold() const;
  void validate() const;
};

struct TraceMetrics {
  double distortion = 0.0;
  double perf_loss = 0.0;
  double sim_target = 0.0;
  double sim_carrier = 0.0;
};

struct TraceRecord {
  int iteration = 0;  // global index over all restarts
  int restart = 0;
  double learning_rate = 0.0;
  double distortion = 0.0;
  double perf_loss = 0.0;  // the attack's performance loss
  double total_loss = 0.0;
  double sim_target = 0.0;   // under the monitor model
  double sim_carrier = 0.0;  // under the monitor model

  bool operator==(const TraceRecord&) const = default;
};

struct AttackTrace {
  AdamSettings adam;
  std::vector<TraceRecord> records;
};

struct AttackResult {
  Image adversarial;
  AttackTrace trace;
  bool converged = false;
  int restarts_used = 0;
  double perf_loss = 0.0;   // attack performance loss of the returned image
  double total_loss = 0.0;  // attack total loss of the returned image
  TraceMetrics metrics;     // monitor metrics of the returned image
  double seconds = 0.0;
};

// Central crop of the carrier with the target's aspect ratio, resampled to
// the target's size. Inherits the target's frame extent.
Image crop_to_aspect(const Image& carrier, const Image& target);

// Distortion to the carrier, and the monitor model's descriptor loss and
// similarities (perf_loss = 1 - sim_target).
TraceMetrics trace_metrics(const Image& x, const Image& target, const Image& carrier,
                           const RetrievalModel& monitor);

// Adam on the pixels starting from the carrier, clipped to [0,1] after each
// step. Without convergence, restarts from the carrier with lr / 5 and twice
// the iterations, up to max_restarts times. Returns the lowest-total-loss
// image seen. Non-finite gradients raise NumericalFailure.
AttackResult run_attack(const Image& target, const Image& carrier, const AttackConfig& config,
                        const RetrievalModel& monitor);

}  // namespace tma
