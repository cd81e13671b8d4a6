#pragma once

#include <string>
#include <vector>

#include "tma/backend.hpp"
#include "tma/imaging.hpp"
#include "tma/pooling.hpp"

namespace tma {

// Soft-assignment histogram bins over normalized activations.
struct HistogramSpec {
  std::vector<double> bin_centers;
  double sigma = 0.1;

  // Centers 0, step, 2 step, ... up to 1 (21 centers for the default step).
  static HistogramSpec uniform(double step = 0.05, double sigma = 0.1);
  void validate() const;
};

// Attack resolutions (largest frame side). blur selects blur-then-downsample.
struct ResolutionSet {
  std::vector<int> resolutions;
  bool blur = false;

  // Named presets S0..S3 for 1024-pixel originals. scale multiplies every
  // resolution (use original_size / 1024 for smaller originals).
  static ResolutionSet preset(const std::string& name, bool blur = false, double scale = 1.0);
  static ResolutionSet single(int resolution, bool blur = false) { return {{resolution}, blur}; }
  void validate() const;
};

enum class LossKind { Desc, Tensor, Hist, PoolEnsemble };

const char* to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

struct PerformanceLossSpec {
  LossKind kind = LossKind::Desc;
  // Desc uses poolings.front(); PoolEnsemble averages over all of them.
  std::vector<PoolingKind> poolings{PoolingKind::gem()};
  HistogramSpec histogram = HistogramSpec::uniform();
  ResolutionSet resolutions;
  std::vector<BackendPtr> backends;

  void validate() const;
  // e.g. "L_hist^S1^" (caret marks blur).
  std::string label() const;
};

// Mean squared pixel difference, normalized by W*H*3.
double distortion(const Image& x, const Image& carrier);
double distortion(const Tensor& x, const Tensor& carrier);

// Tensor-level base losses. max_activation is the target normalizer M.
double tensor_loss(const Tensor& activations, const Tensor& target, double max_activation);
// soft_histogram returns raw soft counts, channel-major. histogram_loss
// compares per-channel frequencies (counts over the number of positions).
std::vector<double> soft_histogram(const ActivationTensor& tensor, const HistogramSpec& spec,
                                   double max_activation);
double histogram_loss(const Tensor& activations, const Tensor& target, const HistogramSpec& spec,
                      double max_activation);
// 1 - cosine of the pooled descriptors.
double descriptor_loss(const Tensor& activations, const Tensor& target, PoolingKind pooling);

// Image-level losses at the images' own resolution.
double loss_desc(const Image& x, const Image& target, const FeatureBackend& backend,
                 PoolingKind pooling);
double loss_tensor(const Image& x, const Image& target, const FeatureBackend& backend);
double loss_hist(const Image& x, const Image& target, const FeatureBackend& backend,
                 const HistogramSpec& spec = HistogramSpec::uniform());
double loss_pool_ensemble(const Image& x, const Image& target, const FeatureBackend& backend,
                          const std::vector<PoolingKind>& poolings);
// Mean over resolutions, then over backends, of the spec's base loss.
double loss_multiresolution(const Image& x, const Image& target, const PerformanceLossSpec& spec);
double total_loss(const Image& x, const Image& target, const Image& carrier,
                  const PerformanceLossSpec& spec, double lambda);

struct LossValue {
  double value = 0.0;
  Tensor gradient;  // w.r.t. pixels; empty unless requested
};

// Cosine to the carrier's descriptor plus lambda * distortion.
LossValue loss_nontargeted(const Image& x, const Image& carrier, const FeatureBackend& backend,
                           PoolingKind pooling, double lambda, bool with_gradient = false);

// The targeted objective with everything that depends only on the target
// precomputed, so it can be evaluated (with gradient) many times.
class AttackObjective {
 public:
  AttackObjective(PerformanceLossSpec spec, const Image& target, const Image& carrier,
                  double lambda);

  struct Evaluation {
    double performance = 0.0;
    double distortion = 0.0;
    double total = 0.0;
    Tensor gradient;  // d total / d pixels
  };

  Evaluation evaluate(const Tensor& pixels, bool with_gradient) const;

  const PerformanceLossSpec& spec() const { return spec_; }
  double lambda() const { return lambda_; }
  Shape image_shape() const { return carrier_.shape(); }

 private:
  struct Term {
    BackendPtr backend;
    ResolutionTransform transform;
    Tensor target;
    double max_activation = 0.0;
    std::vector<double> target_histogram;
    std::vector<std::vector<double>> target_descriptors;  // per pooling
  };

  double base_loss(const Term& term, const Tensor& activations, Tensor* grad) const;

  PerformanceLossSpec spec_;
  double lambda_;
  Tensor carrier_;
  std::vector<Term> terms_;
};

}  // namespace tma
