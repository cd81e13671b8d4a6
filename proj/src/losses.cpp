#include "tma/losses.hpp"

#include <algorithm>
#include <cmath>

#include "tma/error.hpp"
#include "tma/kernels.hpp"

namespace tma {
namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!(a.shape() == b.shape()))
    fail(ErrorKind::InvalidArgument, std::string(what) + ": shape mismatch " +
                                         to_string(a.shape()) + " vs " + to_string(b.shape()));
}

double checked_max(const Tensor& target) {
  const double m = target.max();
  if (!(m > 0.0))
    fail(ErrorKind::DegenerateTarget, "target activation tensor is all zero; cannot normalize");
  return m;
}

double desc_term(const Tensor& activations, std::span<const double> target, PoolingKind pooling,
                 Tensor* grad) {
  const auto raw = pool_raw(activations, pooling);
  const Descriptor d = Descriptor::normalized(raw);
  double cos = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) cos += d[i] * target[i];
  if (grad) {
    auto g = normalized_dot_gradient(raw, target);
    for (double& v : g) v = -v;
    *grad = pool_raw_backward(activations, pooling, g);
  }
  return 1.0 - cos;
}

double tensor_term(const Tensor& activations, const Tensor& target, double m, Tensor* grad) {
  check_same_shape(activations, target, "tensor loss");
  const double n = static_cast<double>(activations.size());
  const double value = squared_distance(activations, target) / (m * m * n);
  if (grad) {
    *grad = Tensor(activations.shape());
    const double scale = 2.0 / (m * m * n);
    for (std::size_t i = 0; i < activations.size(); ++i)
      grad->data()[i] = scale * (activations.data()[i] - target.data()[i]);
  }
  return value;
}

double histogram_term(const Tensor& activations, const std::vector<double>& target_hist,
                      const HistogramSpec& spec, double m, Tensor* grad) {
  const auto hist = kernels::soft_histogram(activations, spec.bin_centers, spec.sigma, m);
  if (hist.size() != target_hist.size())
    fail(ErrorKind::InvalidArgument, "histogram channel count mismatch");
  const std::size_t bins = spec.bin_centers.size();
  const int d = activations.channels();
  // counts become frequencies over the spatial positions
  const double p = static_cast<double>(activations.shape().plane());
  std::vector<double> g(hist.size(), 0.0);
  double total = 0.0;
  for (int c = 0; c < d; ++c) {
    double norm2 = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double diff = hist[c * bins + k] - target_hist[c * bins + k];
      norm2 += diff * diff;
    }
    const double norm = std::sqrt(norm2);
    total += norm;
    if (grad && norm > 0.0)
      for (std::size_t k = 0; k < bins; ++k)
        g[c * bins + k] = (hist[c * bins + k] - target_hist[c * bins + k]) / (norm * d * p);
  }
  if (grad)
    *grad = kernels::soft_histogram_backward(activations, spec.bin_centers, spec.sigma, m, g);
  return total / (d * p);
}

Tensor distortion_gradient(const Tensor& x, const Tensor& carrier, double lambda) {
  Tensor g(x.shape());
  const double scale = 2.0 * lambda / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    g.data()[i] = scale * (x.data()[i] - carrier.data()[i]);
  return g;
}

}  // namespace

HistogramSpec HistogramSpec::uniform(double step, double sigma) {
  if (!(step > 0.0) || step > 1.0) fail(ErrorKind::InvalidArgument, "histogram step must be in (0,1]");
  HistogramSpec spec;
  const int count = static_cast<int>(std::floor(1.0 / step + 1e-9));
  for (int k = 0; k <= count; ++k) spec.bin_centers.push_back(k * step);
  spec.sigma = sigma;
  spec.validate();
  return spec;
}

void HistogramSpec::validate() const {
  if (bin_centers.empty()) fail(ErrorKind::InvalidArgument, "histogram needs bin centers");
  for (std::size_t i = 1; i < bin_centers.size(); ++i)
    if (!(bin_centers[i] > bin_centers[i - 1]))
      fail(ErrorKind::InvalidArgument, "histogram bin centers must be strictly increasing");
  if (!(sigma > 0.0)) fail(ErrorKind::InvalidArgument, "histogram sigma must be positive");
}

ResolutionSet ResolutionSet::preset(const std::string& name, bool blur, double scale) {
  std::vector<int> base{1024};
  if (name == "S1" || name == "S2") {
    for (int r = 300; r <= 900; r += 100) base.push_back(r);
  }
  if (name == "S2") {
    for (int r = 350; r <= 950; r += 100) base.push_back(r);
  }
  if (name == "S3") {
    for (int r : {262, 289, 319, 351, 387, 427, 470, 518, 571, 630, 694, 765, 843, 929})
      base.push_back(r);
  }
  if (name != "S0" && name != "S1" && name != "S2" && name != "S3")
    fail(ErrorKind::Configuration, "unknown resolution preset '" + name + "'");
  if (!(scale > 0.0)) fail(ErrorKind::InvalidArgument, "preset scale must be positive");
  ResolutionSet set;
  set.blur = blur;
  for (int r : base) {
    const int s = static_cast<int>(std::lround(r * scale));
    if (std::find(set.resolutions.begin(), set.resolutions.end(), s) == set.resolutions.end())
      set.resolutions.push_back(s);
  }
  set.validate();
  return set;
}

void ResolutionSet::validate() const {
  if (resolutions.empty()) fail(ErrorKind::InvalidArgument, "resolution set is empty");
  for (int r : resolutions)
    if (r < kMinResolution)
      fail(ErrorKind::InvalidResolution, "attack resolution " + std::to_string(r) +
                                             " below minimum " + std::to_string(kMinResolution));
}

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Desc: return "desc";
    case LossKind::Tensor: return "tensor";
    case LossKind::Hist: return "hist";
    case LossKind::PoolEnsemble: return "pool_ensemble";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& text) {
  if (text == "desc") return LossKind::Desc;
  if (text == "tensor" || text == "tens") return LossKind::Tensor;
  if (text == "hist") return LossKind::Hist;
  if (text == "pool_ensemble" || text == "P") return LossKind::PoolEnsemble;
  fail(ErrorKind::Configuration, "unknown loss kind '" + text + "'");
}

void PerformanceLossSpec::validate() const {
  if (backends.empty()) fail(ErrorKind::Configuration, "loss spec needs at least one backend");
  for (const auto& b : backends)
    if (!b) fail(ErrorKind::Configuration, "loss spec has a null backend");
  if ((kind == LossKind::Desc || kind == LossKind::PoolEnsemble) && poolings.empty())
    fail(ErrorKind::InvalidArgument, "descriptor losses need a pooling");
  if (kind == LossKind::Hist) histogram.validate();
  resolutions.validate();
}

std::string PerformanceLossSpec::label() const {
  std::string s = "L_";
  switch (kind) {
    case LossKind::Desc: s += poolings.empty() ? "desc" : poolings.front().name(); break;
    case LossKind::Tensor: s += "tens"; break;
    case LossKind::Hist: s += "hist"; break;
    case LossKind::PoolEnsemble: s += "P"; break;
  }
  s += "^{";
  for (std::size_t i = 0; i < resolutions.resolutions.size(); ++i)
    s += (i ? "," : "") + std::to_string(resolutions.resolutions[i]);
  s += "}";
  if (resolutions.blur) s += "^";
  return s;
}

double distortion(const Tensor& x, const Tensor& carrier) {
  check_same_shape(x, carrier, "distortion");
  return squared_distance(x, carrier) / static_cast<double>(x.size());
}

double distortion(const Image& x, const Image& carrier) {
  return distortion(x.pixels(), carrier.pixels());
}

double tensor_loss(const Tensor& activations, const Tensor& target, double max_activation) {
  if (!(max_activation > 0.0)) fail(ErrorKind::DegenerateTarget, "max activation must be positive");
  return tensor_term(activations, target, max_activation, nullptr);
}

std::vector<double> soft_histogram(const ActivationTensor& tensor, const HistogramSpec& spec,
                                   double max_activation) {
  spec.validate();
  if (!(max_activation > 0.0)) fail(ErrorKind::DegenerateTarget, "max activation must be positive");
  return kernels::soft_histogram(tensor, spec.bin_centers, spec.sigma, max_activation);
}

double histogram_loss(const Tensor& activations, const Tensor& target, const HistogramSpec& spec,
                      double max_activation) {
  if (activations.channels() != target.channels())
    fail(ErrorKind::InvalidArgument, "histogram loss: channel mismatch");
  return histogram_term(activations, soft_histogram(target, spec, max_activation), spec,
                        max_activation, nullptr);
}

double descriptor_loss(const Tensor& activations, const Tensor& target, PoolingKind pooling) {
  const Descriptor t = pool(target, pooling);
  return desc_term(activations, t.values(), pooling, nullptr);
}

double loss_desc(const Image& x, const Image& target, const FeatureBackend& backend,
                 PoolingKind pooling) {
  check_same_shape(x.pixels(), target.pixels(), "loss_desc");
  return descriptor_loss(backend.forward(x), backend.forward(target), pooling);
}

double loss_tensor(const Image& x, const Image& target, const FeatureBackend& backend) {
  check_same_shape(x.pixels(), target.pixels(), "loss_tensor");
  const Tensor gt = backend.forward(target);
  return tensor_term(backend.forward(x), gt, checked_max(gt), nullptr);
}

double loss_hist(const Image& x, const Image& target, const FeatureBackend& backend,
                 const HistogramSpec& spec) {
  check_same_shape(x.pixels(), target.pixels(), "loss_hist");
  const Tensor gt = backend.forward(target);
  return histogram_loss(backend.forward(x), gt, spec, checked_max(gt));
}

double loss_pool_ensemble(const Image& x, const Image& target, const FeatureBackend& backend,
                          const std::vector<PoolingKind>& poolings) {
  if (poolings.empty()) fail(ErrorKind::InvalidArgument, "pooling set is empty");
  check_same_shape(x.pixels(), target.pixels(), "loss_pool_ensemble");
  const Tensor g = backend.forward(x);
  const Tensor gt = backend.forward(target);
  double acc = 0.0;
  for (const PoolingKind& p : poolings) acc += descriptor_loss(g, gt, p);
  return acc / static_cast<double>(poolings.size());
}

double loss_multiresolution(const Image& x, const Image& target, const PerformanceLossSpec& spec) {
  return AttackObjective(spec, target, x, 0.0).evaluate(x.pixels(), false).performance;
}

double total_loss(const Image& x, const Image& target, const Image& carrier,
                  const PerformanceLossSpec& spec, double lambda) {
  return AttackObjective(spec, target, carrier, lambda).evaluate(x.pixels(), false).total;
}

LossValue loss_nontargeted(const Image& x, const Image& carrier, const FeatureBackend& backend,
                           PoolingKind pooling, double lambda, bool with_gradient) {
  check_same_shape(x.pixels(), carrier.pixels(), "loss_nontargeted");
  const Descriptor hc = pool(backend.forward(carrier), pooling);
  ForwardTape tape;
  const Tensor g = backend.forward(x.pixels(), tape);
  const auto raw = pool_raw(g, pooling);
  const Descriptor hx = Descriptor::normalized(raw);
  LossValue out;
  out.value = hx.dot(hc) + lambda * distortion(x, carrier);
  if (with_gradient) {
    const auto gv = normalized_dot_gradient(raw, hc.values());
    out.gradient = backend.backward(tape, pool_raw_backward(g, pooling, gv));
    out.gradient += distortion_gradient(x.pixels(), carrier.pixels(), lambda);
  }
  return out;
}

AttackObjective::AttackObjective(PerformanceLossSpec spec, const Image& target,
                                 const Image& carrier, double lambda)
    : spec_(std::move(spec)), lambda_(lambda), carrier_(carrier.pixels()) {
  spec_.validate();
  if (!(lambda >= 0.0)) fail(ErrorKind::InvalidArgument, "lambda must be nonnegative");
  check_same_shape(target.pixels(), carrier.pixels(), "attack objective (crop the carrier first)");

  for (const BackendPtr& backend : spec_.backends) {
    for (int s : spec_.resolutions.resolutions) {
      Term term{backend,
                ResolutionTransform(target.pixels().shape(), target.frame_extent(), s,
                                    spec_.resolutions.blur),
                {},
                0.0,
                {},
                {}};
      term.target = backend->forward(term.transform.apply(target.pixels()));
      switch (spec_.kind) {
        case LossKind::Tensor:
          term.max_activation = checked_max(term.target);
          break;
        case LossKind::Hist:
          term.max_activation = checked_max(term.target);
          term.target_histogram = kernels::soft_histogram(
              term.target, spec_.histogram.bin_centers, spec_.histogram.sigma, term.max_activation);
          break;
        case LossKind::Desc:
        case LossKind::PoolEnsemble:
          for (const PoolingKind& p : spec_.poolings) {
            const Descriptor d = pool(term.target, p);
            term.target_descriptors.emplace_back(d.values().begin(), d.values().end());
            if (spec_.kind == LossKind::Desc) break;
          }
          break;
      }
      terms_.push_back(std::move(term));
    }
  }
}

double AttackObjective::base_loss(const Term& term, const Tensor& activations, Tensor* grad) const {
  switch (spec_.kind) {
    case LossKind::Desc:
      return desc_term(activations, term.target_descriptors.front(), spec_.poolings.front(), grad);
    case LossKind::PoolEnsemble: {
      const double w = 1.0 / static_cast<double>(spec_.poolings.size());
      double acc = 0.0;
      Tensor part;
      if (grad) *grad = Tensor(activations.shape());
      for (std::size_t i = 0; i < spec_.poolings.size(); ++i) {
        acc += desc_term(activations, term.target_descriptors[i], spec_.poolings[i],
                         grad ? &part : nullptr);
        if (grad) {
          part *= w;
          *grad += part;
        }
      }
      return acc * w;
    }
    case LossKind::Tensor:
      return tensor_term(activations, term.target, term.max_activation, grad);
    case LossKind::Hist:
      return histogram_term(activations, term.target_histogram, spec_.histogram,
                            term.max_activation, grad);
  }
  return 0.0;
}

AttackObjective::Evaluation AttackObjective::evaluate(const Tensor& pixels, bool with_gradient) const {
  check_same_shape(pixels, carrier_, "attack objective");
  Evaluation out;
  if (with_gradient) out.gradient = Tensor(pixels.shape());
  const double weight = 1.0 / static_cast<double>(terms_.size());

  for (const Term& term : terms_) {
    ForwardTape tape;
    const Tensor activations = term.transform.identity()
                                   ? term.backend->forward(pixels, tape)
                                   : term.backend->forward(term.transform.apply(pixels), tape);
    Tensor grad_activations;
    const double loss = base_loss(term, activations, with_gradient ? &grad_activations : nullptr);
    out.performance += weight * loss;
    if (with_gradient) {
      Tensor g = term.backend->backward(tape, grad_activations);
      if (!term.transform.identity()) g = term.transform.adjoint(g);
      g *= weight;
      out.gradient += g;
    }
  }

  out.distortion = distortion(pixels, carrier_);
  out.total = out.performance + lambda_ * out.distortion;
  if (with_gradient && lambda_ > 0.0) out.gradient += distortion_gradient(pixels, carrier_, lambda_);
  return out;
}

}  // namespace tma
