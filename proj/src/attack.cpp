#include "tma/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "tma/error.hpp"
#include "tma/imaging.hpp"

namespace tma {
namespace {

// Monitor descriptors of the fixed images are computed once per attack.
class Monitor {
 public:
  Monitor(const RetrievalModel& model, const Image& target, const Image& carrier)
      : model_(model),
        carrier_(carrier),
        target_desc_(describe(model, target)),
        carrier_desc_(describe(model, carrier)) {}

  TraceMetrics measure(const Image& x) const {
    const Descriptor d = describe(model_, x);
    TraceMetrics m;
    m.distortion = distortion(x, carrier_);
    m.sim_target = d.dot(target_desc_);
    m.sim_carrier = d.dot(carrier_desc_);
    m.perf_loss = 1.0 - m.sim_target;
    return m;
  }

 private:
  const RetrievalModel& model_;
  const Image& carrier_;
  Descriptor target_desc_;
  Descriptor carrier_desc_;
};

void check_gradient(const Tensor& g, int iteration, int restart, double loss) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g.data()[i])) {
      std::ostringstream os;
      os << "non-finite gradient at iteration " << iteration << " (restart " << restart
         << ", pixel " << i << ", loss " << loss << ")";
      fail(ErrorKind::NumericalFailure, os.str());
    }
  }
}

bool all_zero(const Tensor& g) {
  return std::all_of(g.values().begin(), g.values().end(), [](double v) { return v == 0.0; });
}

}  // namespace

int default_iterations(LossKind kind) { return kind == LossKind::Tensor ? 1000 : 100; }

double default_convergence_threshold(LossKind kind) {
  switch (kind) {
    case LossKind::Desc:
    case LossKind::PoolEnsemble: return 1e-3;
    case LossKind::Hist:
    case LossKind::Tensor: return 1e-2;
  }
  return 1e-3;
}

int AttackConfig::base_iterations() const {
  return iterations > 0 ? iterations : default_iterations(loss.kind);
}

double AttackConfig::threshold() const {
  return convergence_threshold > 0.0 ? convergence_threshold
                                     : default_convergence_threshold(loss.kind);
}

void AttackConfig::validate() const {
  loss.validate();
  if (!(learning_rate > 0.0)) fail(ErrorKind::Configuration, "learning rate must be positive");
  if (iterations < 0) fail(ErrorKind::Configuration, "iterations must be positive");
  if (max_restarts < 0) fail(ErrorKind::Configuration, "max_restarts must be nonnegative");
  if (!(lambda >= 0.0)) fail(ErrorKind::Configuration, "lambda must be nonnegative");
  if (convergence_threshold < 0.0)
    fail(ErrorKind::Configuration, "convergence threshold must be positive");
}

Image crop_to_aspect(const Image& carrier, const Image& target) {
  const double aspect = static_cast<double>(target.width()) / target.height();
  int width = carrier.width();
  int height = carrier.height();
  if (static_cast<double>(width) / height > aspect) {
    width = static_cast<int>(std::lround(height * aspect));
  } else {
    height = static_cast<int>(std::lround(width / aspect));
  }
  if (width < 1 || height < 1)
    fail(ErrorKind::InvalidInput, "aspect crop of the carrier is empty");
  const int x0 = (carrier.width() - width) / 2;
  const int y0 = (carrier.height() - height) / 2;

  Tensor crop(Shape{3, height, width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) crop(c, y, x) = carrier.pixels()(c, y0 + y, x0 + x);
  Image cropped(std::move(crop), carrier.id());
  Image out = resample_to(cropped, target.width(), target.height());
  out.set_frame_extent(target.frame_extent());
  return out;
}

TraceMetrics trace_metrics(const Image& x, const Image& target, const Image& carrier,
                           const RetrievalModel& monitor) {
  return Monitor(monitor, target, carrier).measure(x);
}

AttackResult run_attack(const Image& target, const Image& carrier, const AttackConfig& config,
                        const RetrievalModel& monitor) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  monitor.validate();
  if (target.width() != carrier.width() || target.height() != carrier.height())
    fail(ErrorKind::InvalidArgument, "target and carrier must have the same size; use crop_to_aspect");

  Image start_image = carrier;
  start_image.set_id(target.id().empty() ? "adversarial" : target.id() + "-adv");
  start_image.set_frame_extent(target.frame_extent());

  const AttackObjective objective(config.loss, target, start_image, config.lambda);
  const Monitor watch(monitor, target, start_image);

  AttackResult result;
  result.trace.adam = config.adam;
  Tensor best = start_image.pixels();
  double best_total = std::numeric_limits<double>::infinity();
  double best_perf = 0.0;

  auto consider = [&](const Tensor& x, const AttackObjective::Evaluation& e) {
    if (e.total < best_total) {
      best_total = e.total;
      best_perf = e.performance;
      best = x;
    }
  };

  double lr = config.learning_rate;
  int budget = config.base_iterations();
  int global = 0;
  for (int restart = 0; restart <= config.max_restarts; ++restart) {
    result.restarts_used = restart;
    Tensor x = start_image.pixels();
    Tensor m(x.shape()), v(x.shape());
    bool stationary = false;

    for (int it = 0; it < budget; ++it, ++global) {
      const auto e = objective.evaluate(x, true);
      check_gradient(e.gradient, global, restart, e.total);
      const TraceMetrics tm = watch.measure(Image(x, start_image.id(), start_image.frame_extent()));
      result.trace.records.push_back(TraceRecord{global, restart, lr, e.distortion, e.performance,
                                                 e.total, tm.sim_target, tm.sim_carrier});
      consider(x, e);
      if (all_zero(e.gradient)) {
        stationary = true;
        ++global;
        break;
      }

      const AdamSettings& a = config.adam;
      const int t = it + 1;
      const double c1 = 1.0 - std::pow(a.beta1, t);
      const double c2 = 1.0 - std::pow(a.beta2, t);
      double* px = x.data();
      const double* pg = e.gradient.data();
      double* pm = m.data();
      double* pv = v.data();
      const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        pm[i] = a.beta1 * pm[i] + (1.0 - a.beta1) * pg[i];
        pv[i] = a.beta2 * pv[i] + (1.0 - a.beta2) * pg[i] * pg[i];
        const double step = lr * (pm[i] / c1) / (std::sqrt(pv[i] / c2) + a.epsilon);
        px[i] = std::clamp(px[i] - step, 0.0, 1.0);
      }
    }
    if (!stationary) consider(x, objective.evaluate(x, false));

    if (best_perf <= config.threshold() || stationary) break;
    lr /= 5.0;
    budget *= 2;
  }

  result.adversarial = Image(best, start_image.id(), start_image.frame_extent());
  result.perf_loss = best_perf;
  result.total_loss = best_total;
  result.converged = best_perf <= config.threshold();
  result.metrics = watch.measure(result.adversarial);
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace tma
