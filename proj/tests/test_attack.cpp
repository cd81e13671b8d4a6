#include <doctest.h>

#include <cmath>
#include <limits>

#include "support.hpp"
#include "tma/attack.hpp"
#include "tma/error.hpp"
#include "tma/imaging.hpp"
#include "tma/synthetic.hpp"

using namespace tma;

namespace {

AttackConfig config_for(BackendPtr b, LossKind kind, int iterations, double lambda = 0.0) {
  AttackConfig c;
  c.loss.kind = kind;
  c.loss.backends = {std::move(b)};
  c.loss.resolutions = ResolutionSet::single(64);
  c.iterations = iterations;
  c.lambda = lambda;
  return c;
}

RetrievalModel monitor_for(BackendPtr b) { return RetrievalModel{std::move(b), std::nullopt, PoolingKind::gem(), std::nullopt}; }

}  // namespace

TEST_CASE("config defaults and validation") {
  CHECK(default_iterations(LossKind::Desc) == 100);
  CHECK(default_iterations(LossKind::Hist) == 100);
  CHECK(default_iterations(LossKind::PoolEnsemble) == 100);
  CHECK(default_iterations(LossKind::Tensor) == 1000);
  CHECK(default_convergence_threshold(LossKind::Desc) == 1e-3);
  CHECK(default_convergence_threshold(LossKind::Hist) == 1e-2);
  const auto b = test::small_backend(BackendFamily::AlexNet);
  AttackConfig c = config_for(b, LossKind::Tensor, 0);
  CHECK(c.base_iterations() == 1000);
  CHECK(c.threshold() == 1e-2);
  CHECK(c.learning_rate == 0.01);
  CHECK(c.max_restarts == 3);
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = config_for(b, LossKind::Desc, -1);
  CHECK_THROWS_AS(c.validate(), Error);
  c = config_for(b, LossKind::Desc, 5, -0.5);
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("crop to aspect") {
  const Image carrier = test::random_image(100, 100, 1);
  CHECK(crop_to_aspect(carrier, test::random_image(100, 100, 2)) == carrier);
  // a 2:1 target keeps the central half-height band
  const Image band = crop_to_aspect(carrier, test::random_image(100, 50, 3));
  CHECK(band.width() == 100);
  CHECK(band.height() == 50);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 50; ++y)
      for (int x = 0; x < 100; ++x) REQUIRE(band.pixels()(c, y, x) == carrier.pixels()(c, y + 25, x));
  for (auto [w, h] : {std::pair{37, 91}, {200, 41}, {64, 64}}) {
    const Image out = crop_to_aspect(procedural_flower(120, 90), test::random_image(w, h, 4));
    CHECK(out.width() == w);
    CHECK(out.height() == h);
  }
  CHECK_THROWS_AS(crop_to_aspect(test::random_image(1, 10, 5), test::random_image(1000, 1, 6)), Error);
}

TEST_CASE("target equal to carrier converges at once") {
  const auto b = test::small_backend(BackendFamily::AlexNet);
  const Image img = procedural_scene(64, 64, 7);
  for (auto kind : {LossKind::Desc, LossKind::Hist, LossKind::Tensor}) {
    const AttackResult r = run_attack(img, img, config_for(b, kind, 10), monitor_for(b));
    REQUIRE(!r.trace.records.empty());
    CHECK(r.trace.records.front().perf_loss < 1e-12);
    CHECK(r.trace.records.front().distortion == 0.0);
    CHECK(r.converged);
    CHECK(r.restarts_used == 0);
    CHECK(r.adversarial.pixels() == img.pixels());
    CHECK(r.metrics.distortion == 0.0);
    CHECK(r.metrics.sim_target == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("an attack moves toward the target and stays in the box") {
  const auto b = test::small_backend(BackendFamily::AlexNet);
  const Image target = procedural_scene(64, 64, 8);
  const Image carrier = procedural_flower(64, 64);
  const AttackResult r = run_attack(target, carrier, config_for(b, LossKind::Desc, 30), monitor_for(b));
  CHECK(r.adversarial.width() == carrier.width());
  CHECK(r.adversarial.height() == carrier.height());
  for (double v : r.adversarial.pixels().values()) REQUIRE((v >= 0.0 && v <= 1.0));
  const auto& first = r.trace.records.front();
  CHECK(first.distortion == 0.0);
  CHECK(r.metrics.sim_target > first.sim_target);
  CHECK(r.metrics.sim_carrier < 1.0);
  // best-so-far: nothing in the trace beats the returned image
  for (const auto& rec : r.trace.records) CHECK(r.total_loss <= rec.total_loss);
  CHECK(r.perf_loss == r.total_loss);
  // record count equals the iterations performed
  int expected = 0;
  for (int k = 0, n = 30; k <= r.restarts_used; ++k, n *= 2) expected += n;
  CHECK(static_cast<int>(r.trace.records.size()) == expected);
  for (std::size_t i = 0; i < r.trace.records.size(); ++i) CHECK(r.trace.records[i].iteration == static_cast<int>(i));
}

TEST_CASE("restart schedule divides the rate by 5 and doubles the budget") {
  const auto b = test::small_backend(BackendFamily::AlexNet);
  AttackConfig c = config_for(b, LossKind::Desc, 3);
  c.convergence_threshold = 1e-15;
  c.max_restarts = 2;
  const AttackResult r = run_attack(procedural_scene(64, 64, 9), procedural_flower(64, 64), c, monitor_for(b));
  CHECK_FALSE(r.converged);
  CHECK(r.restarts_used == 2);
  REQUIRE(r.trace.records.size() == 3 + 6 + 12);
  for (const auto& rec : r.trace.records) {
    CHECK(rec.learning_rate == doctest::Approx(0.01 / std::pow(5.0, rec.restart)).epsilon(1e-14));
    const int budget = 3 << rec.restart;
    const int begin = 3 * ((1 << rec.restart) - 1);
    CHECK(rec.iteration >= begin);
    CHECK(rec.iteration < begin + budget);
  }
  // each restart starts again from the carrier
  CHECK(r.trace.records[3].distortion == 0.0);
  CHECK(r.trace.records[9].distortion == 0.0);
}

TEST_CASE("attacks are deterministic") {
  const auto b = test::small_backend(BackendFamily::ResNet);
  AttackConfig c = config_for(b, LossKind::Hist, 8, 0.1);
  c.seed = 42;
  const Image t = procedural_scene(64, 48, 10);
  const Image k = procedural_flower(64, 48);
  const AttackResult r1 = run_attack(t, k, c, monitor_for(b));
  const AttackResult r2 = run_attack(t, k, c, monitor_for(b));
  CHECK(r1.trace.records == r2.trace.records);
  CHECK(r1.adversarial == r2.adversarial);
  CHECK(r1.total_loss == r2.total_loss);
}

TEST_CASE("trace metrics") {
  const auto b = test::small_backend(BackendFamily::AlexNet);
  const auto m = monitor_for(b);
  const Image target = procedural_scene(64, 64, 11);
  const Image carrier = procedural_flower(64, 64);
  const TraceMetrics at_carrier = trace_metrics(carrier, target, carrier, m);
  CHECK(at_carrier.distortion == 0.0);
  CHECK(at_carrier.sim_carrier == doctest::Approx(1.0).epsilon(1e-12));
  const TraceMetrics at_target = trace_metrics(target, target, carrier, m);
  CHECK(at_target.sim_target == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(at_target.perf_loss) < 1e-12);
  const Image x = test::random_image(64, 64, 12);
  const TraceMetrics got = trace_metrics(x, target, carrier, m);
  const Descriptor dx = describe(m, x);
  CHECK(std::abs(got.sim_target - dx.dot(describe(m, target))) < 1e-9);
  CHECK(std::abs(got.sim_carrier - dx.dot(describe(m, carrier))) < 1e-9);
  CHECK(std::abs(got.perf_loss - loss_desc(x, target, *b, PoolingKind::gem())) < 1e-9);
  double d = 0.0;
  for (std::size_t i = 0; i < x.pixels().size(); ++i) {
    const double e = x.pixels().values()[i] - carrier.pixels().values()[i];
    d += e * e;
  }
  CHECK(std::abs(got.distortion - d / static_cast<double>(x.pixels().size())) < 1e-9);
}

TEST_CASE("invalid inputs") {
  const auto b = test::small_backend(BackendFamily::AlexNet);
  const auto c = config_for(b, LossKind::Desc, 2);
  CHECK_THROWS_AS(run_attack(test::random_image(64, 64, 13), test::random_image(64, 48, 14), c, monitor_for(b)), Error);
  // an infinite distortion weight times a zero distortion gradient is NaN
  AttackConfig inf = c;
  inf.lambda = std::numeric_limits<double>::infinity();
  try {
    run_attack(procedural_scene(64, 64, 15), procedural_flower(64, 64), inf, monitor_for(b));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NumericalFailure);
  }
}

TEST_CASE("distortion falls as lambda grows") {
  const auto b = test::small_backend(BackendFamily::AlexNet);
  const Image t = procedural_scene(64, 64, 16);
  const Image k = procedural_flower(64, 64);
  double prev_distortion = std::numeric_limits<double>::infinity();
  for (double lambda : {0.0, 0.1, 1.0, 10.0}) {
    AttackConfig c = config_for(b, LossKind::Desc, 20, lambda);
    c.max_restarts = 0;
    const AttackResult r = run_attack(t, k, c, monitor_for(b));
    INFO("lambda " << lambda);
    CHECK(r.metrics.distortion <= prev_distortion + 1e-4);
    prev_distortion = r.metrics.distortion;
  }
}
