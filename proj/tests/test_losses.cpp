#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "tma/error.hpp"
#include "tma/imaging.hpp"
#include "tma/loss_spec.hpp"
#include "tma/losses.hpp"
#include "tma/model.hpp"
#include "tma/synthetic.hpp"

using namespace tma;

namespace {

double rms(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s / static_cast<double>(t.size()));
}

// Spatially permuted copy: each channel's plane shuffled by the same
// permutation.
Tensor shuffled(const Tensor& t, std::uint64_t seed) {
  std::vector<std::size_t> perm(t.shape().plane());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor out(t.shape());
  for (int c = 0; c < t.channels(); ++c)
    for (std::size_t i = 0; i < perm.size(); ++i) out.channel(c)[i] = t.channel(c)[perm[i]];
  return out;
}

PerformanceLossSpec make_spec(LossKind kind, std::vector<BackendPtr> backends, std::vector<int> res,
                              bool blur = false, std::vector<PoolingKind> poolings = {PoolingKind::gem()}) {
  PerformanceLossSpec s;
  s.kind = kind;
  s.poolings = std::move(poolings);
  s.backends = std::move(backends);
  s.resolutions = ResolutionSet{std::move(res), blur};
  return s;
}

// A backend whose every activation is zero.
BackendPtr dead_backend() {
  layers::Conv conv;
  conv.in_channels = 3;
  conv.out_channels = 2;
  conv.window = Window{1, 1, 0};
  conv.weight.assign(6, 0.0);
  conv.bias = {-1.0, -1.0};
  return std::make_shared<const FeatureBackend>("dead", BackendFamily::AlexNet, std::array{0.0, 0.0, 0.0},
                                                std::array{1.0, 1.0, 1.0},
                                                std::vector<Layer>{conv, layers::Relu{}});
}

void check_gradient(const AttackObjective& objective, const Image& at, int count, std::uint64_t seed,
                    const std::string& what) {
  const auto eval = objective.evaluate(at.pixels(), true);
  REQUIRE(eval.gradient.shape() == at.pixels().shape());
  // entries far below the typical gradient size are dominated by step noise
  const double floor = 1e-2 * rms(eval.gradient);
  auto f = [&](const Tensor& x) { return objective.evaluate(x, false).total; };
  int bad = 0;
  for (const auto& c : test::random_coordinates(at.pixels().shape(), count, seed)) {
    const double numeric = test::central_difference(f, at.pixels(), c, 1e-5);
    const double err = test::relative_error(eval.gradient(c.c, c.y, c.x), numeric, floor);
    INFO(what << " at " << c.c << "," << c.y << "," << c.x << " analytic " << eval.gradient(c.c, c.y, c.x)
              << " numeric " << numeric);
    CHECK(err < 1e-2);
    bad += err < 1e-2 ? 0 : 1;
  }
  CHECK(bad == 0);
}

}  // namespace

TEST_CASE("distortion") {
  const Image a = test::random_image(20, 10, 1);
  CHECK(distortion(a, a) == 0.0);
  Tensor shifted = a.pixels();
  for (double& v : shifted.values()) v = v > 0.5 ? v - 0.1 : v + 0.1;
  CHECK(distortion(Image(shifted), a) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK_THROWS_AS(distortion(a, test::random_image(10, 20, 2)), Error);
}

TEST_CASE("tensor loss") {
  const Tensor t = test::random_tensor(Shape{3, 2, 2}, 3, 0.0, 2.0);
  CHECK(tensor_loss(t, t, 2.0) == 0.0);
  Tensor one = t;
  one(1, 0, 1) += 0.3;
  CHECK(tensor_loss(one, t, 1.7) == doctest::Approx(0.09 / (1.7 * 1.7 * 12)).epsilon(1e-12));
  const Tensor u = test::random_tensor(Shape{3, 2, 2}, 4, 0.0, 2.0);
  CHECK(std::abs(tensor_loss(u, t, t.max()) - oracle::tensor_loss(u, t, t.max())) < 1e-9);
  CHECK_THROWS_AS(tensor_loss(u, Tensor(Shape{3, 2, 3}), 1.0), Error);
}

TEST_CASE("soft histogram") {
  const HistogramSpec spec = HistogramSpec::uniform();
  REQUIRE(spec.bin_centers.size() == 21);
  CHECK(spec.bin_centers.back() == doctest::Approx(1.0));
  CHECK(spec.sigma == 0.1);
  // one activation exactly at a center contributes 1 there
  Tensor single(Shape{1, 1, 1}, 0.35 * 4.0);
  const auto h = soft_histogram(single, spec, 4.0);
  CHECK(h[7] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(h[6] == doctest::Approx(std::exp(-0.05 * 0.05 / 0.02)).epsilon(1e-12));
  // against the per-element double loop
  const Tensor t = test::random_tensor(Shape{2, 3, 3}, 5, 0.0, 3.0);
  const auto got = soft_histogram(t, spec, 3.0);
  const auto want = oracle::soft_histogram(t, spec.bin_centers, spec.sigma, 3.0);
  for (int c = 0; c < 2; ++c)
    for (std::size_t k = 0; k < 21; ++k) CHECK(std::abs(got[c * 21 + k] - want[c][k]) < 1e-6);
  // permutation invariance, and a constant channel gives the same row
  const auto perm = soft_histogram(shuffled(t, 6), spec, 3.0);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(perm[i] == doctest::Approx(got[i]).epsilon(1e-12));
  const Tensor flat(Shape{1, 4, 4}, 1.2);
  CHECK(soft_histogram(shuffled(flat, 7), spec, 3.0) == soft_histogram(flat, spec, 3.0));
}

TEST_CASE("histogram spec validation") {
  HistogramSpec bad = HistogramSpec::uniform();
  bad.sigma = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = HistogramSpec::uniform();
  std::swap(bad.bin_centers[2], bad.bin_centers[3]);
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(HistogramSpec::uniform(0.25).bin_centers.size() == 5);
  CHECK_THROWS_AS(HistogramSpec::uniform(0.0), Error);
}

TEST_CASE("histogram loss") {
  const HistogramSpec spec = HistogramSpec::uniform();
  const Tensor t = test::random_tensor(Shape{4, 5, 3}, 8, 0.0, 2.0);
  const Tensor u = test::random_tensor(Shape{4, 5, 3}, 9, 0.0, 2.0);
  CHECK(histogram_loss(t, t, spec, t.max()) == 0.0);
  CHECK(std::abs(histogram_loss(shuffled(t, 10), t, spec, t.max())) < 1e-12);
  CHECK(std::abs(histogram_loss(u, t, spec, t.max()) - oracle::histogram_loss(u, t, spec.bin_centers, 0.1, t.max())) <
        1e-6);
}

TEST_CASE("implication chain tensor -> hist -> desc") {
  const HistogramSpec spec = HistogramSpec::uniform();
  const Tensor t = test::random_tensor(Shape{6, 4, 5}, 11, 0.0, 2.0);
  CHECK(tensor_loss(t, t, t.max()) == 0.0);
  CHECK(histogram_loss(t, t, spec, t.max()) == 0.0);
  // a spatial shuffle keeps the histograms but not the tensor
  const Tensor s = shuffled(t, 12);
  CHECK(tensor_loss(s, t, t.max()) > 0.0);
  CHECK(std::abs(histogram_loss(s, t, spec, t.max())) < 1e-12);
  for (auto k : {PoolingKind::mac(), PoolingKind::spoc(), PoolingKind::gem()})
    CHECK(std::abs(descriptor_loss(s, t, k)) < 1e-12);
}

TEST_CASE("descriptor and ensemble losses on images") {
  const auto b = test::small_backend(BackendFamily::AlexNet);
  const Image x = procedural_scene(96, 72, 1);
  const Image t = procedural_scene(96, 72, 2);
  CHECK(std::abs(loss_desc(x, x, *b, PoolingKind::gem())) < 1e-12);
  const double gem = loss_desc(x, t, *b, PoolingKind::gem());
  CHECK(gem > 0.0);
  CHECK(gem == doctest::Approx(1.0 - describe(RetrievalModel{b, std::nullopt, PoolingKind::gem(), std::nullopt}, x)
                                         .dot(describe(RetrievalModel{b, std::nullopt, PoolingKind::gem(), std::nullopt}, t)))
                   .epsilon(1e-12));
  CHECK(loss_pool_ensemble(x, t, *b, {PoolingKind::gem()}) == gem);
  const std::vector<PoolingKind> three{PoolingKind::mac(), PoolingKind::spoc(), PoolingKind::gem()};
  const double mean = (loss_desc(x, t, *b, three[0]) + loss_desc(x, t, *b, three[1]) + gem) / 3.0;
  CHECK(std::abs(loss_pool_ensemble(x, t, *b, three) - mean) < 1e-9);
  CHECK(std::abs(loss_pool_ensemble(x, x, *b, three)) < 1e-12);
  CHECK(loss_tensor(x, x, *b) == 0.0);
  CHECK(loss_hist(x, x, *b) == 0.0);
  CHECK(loss_tensor(x, t, *b) > 0.0);
  CHECK(loss_hist(x, t, *b) > 0.0);
}

TEST_CASE("degenerate targets") {
  const auto dead = dead_backend();
  const Image x = test::random_image(8, 8, 13);
  try {
    loss_tensor(x, x, *dead);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateTarget);
  }
  CHECK_THROWS_AS(loss_hist(x, x, *dead), Error);
  try {
    loss_desc(x, x, *dead, PoolingKind::gem());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UndefinedDirection);
  }
}

TEST_CASE("multi-resolution loss is the mean of per-resolution terms") {
  const auto a = test::small_backend(BackendFamily::AlexNet);
  SUBCASE("S0 on a 1024 image equals the base loss") {
    const Image x = procedural_scene(1024, 768, 3);
    const Image t = procedural_scene(1024, 768, 4);
    const auto spec = make_spec(LossKind::Desc, {a}, {1024});
    CHECK(loss_multiresolution(x, t, spec) == doctest::Approx(loss_desc(x, t, *a, PoolingKind::gem())).epsilon(1e-12));
  }
  const Image x = procedural_scene(640, 480, 5);
  const Image t = procedural_scene(640, 480, 6);
  SUBCASE("{300, 600} term by term") {
    for (bool blur : {false, true}) {
      auto prep = [&](const Image& img, int s) { return blur ? blur_resample(img, s) : resample(img, s); };
      const double d = (loss_desc(prep(x, 300), prep(t, 300), *a, PoolingKind::gem()) +
                        loss_desc(prep(x, 600), prep(t, 600), *a, PoolingKind::gem())) /
                       2.0;
      CHECK(std::abs(loss_multiresolution(x, t, make_spec(LossKind::Desc, {a}, {300, 600}, blur)) - d) < 1e-9);
      const double h = (loss_hist(prep(x, 300), prep(t, 300), *a) + loss_hist(prep(x, 600), prep(t, 600), *a)) / 2.0;
      CHECK(std::abs(loss_multiresolution(x, t, make_spec(LossKind::Hist, {a}, {300, 600}, blur)) - h) < 1e-9);
      const double n = (loss_tensor(prep(x, 300), prep(t, 300), *a) + loss_tensor(prep(x, 600), prep(t, 600), *a)) / 2.0;
      CHECK(std::abs(loss_multiresolution(x, t, make_spec(LossKind::Tensor, {a}, {300, 600}, blur)) - n) < 1e-9);
    }
  }
  SUBCASE("backend ensemble is the mean over backends") {
    const auto r = test::small_backend(BackendFamily::ResNet);
    const double e = (loss_desc(resample(x, 300), resample(t, 300), *a, PoolingKind::gem()) +
                      loss_desc(resample(x, 300), resample(t, 300), *r, PoolingKind::gem())) /
                     2.0;
    CHECK(std::abs(loss_multiresolution(x, t, make_spec(LossKind::Desc, {a, r}, {300})) - e) < 1e-9);
  }
  SUBCASE("zero at the target") {
    for (auto kind : {LossKind::Desc, LossKind::Tensor, LossKind::Hist, LossKind::PoolEnsemble})
      CHECK(std::abs(loss_multiresolution(t, t, make_spec(kind, {a}, {200, 400}, true))) < 1e-12);
  }
}

TEST_CASE("total loss") {
  const auto a = test::small_backend(BackendFamily::AlexNet);
  const Image x = procedural_scene(128, 96, 7);
  const Image t = procedural_scene(128, 96, 8);
  const Image c = procedural_flower(128, 96);
  const auto spec = make_spec(LossKind::Hist, {a}, {128, 64});
  const double perf = loss_multiresolution(x, t, spec);
  CHECK(total_loss(x, t, c, spec, 0.0) == perf);
  const double d = oracle::tensor_loss(x.pixels(), c.pixels(), 1.0);
  CHECK(std::abs(total_loss(x, t, c, spec, 2.0) - (perf + 2.0 * d)) < 1e-9);
  CHECK(std::abs(total_loss(t, t, t, spec, 3.0)) < 1e-12);
  CHECK_THROWS_AS(total_loss(x, t, procedural_flower(96, 128), spec, 1.0), Error);
  CHECK_THROWS_AS(total_loss(x, t, c, spec, -1.0), Error);
}

TEST_CASE("non-targeted loss") {
  const auto a = test::small_backend(BackendFamily::AlexNet);
  const Image c = procedural_flower(96, 96);
  const Image x = gaussian_blur(test::random_image(96, 96, 9), 1.0);
  CHECK(loss_nontargeted(c, c, *a, PoolingKind::gem(), 0.0).value == doctest::Approx(1.0).epsilon(1e-12));
  const double cos = 1.0 - loss_desc(x, c, *a, PoolingKind::gem());
  const double d = oracle::tensor_loss(x.pixels(), c.pixels(), 1.0);
  CHECK(std::abs(loss_nontargeted(x, c, *a, PoolingKind::gem(), 1.0).value - (cos + d)) < 1e-9);
  // orthogonal descriptors: disjoint channel support under MAC
  Tensor ta(Shape{4, 2, 2}, 0.0), tb(Shape{4, 2, 2}, 0.0);
  ta(0, 0, 0) = ta(1, 1, 1) = 1.0;
  tb(2, 0, 1) = tb(3, 1, 0) = 1.0;
  CHECK(descriptor_loss(ta, tb, PoolingKind::mac()) == doctest::Approx(1.0));

  const LossValue v = loss_nontargeted(x, c, *a, PoolingKind::gem(), 0.5, true);
  auto f = [&](const Tensor& p) { return loss_nontargeted(Image::clamped(p), c, *a, PoolingKind::gem(), 0.5).value; };
  const double floor = 1e-2 * rms(v.gradient);
  for (const auto& at : test::random_coordinates(x.pixels().shape(), 20, 10)) {
    const double numeric = test::central_difference(f, x.pixels(), at, 1e-5);
    CHECK(test::relative_error(v.gradient(at.c, at.y, at.x), numeric, floor) < 1e-2);
  }
}

TEST_CASE("gradients of every loss match central differences") {
  const auto a = test::small_backend(BackendFamily::AlexNet);
  const auto r = test::small_backend(BackendFamily::ResNet);
  const Image target = procedural_scene(96, 72, 11);
  const Image carrier = procedural_flower(96, 72);
  // an interior point of the box, away from the carrier
  const Image x = Image::clamped(gaussian_blur(test::random_image(96, 72, 12), 1.0).pixels());
  const std::vector<PoolingKind> all{PoolingKind::mac(), PoolingKind::spoc(), PoolingKind::gem(),
                                     PoolingKind::rmac(), PoolingKind::crow()};
  for (const auto& p : all)
    check_gradient(AttackObjective(make_spec(LossKind::Desc, {a}, {96}, false, {p}), target, carrier, 0.0), x, 20,
                   13, "desc " + p.name());
  check_gradient(AttackObjective(make_spec(LossKind::Tensor, {a}, {96}), target, carrier, 0.0), x, 20, 14, "tensor");
  check_gradient(AttackObjective(make_spec(LossKind::Hist, {a}, {96}), target, carrier, 0.0), x, 20, 15, "hist");
  check_gradient(AttackObjective(make_spec(LossKind::PoolEnsemble, {a}, {96}, false, all), target, carrier, 0.0), x,
                 20, 16, "pool ensemble");
  check_gradient(AttackObjective(make_spec(LossKind::Hist, {a}, {96, 70, 50}), target, carrier, 1.0), x, 20, 17,
                 "hist multi-resolution, lambda 1");
  check_gradient(AttackObjective(make_spec(LossKind::Hist, {a}, {96, 70, 50}, true), target, carrier, 0.0), x, 20, 18,
                 "hist blurred multi-resolution");
  check_gradient(AttackObjective(make_spec(LossKind::Desc, {a, r}, {80, 60}, true), target, carrier, 0.1), x, 20, 19,
                 "desc backend ensemble");
}

TEST_CASE("objective evaluation agrees with the image-level losses") {
  const auto a = test::small_backend(BackendFamily::AlexNet);
  const Image target = procedural_scene(96, 72, 20);
  const Image carrier = procedural_flower(96, 72);
  const Image x = procedural_scene(96, 72, 21);
  const AttackObjective obj(make_spec(LossKind::Hist, {a}, {96}), target, carrier, 0.5);
  const auto e = obj.evaluate(x.pixels(), false);
  CHECK(e.performance == doctest::Approx(loss_hist(x, target, *a)).epsilon(1e-12));
  CHECK(e.distortion == doctest::Approx(distortion(x, carrier)).epsilon(1e-12));
  CHECK(e.total == doctest::Approx(e.performance + 0.5 * e.distortion).epsilon(1e-12));
}

TEST_CASE("resolution presets") {
  CHECK(ResolutionSet::preset("S0").resolutions == std::vector<int>{1024});
  CHECK(ResolutionSet::preset("S1").resolutions.size() == 8);
  CHECK(ResolutionSet::preset("S2").resolutions.size() == 15);
  CHECK(ResolutionSet::preset("S3").resolutions.size() == 15);
  const auto s1 = ResolutionSet::preset("S1", true);
  CHECK(s1.blur);
  CHECK(std::count(s1.resolutions.begin(), s1.resolutions.end(), 700) == 1);
  const auto scaled = ResolutionSet::preset("S1", false, 0.375);
  CHECK(scaled.resolutions.front() == 384);
  CHECK(std::count(scaled.resolutions.begin(), scaled.resolutions.end(), 113) == 1);  // 300 * 0.375 = 112.5
  try {
    ResolutionSet::preset("S9");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Configuration);
  }
  CHECK_THROWS_AS(ResolutionSet::preset("S3", false, 0.1), Error);
  CHECK_THROWS_AS((ResolutionSet{{}, false}.validate()), Error);
  CHECK_THROWS_AS((ResolutionSet{{64, 16}, false}.validate()), Error);
}

TEST_CASE("loss spec documents") {
  const auto a = test::small_backend(BackendFamily::AlexNet);
  auto resolver = [&](const std::string& name) -> BackendPtr {
    if (name == "A") return a;
    fail(ErrorKind::Configuration, "unknown backend " + name);
  };
  const auto j = nlohmann::json::parse(R"({"kind": "hist", "resolutions": "S2", "blur": true, "lambda": 0.1})");
  const auto doc = j.get<LossSpecDocument>();
  const auto spec = resolve(doc, resolver);
  CHECK(spec.kind == LossKind::Hist);
  CHECK(spec.resolutions.blur);
  CHECK(spec.resolutions.resolutions.size() == 15);
  CHECK(spec.histogram.bin_centers.size() == 21);
  CHECK(doc.lambda == 0.1);
  CHECK(spec.label().rfind("L_hist^{1024,", 0) == 0);
  CHECK(spec.label().back() == '^');
  // round trip
  const nlohmann::json back = doc;
  const auto again = back.get<LossSpecDocument>();
  CHECK(nlohmann::json(again) == back);
  const auto ens = resolve(nlohmann::json::parse(R"({"kind": "pool_ensemble", "poolings": ["all"], "resolutions": [96]})")
                               .get<LossSpecDocument>(),
                           resolver);
  CHECK(ens.poolings.size() == 5);
  CHECK(ens.resolutions.resolutions == std::vector<int>{96});
  const auto single = nlohmann::json::parse(R"({"pooling": "MAC"})").get<LossSpecDocument>();
  CHECK(single.poolings == std::vector<std::string>{"MAC"});
  CHECK(single.resolution_preset == "S0");
  CHECK_THROWS_AS(resolve(nlohmann::json::parse(R"({"kind": "nope"})").get<LossSpecDocument>(), resolver), Error);
  CHECK_THROWS_AS(resolve(nlohmann::json::parse(R"({"backends": ["Z"]})").get<LossSpecDocument>(), resolver), Error);
  CHECK_THROWS_AS(resolve(nlohmann::json::parse(R"({"lambda": -1})").get<LossSpecDocument>(), resolver), Error);
}
