#include <doctest.h>

#include <fstream>

#include "support.hpp"
#include "tma/error.hpp"
#include "tma/image_io.hpp"
#include "tma/persistence.hpp"
#include "tma/synthetic.hpp"
#include "tma/whitening.hpp"

using namespace tma;

TEST_CASE("16-bit PNG round trip") {
  test::TempDir dir;
  const Image img = test::random_image(37, 21, 1);
  write_png16(img, dir / "a.png", {{"config_hash", "abc"}});
  const Image back = read_image(dir / "a.png");
  CHECK(back.id() == "a");
  REQUIRE(back.pixels().shape() == img.pixels().shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < img.pixels().size(); ++i)
    worst = std::max(worst, std::abs(back.pixels().values()[i] - img.pixels().values()[i]));
  CHECK(worst <= 0.5 / 65535.0 + 1e-12);
  CHECK(back.pixels() == quantize(img, 16).pixels());
  // re-encoding a quantized image is lossless
  write_png16(back, dir / "b.png");
  CHECK(read_image(dir / "b.png").pixels() == back.pixels());
  write_png8(img, dir / "c.png");
  CHECK(read_image(dir / "c.png").pixels() == quantize(img, 8).pixels());
  std::ifstream raw(dir / "a.png", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(raw)), {});
  CHECK(bytes.find("config_hash") != std::string::npos);
}

TEST_CASE("16-bit quantization barely moves the white-box descriptor") {
  test::TempDir dir;
  const auto b = test::small_backend(BackendFamily::AlexNet);
  const RetrievalModel m{b, std::nullopt, PoolingKind::gem(), std::nullopt};
  const Image target = procedural_scene(96, 96, 2);
  // stand-in for an adversarial: a noisy image, off the quantization grid
  const Image adv = Image::clamped(gaussian_blur(test::random_image(96, 96, 3), 0.7).pixels());
  write_png16(adv, dir / "adv.png");
  const double before = describe(m, adv).dot(describe(m, target));
  const double after = describe(m, read_image(dir / "adv.png")).dot(describe(m, target));
  CHECK(std::abs(before - after) < 1e-3);
}

TEST_CASE("image reading errors") {
  test::TempDir dir;
  try {
    read_image(dir / "missing.png");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
  atomic_write(dir / "junk.png", "not a png");
  CHECK_THROWS_AS(read_image(dir / "junk.png"), Error);
  CHECK_THROWS_AS(write_png16(Image::constant(4, 4, 0.5), dir / "no" / "such" / "dir" / "x.png"), Error);
}

TEST_CASE("atomic writes and JSON") {
  test::TempDir dir;
  atomic_write(dir / "t.txt", "one");
  atomic_write(dir / "t.txt", "two");
  CHECK(read_text(dir / "t.txt") == "two");
  CHECK_FALSE(std::filesystem::exists(dir / "t.txt.tmp"));
  atomic_write(dir / "j.json", R"({"a": 1})");
  CHECK(read_json(dir / "j.json")["a"] == 1);
  atomic_write(dir / "bad.json", "{");
  CHECK_THROWS_AS(read_json(dir / "bad.json"), Error);
  const nlohmann::json a{{"x", 1}, {"y", "z"}};
  CHECK(config_hash(a) == config_hash(nlohmann::json::parse(a.dump())));
  CHECK(config_hash(a).size() == 16);
  CHECK(config_hash(a) != config_hash(nlohmann::json{{"x", 2}, {"y", "z"}}));
}

TEST_CASE("descriptor files") {
  test::TempDir dir;
  DescriptorSet s;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> v(12);
    for (double& x : v) x = g(rng);
    s.ids.push_back("id" + std::to_string(i));
    s.descriptors.push_back(Descriptor::normalized(std::move(v)));
  }
  s.metadata = {{"pooling", "GeM"}};
  save_descriptors(dir / "d.f32", s);
  const DescriptorSet back = load_descriptors(dir / "d.f32");
  CHECK(back.ids == s.ids);
  CHECK(back.metadata["pooling"] == "GeM");
  REQUIRE(back.descriptors.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(back.descriptors[i].dot(s.descriptors[i]) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::filesystem::file_size(dir / "d.f32") == 5 * 12 * sizeof(float));
  CHECK_THROWS_AS(load_descriptors(dir / "none.f32"), Error);
}

TEST_CASE("whitening and trace serialization") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<Descriptor> set;
  for (int i = 0; i < 30; ++i) {
    std::vector<double> v(6);
    for (double& x : v) x = g(rng);
    set.push_back(Descriptor::normalized(std::move(v)));
  }
  const WhiteningTransform t = learn_whitening(set);
  const WhiteningTransform back = whitening_from_json(whitening_to_json(t));
  CHECK(back.mean == t.mean);
  CHECK(back.projection == t.projection);
  CHECK(whiten(set[3], back).dot(whiten(set[3], t)) == doctest::Approx(1.0).epsilon(1e-15));

  AttackTrace trace;
  trace.records.push_back({0, 0, 0.01, 0.0, 0.5, 0.5, 0.4, 1.0});
  trace.records.push_back({1, 0, 0.01, 1.0 / 3.0, 0.25, 0.3, 0.6, 0.9});
  trace.records.push_back({2, 1, 0.002, 1e-7, 1e-300, 0.125, 0.99, 0.1});
  CHECK(parse_trace_csv(trace_csv(trace)) == trace.records);
  CHECK(trace_csv(trace) == trace_csv(AttackTrace{trace.adam, parse_trace_csv(trace_csv(trace))}));
  CHECK(trace_csv(trace).rfind("iteration,distortion,perf_loss,sim_target,sim_carrier", 0) == 0);
}
