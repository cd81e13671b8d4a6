#include <doctest.h>

#include <random>

#include "support.hpp"
#include "tma/kernels.hpp"
#include "tma/reference.hpp"

using namespace tma;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

double inner(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

struct ConvCase {
  Shape input;
  int out;
  Window window;
};

const ConvCase kConvCases[] = {
    {{3, 37, 41}, 8, {11, 4, 2}},
    {{5, 13, 17}, 7, {3, 1, 1}},
    {{4, 16, 16}, 6, {3, 2, 1}},
    {{6, 9, 11}, 5, {1, 1, 0}},
    {{3, 10, 12}, 4, {5, 1, 2}},
    {{2, 8, 8}, 3, {1, 2, 0}},
};

}  // namespace

TEST_CASE("window output length") {
  CHECK(Window{11, 4, 2}.output_length(224) == 55);
  CHECK(Window{3, 2, 0}.output_length(55) == 27);
  CHECK(Window{3, 1, 1}.output_length(7) == 7);
  CHECK(Window{5, 1, 0}.output_length(4) == 0);
}

TEST_CASE("convolution: parallel matches serial reference") {
  std::uint64_t seed = 1;
  for (const auto& c : kConvCases) {
    const Tensor x = test::random_tensor(c.input, seed++, -1.0, 1.0);
    const auto w = random_vector(static_cast<std::size_t>(c.out) * c.input.channels * c.window.kernel * c.window.kernel, seed++);
    const auto b = random_vector(c.out, seed++);
    const Tensor y = kernels::conv2d_forward(x, w, b, c.out, c.window);
    CHECK(max_abs_diff(y, reference::conv2d_forward(x, w, b, c.out, c.window)) < 1e-12);
    CHECK(max_abs_diff(kernels::conv2d_forward(x, w, {}, c.out, c.window),
                       reference::conv2d_forward(x, w, {}, c.out, c.window)) < 1e-12);
    const Tensor g = test::random_tensor(y.shape(), seed++, -1.0, 1.0);
    CHECK(max_abs_diff(kernels::conv2d_backward_input(g, w, c.input, c.window),
                       reference::conv2d_backward_input(g, w, c.input, c.window)) < 1e-12);
  }
}

TEST_CASE("convolution backward is the adjoint of the linear part") {
  std::uint64_t seed = 100;
  for (const auto& c : kConvCases) {
    const Tensor x = test::random_tensor(c.input, seed++, -1.0, 1.0);
    const auto w = random_vector(static_cast<std::size_t>(c.out) * c.input.channels * c.window.kernel * c.window.kernel, seed++);
    const Tensor y = kernels::conv2d_forward(x, w, {}, c.out, c.window);
    const Tensor g = test::random_tensor(y.shape(), seed++, -1.0, 1.0);
    const Tensor back = kernels::conv2d_backward_input(g, w, c.input, c.window);
    CHECK(inner(y, g) == doctest::Approx(inner(x, back)).epsilon(1e-11));
  }
}

TEST_CASE("convolution by hand") {
  // 1 channel 3x3 input, 2x2 kernel of ones, stride 1, no pad, bias 0.5
  const Tensor x(Shape{1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const std::vector<double> w{1, 1, 1, 1};
  const std::vector<double> b{0.5};
  const Tensor y = kernels::conv2d_forward(x, w, b, 1, Window{2, 1, 0});
  CHECK(y.shape() == Shape{1, 2, 2});
  CHECK(y(0, 0, 0) == 12.5);
  CHECK(y(0, 0, 1) == 16.5);
  CHECK(y(0, 1, 0) == 24.5);
  CHECK(y(0, 1, 1) == 28.5);
  // zero padding: the corner of a padded 3x3 window sees 4 of the 9 values
  const Tensor p = kernels::conv2d_forward(x, std::vector<double>(9, 1.0), {}, 1, Window{3, 1, 1});
  CHECK(p(0, 0, 0) == 1 + 2 + 4 + 5);
  CHECK(p(0, 1, 1) == 45);
}

TEST_CASE("max pooling: parallel matches reference, gradient routes to the argmax") {
  std::uint64_t seed = 200;
  for (Window w : {Window{3, 2, 0}, Window{2, 2, 0}, Window{3, 1, 1}}) {
    const Tensor x = test::random_tensor(Shape{4, 15, 13}, seed++, -1.0, 1.0);
    const auto a = kernels::maxpool2d_forward(x, w);
    const auto r = reference::maxpool2d_forward(x, w);
    CHECK(a.output == r.output);
    CHECK(a.argmax == r.argmax);
    for (int c = 0; c < a.output.channels(); ++c)
      for (int i = 0; i < static_cast<int>(a.output.shape().plane()); ++i) {
        const double v = a.output.channel(c)[i];
        REQUIRE(v == x.channel(c)[a.argmax[c * a.output.shape().plane() + i]]);
      }
    const Tensor g = test::random_tensor(a.output.shape(), seed++, -1.0, 1.0);
    const Tensor ga = kernels::maxpool2d_backward(g, a.argmax, x.shape());
    CHECK(max_abs_diff(ga, reference::maxpool2d_backward(g, r.argmax, x.shape())) < 1e-14);
    double total_in = 0.0, total_out = 0.0;
    for (double v : ga.values()) total_in += v;
    for (double v : g.values()) total_out += v;
    CHECK(total_in == doctest::Approx(total_out).epsilon(1e-12));
  }
}

TEST_CASE("relu") {
  const Tensor x = test::random_tensor(Shape{3, 7, 9}, 300, -1.0, 1.0);
  const Tensor y = kernels::relu_forward(x);
  CHECK(y == reference::relu_forward(x));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == std::max(0.0, x.values()[i]));
  const Tensor g = test::random_tensor(x.shape(), 301, -1.0, 1.0);
  const Tensor gb = kernels::relu_backward(g, x);
  CHECK(gb == reference::relu_backward(g, x));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(gb.values()[i] == (x.values()[i] > 0 ? g.values()[i] : 0.0));
}

TEST_CASE("bilinear resample: parallel matches reference and the adjoint identity holds") {
  std::uint64_t seed = 400;
  for (auto [oh, ow] : {std::pair{10, 14}, {31, 40}, {20, 27}, {7, 5}}) {
    const Tensor x = test::random_tensor(Shape{3, 20, 27}, seed++);
    const Tensor y = kernels::resample_bilinear(x, oh, ow);
    CHECK(max_abs_diff(y, reference::resample_bilinear(x, oh, ow)) < 1e-14);
    const Tensor g = test::random_tensor(y.shape(), seed++, -1.0, 1.0);
    const Tensor back = kernels::resample_bilinear_adjoint(g, 20, 27);
    CHECK(max_abs_diff(back, reference::resample_bilinear_adjoint(g, 20, 27)) < 1e-13);
    CHECK(inner(y, g) == doctest::Approx(inner(x, back)).epsilon(1e-12));
  }
}

TEST_CASE("bilinear resample by hand: half-pixel centers") {
  // 1x2 -> 1x4: output centers at 0.25, 0.75, 1.25, 1.75 map to input
  // coordinates -0.25, 0.25, 0.75, 1.25 (edge clamped).
  const Tensor x(Shape{1, 1, 2}, {0.0, 1.0});
  const Tensor y = kernels::resample_bilinear(x, 1, 4);
  CHECK(y(0, 0, 0) == doctest::Approx(0.0));
  CHECK(y(0, 0, 1) == doctest::Approx(0.25));
  CHECK(y(0, 0, 2) == doctest::Approx(0.75));
  CHECK(y(0, 0, 3) == doctest::Approx(1.0));
  // 1x4 -> 1x2 averages neighbouring pairs
  const Tensor z = kernels::resample_bilinear(Tensor(Shape{1, 1, 4}, {0, 1, 2, 3}), 1, 2);
  CHECK(z(0, 0, 0) == doctest::Approx(0.5));
  CHECK(z(0, 0, 1) == doctest::Approx(2.5));
}

TEST_CASE("gaussian blur: parallel matches reference, self-adjoint up to borders") {
  std::uint64_t seed = 500;
  for (double sigma : {0.3, 0.9, 2.0, 4.5}) {
    const Tensor x = test::random_tensor(Shape{3, 23, 31}, seed++);
    const Tensor y = kernels::gaussian_blur(x, sigma);
    CHECK(max_abs_diff(y, reference::gaussian_blur(x, sigma)) < 1e-14);
    const Tensor g = test::random_tensor(x.shape(), seed++, -1.0, 1.0);
    const Tensor back = kernels::gaussian_blur_adjoint(g, sigma);
    CHECK(max_abs_diff(back, reference::gaussian_blur_adjoint(g, sigma)) < 1e-14);
    CHECK(inner(y, g) == doctest::Approx(inner(x, back)).epsilon(1e-12));
  }
}

TEST_CASE("soft histogram: parallel matches reference") {
  const std::vector<double> centers{0.0, 0.25, 0.5, 0.75, 1.0};
  const Tensor x = test::random_tensor(Shape{6, 9, 8}, 600, 0.0, 3.0);
  const auto h = kernels::soft_histogram(x, centers, 0.1, 3.0);
  const auto r = reference::soft_histogram(x, centers, 0.1, 3.0);
  REQUIRE(h.size() == r.size());
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == doctest::Approx(r[i]).epsilon(1e-13));
  const auto gh = random_vector(h.size(), 601);
  CHECK(max_abs_diff(kernels::soft_histogram_backward(x, centers, 0.1, 3.0, gh),
                     reference::soft_histogram_backward(x, centers, 0.1, 3.0, gh)) < 1e-12);
}

TEST_CASE("soft histogram backward is the derivative of the weighted counts") {
  const std::vector<double> centers{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const Tensor x = test::random_tensor(Shape{2, 4, 5}, 700, 0.0, 2.0);
  const auto gh = random_vector(2 * centers.size(), 701);
  const Tensor grad = kernels::soft_histogram_backward(x, centers, 0.1, 2.0, gh);
  auto f = [&](const Tensor& t) {
    const auto h = kernels::soft_histogram(t, centers, 0.1, 2.0);
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * gh[i];
    return s;
  };
  for (const auto& at : test::random_coordinates(x.shape(), 20, 702)) {
    const double numeric = test::central_difference(f, x, at, 1e-6);
    CHECK(test::relative_error(grad(at.c, at.y, at.x), numeric, 1e-6) < 1e-6);
  }
}

TEST_CASE("helpers") {
  CHECK(scaled_length(1024, 0.5) == 512);
  CHECK(scaled_length(768, 0.5) == 384);
  CHECK(scaled_length(3, 0.1) >= 1);
}
