#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "fpgap/model_io.hpp"
#include "fpgap/network.hpp"
#include "fpgap/precision.hpp"
#include "fpgap/rng.hpp"
#include "fpgap/tensor.hpp"

using namespace fpgap;

// Independent re-implementation of the CW margin used as a scalar oracle.
static double cw_oracle(const std::vector<double>& scores, int t) {
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < int(scores.size()); ++i)
    if (i != t && scores[i] > best) best = scores[i];
  return scores[t] - best;
}

TEST_CASE("cw_loss basic values") {
  Logits<double> y{{3.0, 1.0, 2.0}};
  CHECK(cw_loss(y, 0) == 1.0);
  Logits<double> tie{{0.5, 0.5}};
  CHECK(cw_loss(tie, 1) == 0.0);
  CHECK_THROWS_AS(cw_loss(y, 3), std::invalid_argument);
  CHECK_THROWS_AS(cw_loss(y, -1), std::invalid_argument);
  Logits<double> one{{1.0}};
  CHECK_THROWS_AS(cw_loss(one, 0), std::invalid_argument);
}

TEST_CASE("cw_loss matches independent oracle on random logits") {
  Rng rng(7);
  for (int it = 0; it < 200; ++it) {
    int k = 2 + int(rng.uniform_int(5));
    Logits<double> y;
    for (int i = 0; i < k; ++i) y.scores.push_back(rng.uniform(-3.0, 3.0));
    int t = int(rng.uniform_int(std::uint32_t(k)));
    CHECK(cw_loss(y, t) == cw_oracle(y.scores, t));
  }
}

TEST_CASE("cw_loss sign characterizes strict argmax") {
  Rng rng(11);
  for (int it = 0; it < 200; ++it) {
    int k = 2 + int(rng.uniform_int(4));
    Logits<double> y;
    for (int i = 0; i < k; ++i) y.scores.push_back(rng.uniform(-1.0, 1.0));
    int t = int(rng.uniform_int(std::uint32_t(k)));
    bool strict_argmax = true;
    for (int i = 0; i < k; ++i)
      if (i != t && y.scores[i] >= y.scores[t]) strict_argmax = false;
    CHECK((cw_loss(y, t) > 0) == strict_argmax);
  }
}

TEST_CASE("linf_distance") {
  Shape s{2, 2, 1};
  ImageF a(s, {0.1f, 0.2f, 0.3f, 0.4f});
  CHECK(linf_distance(a, a) == 0.0f);
  ImageF b = a;
  b[2] = 0.3f + 0.25f;
  CHECK(linf_distance(a, b) == 0.25f);
  ImageF c(Shape{1, 4, 1}, a.data());
  CHECK_THROWS_AS(linf_distance(a, c), std::invalid_argument);
}

TEST_CASE("linf_distance: single vs widened computation") {
  // Exactly representable differences agree with the widened computation...
  Shape s{1, 2, 1};
  ImageF a(s, {0.5f, 0.25f});
  ImageF b(s, {0.125f, 1.0f});
  float d32 = linf_distance(a, b);
  double d64 = linf_distance(widen_to_double(a), widen_to_double(b));
  CHECK(widen(d32) == d64);

  // ...but a subtraction that straddles a single-precision rounding boundary
  // does not: the widened difference is exact, the single one rounds.
  ImageF p(Shape{1, 1, 1}, {1.0f + 0x1p-23f});
  ImageF q(Shape{1, 1, 1}, {0x1p-25f});
  float e32 = linf_distance(p, q);
  double e64 = linf_distance(widen_to_double(p), widen_to_double(q));
  CHECK(widen(e32) != e64);

  // Elementwise oracle: each single diff equals the single rounding of the
  // exact (widened) diff; the max can therefore only differ through rounding.
  Rng rng(3);
  for (int it = 0; it < 100; ++it) {
    ImageF x(Shape{1, 8, 1}), y(Shape{1, 8, 1});
    for (int i = 0; i < 8; ++i) {
      x[i] = 0.1f * rng.uniform01f();
      y[i] = 0.1f * rng.uniform01f();
    }
    for (int i = 0; i < 8; ++i) {
      float single_diff = std::fabs(x[i] - y[i]);
      double exact_diff = std::fabs(widen(x[i]) - widen(y[i]));
      CHECK(single_diff == to_single(exact_diff));
    }
  }
}

TEST_CASE("widen_to_double is value-preserving") {
  ImageF z(Shape{2, 2, 1});
  ImageD zd = widen_to_double(z);
  for (int i = 0; i < 4; ++i) CHECK(zd[i] == 0.0);

  ImageF h(Shape{1, 1, 1}, {0.5f});
  CHECK(widen_to_double(h)[0] == 0.5);

  // widen(single(0.1)) is the single-precision value, not double(0.1)
  ImageF t(Shape{1, 1, 1}, {0.1f});
  CHECK(widen_to_double(t)[0] == double(0.1f));
  CHECK(widen_to_double(t)[0] != 0.1);

  Rng rng(5);
  for (int it = 0; it < 1000; ++it) {
    float v = float(rng.uniform(-10, 10));
    CHECK(widen(v) == v);  // exact elementwise value comparison
  }
}

TEST_CASE("next_after semantics") {
  CHECK(next_after(1.0f, 2.0f) == 1.0f + 0x1p-23f);
  CHECK(next_after(0.0f, 1.0f) == 0x1p-149f);
  float x = 0.375f;
  CHECK(next_after(x, x) == x);
  // exact inverse step for finite normal values
  Rng rng(13);
  for (int it = 0; it < 1000; ++it) {
    float v = float(rng.uniform(-100.0, 100.0));
    if (v == 0.0f || !std::isnormal(v)) continue;
    float up = next_after(v, std::numeric_limits<float>::infinity());
    CHECK(next_after(up, -std::numeric_limits<float>::infinity()) == v);
  }
  double d = 1.0;
  CHECK(next_after(d, 2.0) == 1.0 + 0x1p-52);
}

TEST_CASE("round_to_multiple ties to even") {
  CHECK(round_to_multiple(1.5 * 0.25, 0.25) == 2 * 0.25);
  CHECK(round_to_multiple(2.5 * 0.25, 0.25) == 2 * 0.25);
  CHECK(round_to_multiple(-0.1f, 0x1p-2f) == 0.0f);
  CHECK(!std::signbit(round_to_multiple(-0.1f, 0x1p-2f)));

  Rational v(3, 8);
  Rational step(1, 4);
  CHECK(round_to_multiple(v, step) == Rational(1, 2));  // 1.5 steps -> even 2
  CHECK(round_to_multiple(Rational(5, 8), step) == Rational(1, 2));
  CHECK(round_to_multiple(Rational(-3, 8), step) == Rational(-1, 2));
}

TEST_CASE("rational conversions are exact") {
  Rational q = rational_of(0.1f);
  CHECK(to_double(q) == double(0.1f));
  CHECK(q != Rational(1, 10));
  CHECK(rational_of(0.5) == Rational(1, 2));
  CHECK(is_multiple_of(0.75, 0.25));
  CHECK(!is_multiple_of(0.1, 0.25));
}

static Network make_test_net(Rng& rng) {
  Network net;
  net.input = Shape{4, 4, 1};
  Conv2d cv;
  cv.out_ch = 2;
  cv.in_ch = 1;
  cv.kh = cv.kw = 3;
  cv.pad = 1;
  for (int i = 0; i < 18; ++i) cv.weights.push_back(float(rng.normal(0, 0.5)));
  cv.bias = {0.1f, -0.2f};
  net.layers.emplace_back(cv);
  net.layers.emplace_back(ReLU{});
  net.layers.emplace_back(Flatten{});
  Dense d;
  d.rows = 3;
  d.cols = 32;
  for (int i = 0; i < 96; ++i) d.weights.push_back(float(rng.normal(0, 0.5)));
  d.bias = {0.0f, 0.5f, -0.5f};
  net.layers.emplace_back(d);
  return net;
}

TEST_CASE("model save/load round-trip is bit-exact") {
  Rng rng(21);
  Network net = make_test_net(rng);
  auto dir = std::filesystem::temp_directory_path() / "fpgap_io_test";
  std::filesystem::create_directories(dir);
  auto path = dir / "net.fpgap";
  save_model(net, path);
  Network back = load_model(path);
  REQUIRE(back.layers.size() == net.layers.size());
  const auto& cv0 = std::get<Conv2d>(net.layers[0]);
  const auto& cv1 = std::get<Conv2d>(back.layers[0]);
  for (size_t i = 0; i < cv0.weights.size(); ++i)
    CHECK(std::bit_cast<std::uint32_t>(cv0.weights[i]) ==
          std::bit_cast<std::uint32_t>(cv1.weights[i]));
  const auto& d0 = std::get<Dense>(net.layers[3]);
  const auto& d1 = std::get<Dense>(back.layers[3]);
  CHECK(d0.weights == d1.weights);
  CHECK(d0.bias == d1.bias);
  std::filesystem::remove_all(dir);
}

TEST_CASE("model load rejects malformed files") {
  Rng rng(22);
  Network net = make_test_net(rng);
  auto dir = std::filesystem::temp_directory_path() / "fpgap_io_err";
  std::filesystem::create_directories(dir);
  auto path = dir / "net.fpgap";

  SECTION("truncated weight blob") {
    save_model(net, path);
    auto blob = path;
    blob += ".bin";
    std::filesystem::resize_file(blob, std::filesystem::file_size(blob) - 8);
    CHECK_THROWS_AS(load_model(path), IoError);
  }
  SECTION("NaN weight") {
    std::get<Conv2d>(net.layers[0]).weights[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(save_model(net, path), std::invalid_argument);
    // bypass save-side validation by patching the blob directly
    std::get<Conv2d>(net.layers[0]).weights[0] = 0.0f;
    save_model(net, path);
    auto blob = path;
    blob += ".bin";
    std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
    std::uint32_t nan_bits = 0x7fc00000u;
    f.write(reinterpret_cast<const char*>(&nan_bits), 4);
    f.close();
    CHECK_THROWS_AS(load_model(path), IoError);
  }
  SECTION("bad magic") {
    std::ofstream f(path);
    f << "NOT-A-MODEL\n{}\n";
    f.close();
    CHECK_THROWS_AS(load_model(path), IoError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("rng determinism and derived streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u32() == b.next_u32());
  CHECK(Rng::derive(42, 0) != Rng::derive(42, 1));
  Rng c(Rng::derive(42, 3)), d(Rng::derive(42, 3));
  CHECK(c.uniform01f() == d.uniform01f());
  Rng e(42);
  float f = e.uniform01f();
  CHECK((f >= 0.0f && f < 1.0f));
}

TEST_CASE("tensor shape checks") {
  CHECK_THROWS_AS(ImageF(Shape{2, 2, 1}, {1.0f}), std::invalid_argument);
  ImageF x(Shape{2, 3, 2});
  x(1, 2, 1) = 5.0f;
  CHECK(x[size_t(1) * 3 * 2 + 2 * 2 + 1] == 5.0f);
  CHECK(in_unit_range(ImageF(Shape{1, 1, 1}, {1.0f})));
  CHECK(!in_unit_range(ImageF(Shape{1, 1, 1}, {1.0f + 0x1p-23f})));
  CHECK_THROWS_AS(PerturbationSet(ImageF(Shape{1, 1, 1}, {2.0f}), 0.1), std::invalid_argument);
  CHECK_THROWS_AS(PerturbationSet(ImageF(Shape{1, 1, 1}, {0.5f}), -0.1), std::invalid_argument);
}
