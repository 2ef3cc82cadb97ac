#include <catch2/catch_amalgamated.hpp>

#include <future>
#include <map>

#include "fpgap/backends.hpp"
#include "fpgap/quantize.hpp"
#include "fpgap/rng.hpp"

using namespace fpgap;

namespace {

std::vector<BackendId> all_backends() {
  return {BackendId::REF_F64,      BackendId::DIRECT_F32,   BackendId::IM2COL_F32,
          BackendId::PAIRWISE_F32, BackendId::WINOGRAD_F32, BackendId::EXACT_RAT};
}

Network random_conv_net(Rng& rng, Shape input = {8, 8, 1}, int ch = 2, int classes = 3) {
  Network net;
  net.input = input;
  Conv2d c1;
  c1.out_ch = ch;
  c1.in_ch = input.c;
  c1.kh = c1.kw = 3;
  c1.pad = 1;
  for (int i = 0; i < c1.out_ch * c1.in_ch * 9; ++i)
    c1.weights.push_back(float(rng.normal(0, 0.5)));
  for (int i = 0; i < ch; ++i) c1.bias.push_back(float(rng.normal(0, 0.1)));
  net.layers.emplace_back(c1);
  net.layers.emplace_back(ReLU{});
  Conv2d c2;
  c2.out_ch = ch;
  c2.in_ch = ch;
  c2.kh = c2.kw = 3;
  c2.pad = 1;
  for (int i = 0; i < c2.out_ch * c2.in_ch * 9; ++i)
    c2.weights.push_back(float(rng.normal(0, 0.4)));
  for (int i = 0; i < ch; ++i) c2.bias.push_back(float(rng.normal(0, 0.1)));
  net.layers.emplace_back(c2);
  net.layers.emplace_back(ReLU{});
  net.layers.emplace_back(Flatten{});
  Dense d;
  d.rows = classes;
  d.cols = input.h * input.w * ch;
  for (int i = 0; i < d.rows * d.cols; ++i) d.weights.push_back(float(rng.normal(0, 0.2)));
  for (int i = 0; i < classes; ++i) d.bias.push_back(float(rng.normal(0, 0.1)));
  net.layers.emplace_back(d);
  return net;
}

ImageF random_image(Rng& rng, Shape s) {
  ImageF x(s);
  for (int i = 0; i < x.size(); ++i) x[i] = rng.uniform01f();
  return x;
}

}  // namespace

TEST_CASE("1x1 identity conv is exact for every backend") {
  Network net;
  net.input = Shape{2, 2, 1};
  Conv2d cv;
  cv.out_ch = 1;
  cv.in_ch = 1;
  cv.kh = cv.kw = 1;
  cv.pad = 0;
  cv.weights = {1.0f};
  cv.bias = {0.0f};
  net.layers.emplace_back(cv);
  net.layers.emplace_back(Flatten{});

  ImageF x(Shape{2, 2, 1}, {0.1f, 0.7f, 0.32f, 0.9f});
  for (BackendId b : f32_backends()) {
    Logits<float> y = infer_f32(b, net, x);
    for (int i = 0; i < 4; ++i) CHECK(y.scores[i] == x[i]);
  }
  Logits<double> yd = infer_f64(net, x);
  for (int i = 0; i < 4; ++i) CHECK(yd.scores[i] == widen(x[i]));
  Logits<Rational> yq = infer_exact(net, x);
  for (int i = 0; i < 4; ++i) CHECK(yq.scores[i] == rational_of(x[i]));
}

TEST_CASE("EXACT_RAT equals a rational recomputation of direct convolution") {
  Rng rng(31);
  Network net = random_conv_net(rng, Shape{6, 6, 1}, 2, 2);
  ImageF x = random_image(rng, net.input);
  Logits<Rational> got = infer_exact(net, x);
  Tensor<Rational> act = to_rational(x);
  for (const Layer& l : net.layers)
    act = kernels::apply_layer<Rational>(act, l, kernels::ConvAlgo::Direct, false);
  for (int i = 0; i < 2; ++i) CHECK(got.scores[i] == act[i]);
}

TEST_CASE("winograd_conv zero filter gives zero tile") {
  std::array<float, 9> zero{};
  Rng rng(17);
  std::array<float, 36> tile{};
  for (auto& v : tile) v = float(rng.uniform(-3, 3));
  auto y = winograd_conv<float>(tile, zero);
  for (float v : y) CHECK(v == 0.0f);
}

TEST_CASE("winograd_conv delta filter: exact in rational, small error in f32") {
  Rng rng(18);
  std::array<Rational, 9> deltaq{};
  deltaq[4] = Rational(1);
  std::array<float, 9> deltaf{};
  deltaf[4] = 1.0f;
  for (int it = 0; it < 50; ++it) {
    std::array<float, 36> df{};
    std::array<Rational, 36> dq{};
    for (int i = 0; i < 36; ++i) {
      df[i] = float(int(rng.uniform_int(17)) - 8);
      dq[i] = rational_of(df[i]);
    }
    auto yq = winograd_conv<Rational>(dq, deltaq);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) CHECK(yq[r * 4 + c] == dq[(r + 1) * 6 + (c + 1)]);
    // The F(4,3) transforms carry 1/6-family entries, so the f32 path rounds
    // even on integer data; the error stays at transform-rounding scale.
    auto yf = winograd_conv<float>(df, deltaf);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        CHECK(std::abs(widen(yf[r * 4 + c]) - widen(df[(r + 1) * 6 + (c + 1)])) < 1e-4);
  }
}

TEST_CASE("winograd_conv equals direct convolution exactly in rational arithmetic") {
  Rng rng(19);
  for (int it = 0; it < 30; ++it) {
    std::array<Rational, 36> d{};
    std::array<Rational, 9> g{};
    for (auto& v : d) v = rational_of(float(rng.uniform(-2, 2)));
    for (auto& v : g) v = rational_of(float(rng.uniform(-2, 2)));
    auto y = winograd_conv<Rational>(d, g);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        Rational acc(0);
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) acc += g[ky * 3 + kx] * d[(r + ky) * 6 + (c + kx)];
        CHECK(acc == y[r * 4 + c]);
      }
  }
}

TEST_CASE("winograd_conv rejects unsupported filter sizes") {
  std::array<float, 36> tile{};
  std::vector<float> filter(25, 0.0f);
  CHECK_THROWS_AS(winograd_conv_checked<float>(tile, filter, 5, 5), std::invalid_argument);
}

TEST_CASE("winograd layer matches direct layer in rational arithmetic") {
  // full-layer check including padding and edge tiles
  Rng rng(23);
  for (int pad : {0, 1}) {
    Conv2d cv;
    cv.out_ch = 2;
    cv.in_ch = 2;
    cv.kh = cv.kw = 3;
    cv.pad = pad;
    for (int i = 0; i < 36; ++i) cv.weights.push_back(float(rng.normal(0, 1)));
    cv.bias = {0.25f, -0.5f};
    Tensor<Rational> in(Shape{7, 6, 2});
    for (int i = 0; i < in.size(); ++i) in[i] = rational_of(float(rng.uniform(-1, 1)));
    Tensor<Rational> a = kernels::conv_winograd<Rational>(in, cv);
    Tensor<Rational> b = kernels::conv_direct<Rational>(in, cv);
    REQUIRE(a.shape() == b.shape());
    for (int i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("tile geometry") {
  CHECK(tile_geometry(BackendId::DIRECT_F32).offset == 0);
  CHECK(tile_geometry(BackendId::DIRECT_F32).stride == 4);
  CHECK(tile_geometry(BackendId::IM2COL_F32).offset == 0);
  CHECK(tile_geometry(BackendId::PAIRWISE_F32).stride == 4);
  // the 13x13 -> 9x9 tiling used by 5x5-filter Winograd kernels
  TileGeometry paper = winograd_tile_geometry(13, 9);
  CHECK(paper.offset == 4);
  CHECK(paper.stride == 9);
  // our F(4x4,3x3): 6x6 -> 4x4
  TileGeometry ours = tile_geometry(BackendId::WINOGRAD_F32);
  CHECK(ours.offset == 2);
  CHECK(ours.stride == 4);
}

TEST_CASE("backend divergence: every f32 pair differs somewhere") {
  Rng rng(41);
  Network net = random_conv_net(rng);
  auto backends = f32_backends();
  std::map<std::pair<int, int>, bool> diff;
  ImageF x0;
  for (int it = 0; it < 100; ++it) {
    ImageF x = random_image(rng, net.input);
    std::vector<Logits<float>> ys;
    for (BackendId b : backends) ys.push_back(infer_f32(b, net, x));
    for (size_t i = 0; i < backends.size(); ++i)
      for (size_t j = i + 1; j < backends.size(); ++j)
        if (ys[i].scores != ys[j].scores) diff[{int(i), int(j)}] = true;
  }
  for (size_t i = 0; i < backends.size(); ++i)
    for (size_t j = i + 1; j < backends.size(); ++j) {
      INFO(backend_name(backends[i]) << " vs " << backend_name(backends[j]));
      CHECK(diff[{int(i), int(j)}]);
    }
}

TEST_CASE("winograd vs direct divergence is nonzero and recorded") {
  Rng rng(43);
  Network net = random_conv_net(rng);
  double max_delta = 0.0;
  for (int it = 0; it < 100; ++it) {
    ImageF x = random_image(rng, net.input);
    Logits<float> a = infer_f32(BackendId::WINOGRAD_F32, net, x);
    Logits<float> b = infer_f32(BackendId::DIRECT_F32, net, x);
    for (size_t i = 0; i < a.scores.size(); ++i)
      max_delta = std::max(max_delta, std::abs(widen(a.scores[i]) - widen(b.scores[i])));
  }
  CHECK(max_delta > 0.0);
  INFO("max |delta logit| = " << max_delta);
  CHECK(max_delta < 1e-2);  // still single-precision-rounding scale
}

TEST_CASE("determinism across runs and thread placements") {
  Rng rng(47);
  Network net = random_conv_net(rng);
  ImageF x = random_image(rng, net.input);
  for (BackendId b : f32_backends()) {
    Logits<float> y1 = infer_f32(b, net, x);
    Logits<float> y2 = infer_f32(b, net, x);
    auto fut = std::async(std::launch::async, [&] { return infer_f32(b, net, x); });
    Logits<float> y3 = fut.get();
    CHECK(y1.scores == y2.scores);
    CHECK(y1.scores == y3.scores);
  }
}

TEST_CASE("first_layer_output") {
  SECTION("identity first layer returns x unchanged") {
    Network net;
    net.input = Shape{3, 3, 1};
    Conv2d cv;
    cv.out_ch = 1;
    cv.in_ch = 1;
    cv.kh = cv.kw = 1;
    cv.pad = 0;
    cv.weights = {1.0f};
    cv.bias = {0.0f};
    net.layers.emplace_back(cv);
    net.layers.emplace_back(Flatten{});
    Rng rng(51);
    ImageF x = random_image(rng, net.input);
    Tensor<float> out = first_layer_output<float>(BackendId::DIRECT_F32, net, x);
    CHECK(out.data() == x.data());
  }
  SECTION("REF_F64 vs IM2COL_F32 difference is nonzero on generic inputs") {
    Rng rng(53);
    Network net = random_conv_net(rng);
    bool any = false;
    for (int it = 0; it < 20; ++it) {
      ImageF x = random_image(rng, net.input);
      Tensor<double> a = first_layer_as_double(BackendId::REF_F64, net, x);
      Tensor<double> b = first_layer_as_double(BackendId::IM2COL_F32, net, x);
      for (int i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) any = true;
    }
    CHECK(any);
  }
  SECTION("EXACT_RAT within 2^-40 relative of REF_F64") {
    Rng rng(57);
    Network net = random_conv_net(rng);
    ImageF x = random_image(rng, net.input);
    Tensor<Rational> q = first_layer_output<Rational>(BackendId::EXACT_RAT, net, x);
    Tensor<double> d = first_layer_as_double(BackendId::REF_F64, net, x);
    for (int i = 0; i < q.size(); ++i) {
      double exact = to_double(q[i]);
      double denom = std::max(std::abs(exact), 1e-6);
      CHECK(std::abs(d[i] - exact) / denom < 0x1p-40);
    }
  }
  SECTION("errors") {
    Network net;
    net.input = Shape{2, 2, 1};
    net.layers.emplace_back(Flatten{});
    Dense d;
    d.rows = 2;
    d.cols = 4;
    d.weights = {1, 0, 0, 0, 0, 0, 0, 1};
    d.bias = {0, 0};
    net.layers.emplace_back(d);
    ImageF x(Shape{2, 2, 1});
    CHECK_THROWS_AS((first_layer_output<float>(BackendId::DIRECT_F32, net, x)),
                    std::invalid_argument);
  }
}

TEST_CASE("infer shape and range checks") {
  Rng rng(61);
  Network net = random_conv_net(rng);
  ImageF bad_shape(Shape{4, 4, 1});
  CHECK_THROWS_AS(infer_f32(BackendId::DIRECT_F32, net, bad_shape), std::invalid_argument);
  ImageF bad_range(net.input);
  bad_range[0] = 1.5f;
  CHECK_THROWS_AS(infer_f32(BackendId::DIRECT_F32, net, bad_range), std::invalid_argument);
  CHECK_THROWS_AS(infer_f32(BackendId::REF_F64, net, random_image(rng, net.input)),
                  std::invalid_argument);
}

namespace {

// Integer-weight demo net for the quantization checks: activations stay on
// the s0*s1 lattice at every layer, so post-layer rounding recovers the
// exact value for every backend whose error is below half a lattice step.
Network integer_weight_net() {
  Network net;
  net.input = Shape{6, 6, 1};
  Conv2d cv;
  cv.out_ch = 2;
  cv.in_ch = 1;
  cv.kh = cv.kw = 3;
  cv.pad = 1;
  int wpat[18] = {1, 0, -1, 0, 1, 0, -1, 0, 1, 0, 1, 0, 1, -1, 1, 0, 1, 0};
  for (int i = 0; i < 18; ++i) cv.weights.push_back(float(wpat[i]));
  cv.bias = {0x1p-12f, -0x1p-12f};
  net.layers.emplace_back(cv);
  net.layers.emplace_back(ReLU{});
  net.layers.emplace_back(Flatten{});
  Dense d;
  d.rows = 2;
  d.cols = 72;
  Rng wr(99);
  for (int i = 0; i < 144; ++i) d.weights.push_back(float(int(wr.uniform_int(3)) - 1));
  d.bias = {0.0f, 0.0f};
  net.layers.emplace_back(d);
  return net;
}

}  // namespace

TEST_CASE("quantization scheme invariant") {
  CHECK_THROWS_AS(QuantizationScheme(0x1p-6, 0x1p-6, 0x1p-13), std::invalid_argument);
  CHECK_THROWS_AS(QuantizationScheme(0.0, 0.1, 0.001), std::invalid_argument);
  QuantizationScheme ok(0x1p-6, 0x1p-6, 0x1p-16);
  CHECK(ok.output_step() == 0x1p-12);
}

TEST_CASE("quantized_infer: integer-weight net aligns all backends") {
  Network net = integer_weight_net();
  // E = 2^-16 dominates the measured per-layer error of every backend here
  Rng mr(5);
  double measured = measure_max_layer_error(net, 100, mr);
  CHECK(measured < 0x1p-16);
  QuantizationScheme q(0x1p-6, 0x1p-6, 0x1p-16);
  Rng rng(7);
  for (int it = 0; it < 200; ++it) {
    ImageF x(net.input);
    for (int i = 0; i < x.size(); ++i) x[i] = float(int(rng.uniform_int(65))) * 0x1p-6f;
    Logits<double> ref = quantized_infer(net, x, q, BackendId::REF_F64);
    for (BackendId b : all_backends()) {
      Logits<double> y = quantized_infer(net, x, q, b);
      CHECK(y.scores == ref.scores);
    }
  }
}

TEST_CASE("quantized_infer: zero network, scheme violations") {
  Network net;
  net.input = Shape{2, 2, 1};
  net.layers.emplace_back(Flatten{});
  Dense d;
  d.rows = 2;
  d.cols = 4;
  d.weights.assign(8, 0.0f);
  d.bias = {0.0f, 0.0f};
  net.layers.emplace_back(d);
  QuantizationScheme q(0x1p-4, 1.0, 0x1p-8);
  ImageF x(net.input, {0.25f, 0.5f, 0.0f, 1.0f});
  for (BackendId b : all_backends()) {
    Logits<double> y = quantized_infer(net, x, q, b);
    CHECK(y.scores == std::vector<double>{0.0, 0.0});
  }
  // weight not a multiple of s1
  std::get<Dense>(net.layers[1]).weights[0] = 0.3f;
  CHECK_THROWS_AS(quantized_infer(net, x, q, BackendId::DIRECT_F32), std::invalid_argument);
  std::get<Dense>(net.layers[1]).weights[0] = 0.0f;
  // input not on the s0 grid
  ImageF xb = x;
  xb[0] = 0.3f;
  CHECK_THROWS_AS(quantized_infer(net, xb, q, BackendId::DIRECT_F32), std::invalid_argument);
}
