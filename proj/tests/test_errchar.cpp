#include <catch2/catch_amalgamated.hpp>

#include "fpgap/errchar.hpp"
#include "fpgap/rng.hpp"

using namespace fpgap;

namespace {

Network conv_net(Rng& rng, Shape input = {8, 8, 1}, int ch = 3, int k = 2) {
  Network net;
  net.input = input;
  Conv2d c1;
  c1.out_ch = ch;
  c1.in_ch = input.c;
  c1.kh = c1.kw = 3;
  c1.pad = 1;
  for (int i = 0; i < ch * input.c * 9; ++i) c1.weights.push_back(float(rng.normal(0, 0.5)));
  for (int i = 0; i < ch; ++i) c1.bias.push_back(float(rng.normal(0, 0.1)));
  net.layers.emplace_back(c1);
  net.layers.emplace_back(ReLU{});
  net.layers.emplace_back(Flatten{});
  Dense d;
  d.rows = k;
  d.cols = input.h * input.w * ch;
  for (int i = 0; i < d.rows * d.cols; ++i) d.weights.push_back(float(rng.normal(0, 0.2)));
  for (int i = 0; i < k; ++i) d.bias.push_back(0.0f);
  net.layers.emplace_back(d);
  return net;
}

ImageF random_image(Rng& rng, Shape s) {
  ImageF x(s);
  for (int i = 0; i < x.size(); ++i) x[i] = float(rng.uniform(0.2, 0.8));
  return x;
}

}  // namespace

TEST_CASE("max_gradient_element") {
  SECTION("linear model returns the largest-weight element") {
    Network net;
    net.input = Shape{1, 1, 4};
    Dense d;
    d.rows = 2;
    d.cols = 4;
    d.weights = {0.1f, -0.9f, 0.4f, 0.2f, 0.0f, 0.0f, 0.0f, 0.0f};
    d.bias = {1.0f, 0.0f};  // class 0 is the argmax everywhere
    net.layers.emplace_back(d);
    ImageF x(Shape{1, 1, 4}, {0.5f, 0.5f, 0.5f, 0.5f});
    CHECK(max_gradient_element(net, x) == 1);  // |-0.9| dominates
  }
  SECTION("constant network ties to index 0") {
    Network net;
    net.input = Shape{1, 1, 3};
    Dense d;
    d.rows = 2;
    d.cols = 3;
    d.weights.assign(6, 0.0f);
    d.bias = {0.5f, 0.0f};
    net.layers.emplace_back(d);
    ImageF x(Shape{1, 1, 3}, {0.2f, 0.4f, 0.6f});
    CHECK(max_gradient_element(net, x) == 0);
  }
  SECTION("finite-difference result stable across step sizes") {
    Rng rng(3);
    Network net = conv_net(rng);
    ImageF x = random_image(rng, net.input);
    int e3 = max_gradient_element(net, x, 1e-3);
    CHECK(max_gradient_element(net, x, 1e-2) == e3);
    CHECK(max_gradient_element(net, x, 1e-4) == e3);
  }
}

TEST_CASE("local_sweep") {
  Rng rng(5);
  Network net = conv_net(rng);
  ImageF x = random_image(rng, net.input);
  int el = max_gradient_element(net, x);
  std::vector<BackendId> backends = {BackendId::REF_F64, BackendId::DIRECT_F32,
                                     BackendId::WINOGRAD_F32};
  auto records = local_sweep(net, x, el, backends);
  CHECK(records.size() == 401 * backends.size());

  // the zero-delta row is exactly zero for every backend
  int zero_rows = 0;
  for (const auto& r : records)
    if (r.delta == 0.0) {
      CHECK(r.linf_change == 0.0);
      ++zero_rows;
    }
  CHECK(zero_rows == int(backends.size()));

  // winograd fluctuates more than direct convolution (median over the sweep)
  std::vector<double> direct, wino;
  for (const auto& r : records) {
    if (r.backend == BackendId::DIRECT_F32) direct.push_back(r.linf_change);
    if (r.backend == BackendId::WINOGRAD_F32) wino.push_back(r.linf_change);
  }
  // compare fluctuation around the smooth trend: the sweep range is so small
  // that REF_F64 changes are nearly linear, so the f32 deviation from the
  // f64 record isolates rounding noise
  std::vector<double> ref;
  for (const auto& r : records)
    if (r.backend == BackendId::REF_F64) ref.push_back(r.linf_change);
  std::vector<double> dev_direct, dev_wino;
  for (size_t i = 0; i < ref.size(); ++i) {
    dev_direct.push_back(std::abs(direct[i] - ref[i]));
    dev_wino.push_back(std::abs(wino[i] - ref[i]));
  }
  CHECK(median(dev_wino) > median(dev_direct));
}

TEST_CASE("cross_backend_histogram") {
  Rng rng(7);
  Network net = conv_net(rng);
  std::vector<ImageF> images;
  for (int i = 0; i < 20; ++i) images.push_back(random_image(rng, net.input));
  long first_layer_size = 8 * 8 * 3;

  SECTION("reference vs itself lands entirely in the underflow bin") {
    auto h = cross_backend_histogram(images, net, {BackendId::IM2COL_F32});
    CHECK(h.counts[0][0] == long(images.size()) * first_layer_size);
    CHECK(h.total(0) == long(images.size()) * first_layer_size);
  }
  SECTION("REF_F64 vs IM2COL_F32 has mass above 1e-9, counts conserved") {
    auto h = cross_backend_histogram(images, net,
                                     {BackendId::REF_F64, BackendId::DIRECT_F32});
    for (size_t bi = 0; bi < h.backends.size(); ++bi)
      CHECK(h.total(bi) == long(images.size()) * first_layer_size);
    long above = 0;
    for (int k = 0; k <= h.bins; ++k)
      if (h.edge(std::min(k, h.bins - 1)) >= 1e-9 || k == h.bins)
        above += h.counts[0][size_t(k) + 1];
    above += h.counts[0][size_t(h.bins) + 1];  // overflow
    CHECK(above > 0);
  }
  SECTION("median winograd relative error exceeds direct") {
    auto wino = first_layer_rel_errors(net, images, BackendId::WINOGRAD_F32,
                                       BackendId::REF_F64);
    auto direct = first_layer_rel_errors(net, images, BackendId::DIRECT_F32,
                                         BackendId::REF_F64);
    CHECK(median(wino) > median(direct));
  }
}
