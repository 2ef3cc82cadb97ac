#pragma once

#include "fpgap/backends.hpp"
#include "fpgap/network.hpp"

namespace fpgap {

/// Per-neuron lower/upper bounds on every layer output under a perturbation
/// region, by interval propagation. Rational mode is exact; double mode pads
/// each linear layer outward so the bounds stay sound despite rounding.
template <class T>
struct BoundsTable {
  std::vector<std::pair<T, T>> input;               // input box
  std::vector<std::vector<std::pair<T, T>>> layer;  // bounds on each layer's output
};

namespace bounds_detail {

inline void pad_outward(std::pair<double, double>& b, double scale) {
  double pad = scale * 0x1p-42 + 0x1p-100;
  b.first -= pad;
  b.second += pad;
}
inline void pad_outward(std::pair<Rational, Rational>&, const Rational&) {}

template <class T>
std::vector<std::pair<T, T>> linear_interval(const std::vector<std::pair<T, T>>& in,
                                             const Network& net, const Layer& layer,
                                             const Shape& ishape) {
  Shape oshape = Network::layer_output_shape(layer, ishape);
  std::vector<std::pair<T, T>> out(size_t(oshape.size()));
  auto accumulate = [](std::pair<T, T>& acc, const T& w, const std::pair<T, T>& x, T& scale) {
    if (w == T(0)) return;
    T a = w * x.first;
    T b = w * x.second;
    if (w > T(0)) {
      acc.first = acc.first + a;
      acc.second = acc.second + b;
    } else {
      acc.first = acc.first + b;
      acc.second = acc.second + a;
    }
    scale = scale + num::abs<T>(a) + num::abs<T>(b);
  };
  if (const auto* cv = std::get_if<Conv2d>(&layer)) {
    const std::vector<T> w = kernels::weights_as<T>(cv->weights);
    const std::vector<T> b = kernels::weights_as<T>(cv->bias);
    for (int oy = 0; oy < oshape.h; ++oy)
      for (int ox = 0; ox < oshape.w; ++ox)
        for (int oc = 0; oc < oshape.c; ++oc) {
          std::pair<T, T> acc{b[oc], b[oc]};
          T scale = num::abs<T>(b[oc]);
          for (int ic = 0; ic < cv->in_ch; ++ic)
            for (int ky = 0; ky < cv->kh; ++ky)
              for (int kx = 0; kx < cv->kw; ++kx) {
                int iy = oy + ky - cv->pad;
                int ix = ox + kx - cv->pad;
                if (iy < 0 || iy >= ishape.h || ix < 0 || ix >= ishape.w) continue;
                size_t ii = (size_t(iy) * ishape.w + ix) * ishape.c + ic;
                accumulate(acc, w[((size_t(oc) * cv->in_ch + ic) * cv->kh + ky) * cv->kw + kx],
                           in[ii], scale);
              }
          pad_outward(acc, scale);
          out[(size_t(oy) * oshape.w + ox) * oshape.c + oc] = acc;
        }
    return out;
  }
  const auto* d = std::get_if<Dense>(&layer);
  const std::vector<T> w = kernels::weights_as<T>(d->weights);
  const std::vector<T> b = kernels::weights_as<T>(d->bias);
  for (int r = 0; r < d->rows; ++r) {
    std::pair<T, T> acc{b[r], b[r]};
    T scale = num::abs<T>(b[r]);
    for (int j = 0; j < d->cols; ++j)
      accumulate(acc, w[size_t(r) * d->cols + j], in[j], scale);
    pad_outward(acc, scale);
    out[r] = acc;
  }
  return out;
}

}  // namespace bounds_detail

/// Input box of the region in T arithmetic, rounded outward in double mode
/// so that every real point of Adv(x0) stays inside.
template <class T>
std::vector<std::pair<T, T>> region_box(const PerturbationSet& region) {
  std::vector<std::pair<T, T>> box(size_t(region.x0.size()));
  for (int i = 0; i < region.x0.size(); ++i) {
    if constexpr (is_rational_v<T>) {
      Rational c = rational_of(region.x0[i]);
      Rational e = rational_of(region.eps);
      box[i] = {num::max<Rational>(c - e, Rational(0)), num::min<Rational>(c + e, Rational(1))};
    } else {
      double c = widen(region.x0[i]);
      double lo = next_after(c - region.eps, -1.0e30);
      double hi = next_after(c + region.eps, 1.0e30);
      box[i] = {std::max(lo, 0.0), std::min(hi, 1.0)};
    }
  }
  return box;
}

template <class T>
BoundsTable<T> interval_bounds(const Network& net, const PerturbationSet& region) {
  detail::check_input(net, region.x0.shape());
  BoundsTable<T> table;
  table.input = region_box<T>(region);
  std::vector<std::pair<T, T>> cur = table.input;
  std::vector<Shape> shapes = net.activation_shapes();
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& layer = net.layers[li];
    if (std::holds_alternative<Conv2d>(layer) || std::holds_alternative<Dense>(layer)) {
      cur = bounds_detail::linear_interval<T>(cur, net, layer, shapes[li]);
    } else if (std::holds_alternative<ReLU>(layer)) {
      for (auto& b : cur) {
        b.first = num::max<T>(b.first, T(0));
        b.second = num::max<T>(b.second, T(0));
      }
    }  // Flatten: index order is already row-major
    table.layer.push_back(cur);
  }
  return table;
}

}  // namespace fpgap
