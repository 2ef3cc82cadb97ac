#pragma once

#include <variant>
#include <vector>

#include "fpgap/tensor.hpp"

namespace fpgap {

/// 3x3-style convolution, stride fixed at 1, symmetric zero padding.
/// Weights in (out_ch, in_ch, kh, kw) order, single precision (canonical).
struct Conv2d {
  int out_ch = 0, in_ch = 0, kh = 0, kw = 0, pad = 0;
  std::vector<float> weights;
  std::vector<float> bias;
};

/// Fully connected layer; weights row-major (rows x cols), one row per
/// output. Consumes a flattened (1,1,cols) activation.
struct Dense {
  int rows = 0, cols = 0;
  std::vector<float> weights;
  std::vector<float> bias;
};

struct ReLU {};
struct Flatten {};

using Layer = std::variant<Conv2d, Dense, ReLU, Flatten>;

struct Network {
  Shape input;
  std::vector<Layer> layers;

  /// Output shape of layer i applied to shape s; throws on mismatch.
  static Shape layer_output_shape(const Layer& layer, const Shape& s) {
    if (const auto* cv = std::get_if<Conv2d>(&layer)) {
      require(cv->in_ch == s.c, "conv2d: in_ch != input channels");
      int oh = s.h + 2 * cv->pad - cv->kh + 1;
      int ow = s.w + 2 * cv->pad - cv->kw + 1;
      require(oh > 0 && ow > 0, "conv2d: kernel larger than padded input");
      require(int(cv->weights.size()) == cv->out_ch * cv->in_ch * cv->kh * cv->kw,
              "conv2d: weight count mismatch");
      require(int(cv->bias.size()) == cv->out_ch, "conv2d: bias count mismatch");
      return Shape{oh, ow, cv->out_ch};
    }
    if (const auto* d = std::get_if<Dense>(&layer)) {
      require(s.h == 1 && s.w == 1, "dense: input must be flattened");
      require(d->cols == s.c, "dense: cols != input size");
      require(int(d->weights.size()) == d->rows * d->cols, "dense: weight count mismatch");
      require(int(d->bias.size()) == d->rows, "dense: bias count mismatch");
      return Shape{1, 1, d->rows};
    }
    if (std::holds_alternative<Flatten>(layer)) return Shape{1, 1, s.size()};
    return s;  // ReLU
  }

  /// Shapes after each layer (size = layers.size() + 1, [0] = input).
  std::vector<Shape> activation_shapes() const {
    std::vector<Shape> shapes{input};
    for (const Layer& l : layers) shapes.push_back(layer_output_shape(l, shapes.back()));
    return shapes;
  }

  Shape output_shape() const { return activation_shapes().back(); }

  int num_classes() const {
    Shape out = output_shape();
    require(out.h == 1 && out.w == 1, "network output is not a vector");
    return out.c;
  }

  /// Shape composition, finiteness, and a >=2-class logits vector.
  void validate() const {
    Shape out = output_shape();
    require(out.h == 1 && out.w == 1 && out.c >= 2, "network must end in >=2 logits");
    for (const Layer& l : layers) {
      auto check = [](const std::vector<float>& vs) {
        for (float v : vs) require(std::isfinite(v), "network weight not finite");
      };
      if (const auto* cv = std::get_if<Conv2d>(&l)) {
        check(cv->weights);
        check(cv->bias);
      } else if (const auto* d = std::get_if<Dense>(&l)) {
        check(d->weights);
        check(d->bias);
      }
    }
  }
};

template <class T>
struct Logits {
  std::vector<T> scores;
  int num_classes() const { return int(scores.size()); }
};

/// Carlini-Wagner margin: score of the target class minus the best other
/// score, evaluated in the precision of the scores. Positive iff the input
/// is classified as t (ties give exactly zero).
template <class T>
T cw_loss(const Logits<T>& y, int t) {
  int k = y.num_classes();
  require(k >= 2, "cw_loss: need at least two classes");
  require(t >= 0 && t < k, "cw_loss: class index out of range");
  bool first = true;
  T best(0);
  for (int i = 0; i < k; ++i) {
    if (i == t) continue;
    if (first || best < y.scores[i]) best = y.scores[i];
    first = false;
  }
  return y.scores[t] - best;
}

/// Highest-scoring class, ties to the lowest index.
template <class T>
int argmax_class(const Logits<T>& y) {
  int best = 0;
  for (int i = 1; i < y.num_classes(); ++i)
    if (y.scores[best] < y.scores[i]) best = i;
  return best;
}

/// L-inf ball of radius eps around x0, intersected with the unit box.
/// eps is carried as a double; per-precision roundings are taken at use.
struct PerturbationSet {
  ImageF x0;
  double eps = 0.0;

  PerturbationSet(ImageF center, double radius) : x0(std::move(center)), eps(radius) {
    require(radius >= 0.0 && std::isfinite(radius), "PerturbationSet: eps must be >= 0");
    require(all_finite(x0) && in_unit_range(x0), "PerturbationSet: x0 must be in [0,1]");
  }
};

}  // namespace fpgap
