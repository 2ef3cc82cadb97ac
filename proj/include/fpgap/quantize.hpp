#pragma once

#include "fpgap/backends.hpp"
#include "fpgap/rng.hpp"

namespace fpgap {

/// Activation/weight lattice steps s0, s1 with implementation error bound E.
/// Rounding each linear-layer output to the nearest multiple of s0*s1 erases
/// implementation error as long as the true output lies on that lattice and
/// every backend's error stays below E < s0*s1/2. The lattice is closed
/// under the network's linear maps when weights are integers (s1 = 1) or,
/// more generally, when s1 divides 1.
class QuantizationScheme {
 public:
  QuantizationScheme(double s0, double s1, double error_bound)
      : s0_(s0), s1_(s1), error_bound_(error_bound) {
    require(s0 > 0 && s1 > 0 && error_bound > 0, "QuantizationScheme: steps must be positive");
    // exact comparison: s0*s1 > 2E
    require(rational_of(s0) * rational_of(s1) > 2 * rational_of(error_bound),
            "QuantizationScheme: requires s0*s1 > 2E");
  }
  double s0() const { return s0_; }
  double s1() const { return s1_; }
  double error_bound() const { return error_bound_; }
  double output_step() const { return s0_ * s1_; }

 private:
  double s0_, s1_, error_bound_;
};

namespace detail {

inline void check_scheme_model(const Network& net, const QuantizationScheme& q) {
  double step = q.output_step();
  for (const Layer& l : net.layers) {
    const std::vector<float>* w = nullptr;
    const std::vector<float>* b = nullptr;
    if (const auto* cv = std::get_if<Conv2d>(&l)) {
      w = &cv->weights;
      b = &cv->bias;
    } else if (const auto* d = std::get_if<Dense>(&l)) {
      w = &d->weights;
      b = &d->bias;
    }
    if (!w) continue;
    for (float v : *w)
      require(is_multiple_of(widen(v), q.s1()), "quantized_infer: weight not a multiple of s1");
    for (float v : *b)
      require(is_multiple_of(widen(v), step), "quantized_infer: bias not a multiple of s0*s1");
  }
}

template <class T>
Tensor<T> round_tensor_to_step(Tensor<T> t, double step) {
  if constexpr (is_rational_v<T>) {
    Rational qs = rational_of(step);
    for (int i = 0; i < t.size(); ++i) t[i] = round_to_multiple(t[i], qs);
  } else {
    T s = T(step);
    for (int i = 0; i < t.size(); ++i) t[i] = round_to_multiple(t[i], s);
  }
  return t;
}

template <class T>
Logits<T> quantized_forward(const Network& net, Tensor<T> act, const QuantizationScheme& q,
                            BackendId b) {
  kernels::ConvAlgo algo = kernels::conv_algo(b);
  bool pd = b == BackendId::PAIRWISE_F32;
  for (const Layer& l : net.layers) {
    act = kernels::apply_layer<T>(act, l, algo, pd);
    if (std::holds_alternative<Conv2d>(l) || std::holds_alternative<Dense>(l))
      act = round_tensor_to_step<T>(std::move(act), q.output_step());
  }
  return as_logits(act);
}

}  // namespace detail

/// Inference with post-linear-layer rounding to the s0*s1 lattice (ties to
/// even multiple). Identical across every backend whose per-layer error is
/// below the scheme's bound. Logits are reported as exact doubles; for the
/// f32 backends the rounded lattice values are exactly representable in
/// single precision at demo scales, so this widening is exact.
inline Logits<double> quantized_infer(const Network& net, const ImageF& x,
                                      const QuantizationScheme& q, BackendId b) {
  detail::check_input(net, x.shape());
  for (float v : x.data())
    require(is_multiple_of(widen(v), q.s0()), "quantized_infer: input not a multiple of s0");
  detail::check_scheme_model(net, q);
  if (b == BackendId::REF_F64) {
    Logits<double> y = detail::quantized_forward<double>(net, widen_to_double(x), q, b);
    return y;
  }
  if (b == BackendId::EXACT_RAT) {
    Logits<Rational> y = detail::quantized_forward<Rational>(net, to_rational(x), q, b);
    Logits<double> out;
    for (const Rational& v : y.scores) out.scores.push_back(to_double(v));
    return out;
  }
  Logits<float> y = detail::quantized_forward<float>(net, x, q, b);
  Logits<double> out;
  for (float v : y.scores) out.scores.push_back(widen(v));
  return out;
}

/// Max absolute per-layer discrepancy vs REF_F64 across the f32 backends
/// over random inputs in [0,1]; the basis for a scheme's loose bound E.
inline double measure_max_layer_error(const Network& net, int samples, Rng& rng) {
  double worst = 0.0;
  int n_layers = int(net.layers.size());
  for (int s = 0; s < samples; ++s) {
    ImageF x(net.input);
    for (int i = 0; i < x.size(); ++i) x[i] = rng.uniform01f();
    for (int layer = 1; layer <= n_layers; ++layer) {
      Tensor<double> r = kernels::forward<double>(net, widen_to_double(x), BackendId::REF_F64, layer);
      for (BackendId b : f32_backends()) {
        Tensor<float> a = kernels::forward<float>(net, x, b, layer);
        for (int i = 0; i < a.size(); ++i) {
          double d = std::abs(widen(a[i]) - r[i]);
          if (d > worst) worst = d;
        }
      }
    }
  }
  return worst;
}

}  // namespace fpgap
