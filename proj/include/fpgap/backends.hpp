#pragma once

#include <array>
#include <string>
#include <vector>

#include "fpgap/network.hpp"
#include "fpgap/winograd.hpp"

namespace fpgap {

/// Inference implementations with deliberately distinct rounding behavior.
/// All *_F32 backends store every intermediate activation in single
/// precision; each defines a total, deterministic order for every reduction,
/// and none uses FMA (builds set -ffp-contract=off).
enum class BackendId {
  REF_F64,       // direct convolution/dense in double precision
  DIRECT_F32,    // direct convolution, accumulation over (in_ch, kh, kw), in_ch fastest
  IM2COL_F32,    // convolution lowered to matmul, sequential k accumulation (kw fastest)
  PAIRWISE_F32,  // direct convolution with balanced binary-tree summation
  WINOGRAD_F32,  // F(4x4,3x3) Winograd for 3x3 convolutions
  EXACT_RAT,     // exact rational arithmetic on the exact values of weights/inputs
};

inline const char* backend_name(BackendId b) {
  switch (b) {
    case BackendId::REF_F64: return "ref-f64";
    case BackendId::DIRECT_F32: return "direct-f32";
    case BackendId::IM2COL_F32: return "im2col-f32";
    case BackendId::PAIRWISE_F32: return "pairwise-f32";
    case BackendId::WINOGRAD_F32: return "winograd-f32";
    case BackendId::EXACT_RAT: return "exact-rat";
  }
  return "?";
}

inline BackendId parse_backend(const std::string& s) {
  for (BackendId b : {BackendId::REF_F64, BackendId::DIRECT_F32, BackendId::IM2COL_F32,
                      BackendId::PAIRWISE_F32, BackendId::WINOGRAD_F32, BackendId::EXACT_RAT})
    if (s == backend_name(b)) return b;
  throw std::invalid_argument("unknown backend: " + s);
}

inline std::vector<BackendId> f32_backends() {
  return {BackendId::DIRECT_F32, BackendId::IM2COL_F32, BackendId::PAIRWISE_F32,
          BackendId::WINOGRAD_F32};
}

inline bool is_f32(BackendId b) {
  return b != BackendId::REF_F64 && b != BackendId::EXACT_RAT;
}

/// Perturbation tile layout for the random-perturbation attack: within each
/// stride x stride tile, only the sub-window starting at `offset` is touched.
struct TileGeometry {
  int offset = 0;
  int stride = 4;
};

/// Geometry derived from a Winograd tiling: the untouched border equals
/// input_tile - output_tile, the stride equals the output tile, so the
/// error contributions of distinct tiles stay independent.
inline TileGeometry winograd_tile_geometry(int input_tile, int output_tile) {
  require(input_tile > output_tile && output_tile > 0, "bad winograd tile sizes");
  return TileGeometry{input_tile - output_tile, output_tile};
}

inline TileGeometry tile_geometry(BackendId b) {
  if (b == BackendId::WINOGRAD_F32)
    return winograd_tile_geometry(kWinogradInputTile, kWinogradOutputTile);
  return TileGeometry{0, 4};
}

namespace kernels {

template <class T>
std::vector<T> weights_as(const std::vector<float>& w) {
  std::vector<T> out(w.size());
  for (size_t i = 0; i < w.size(); ++i) out[i] = num::from_float<T>(w[i]);
  return out;
}

template <class T>
T relu_scalar(const T& v) {
  return v > T(0) ? v : T(0);
}

/// Balanced binary-tree sum of v[lo, hi).
template <class T>
T pairwise_sum(const std::vector<T>& v, size_t lo, size_t hi) {
  if (hi == lo) return T(0);
  if (hi - lo == 1) return v[lo];
  size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

enum class ConvAlgo { Direct, Im2col, Pairwise, Winograd };

/// Direct convolution. Per output element the products accumulate with
/// in_ch varying fastest, then kernel row, then kernel column; bias last.
template <class T>
Tensor<T> conv_direct(const Tensor<T>& in, const Conv2d& cv) {
  const Shape s = in.shape();
  const Shape os = Network::layer_output_shape(Layer{cv}, s);
  const std::vector<T> w = weights_as<T>(cv.weights);
  const std::vector<T> b = weights_as<T>(cv.bias);
  Tensor<T> out(os);
  for (int oy = 0; oy < os.h; ++oy)
    for (int ox = 0; ox < os.w; ++ox)
      for (int oc = 0; oc < os.c; ++oc) {
        T acc(0);
        for (int kx = 0; kx < cv.kw; ++kx)
          for (int ky = 0; ky < cv.kh; ++ky) {
            int iy = oy + ky - cv.pad;
            int ix = ox + kx - cv.pad;
            if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
            for (int ic = 0; ic < cv.in_ch; ++ic) {
              T p = w[((size_t(oc) * cv.in_ch + ic) * cv.kh + ky) * cv.kw + kx] * in(iy, ix, ic);
              acc = acc + p;
            }
          }
        out(oy, ox, oc) = acc + b[oc];
      }
  return out;
}

/// Convolution as matrix multiplication: unfold patches into a K x P column
/// matrix (K enumerated as (in_ch, kh, kw), kw fastest — the weight layout),
/// then accumulate sequentially over K. Padding contributes explicit zeros.
template <class T>
Tensor<T> conv_im2col(const Tensor<T>& in, const Conv2d& cv) {
  const Shape s = in.shape();
  const Shape os = Network::layer_output_shape(Layer{cv}, s);
  const std::vector<T> w = weights_as<T>(cv.weights);
  const std::vector<T> b = weights_as<T>(cv.bias);
  const int K = cv.in_ch * cv.kh * cv.kw;
  const int P = os.h * os.w;
  std::vector<T> col(size_t(K) * P, T(0));
  for (int ic = 0; ic < cv.in_ch; ++ic)
    for (int ky = 0; ky < cv.kh; ++ky)
      for (int kx = 0; kx < cv.kw; ++kx) {
        int k = (ic * cv.kh + ky) * cv.kw + kx;
        for (int oy = 0; oy < os.h; ++oy)
          for (int ox = 0; ox < os.w; ++ox) {
            int iy = oy + ky - cv.pad;
            int ix = ox + kx - cv.pad;
            if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
            col[size_t(k) * P + oy * os.w + ox] = in(iy, ix, ic);
          }
      }
  Tensor<T> out(os);
  for (int oc = 0; oc < os.c; ++oc)
    for (int p = 0; p < P; ++p) {
      T acc(0);
      for (int k = 0; k < K; ++k) {
        T prod = w[size_t(oc) * K + k] * col[size_t(k) * P + p];
        acc = acc + prod;
      }
      out(p / os.w, p % os.w, oc) = acc + b[oc];
    }
  return out;
}

/// Direct convolution with balanced pairwise summation of the in-bounds
/// products, enumerated in (in_ch, kh, kw) order with kw fastest.
template <class T>
Tensor<T> conv_pairwise(const Tensor<T>& in, const Conv2d& cv) {
  const Shape s = in.shape();
  const Shape os = Network::layer_output_shape(Layer{cv}, s);
  const std::vector<T> w = weights_as<T>(cv.weights);
  const std::vector<T> b = weights_as<T>(cv.bias);
  Tensor<T> out(os);
  std::vector<T> prods;
  prods.reserve(size_t(cv.in_ch) * cv.kh * cv.kw);
  for (int oy = 0; oy < os.h; ++oy)
    for (int ox = 0; ox < os.w; ++ox)
      for (int oc = 0; oc < os.c; ++oc) {
        prods.clear();
        for (int ic = 0; ic < cv.in_ch; ++ic)
          for (int ky = 0; ky < cv.kh; ++ky)
            for (int kx = 0; kx < cv.kw; ++kx) {
              int iy = oy + ky - cv.pad;
              int ix = ox + kx - cv.pad;
              if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
              prods.push_back(w[((size_t(oc) * cv.in_ch + ic) * cv.kh + ky) * cv.kw + kx] *
                              in(iy, ix, ic));
            }
        out(oy, ox, oc) = pairwise_sum(prods, 0, prods.size()) + b[oc];
      }
  return out;
}

/// Winograd F(4x4,3x3) convolution layer. Output is tiled into 4x4 blocks;
/// each pulls a 6x6 input tile (zero padding outside the image). The
/// per-channel transformed products accumulate over in_ch in ascending
/// order before the output transform. Non-3x3 kernels fall back to direct.
template <class T>
Tensor<T> conv_winograd(const Tensor<T>& in, const Conv2d& cv) {
  if (cv.kh != 3 || cv.kw != 3) return conv_direct<T>(in, cv);
  const Shape s = in.shape();
  const Shape os = Network::layer_output_shape(Layer{cv}, s);
  const std::vector<T> w = weights_as<T>(cv.weights);
  const std::vector<T> b = weights_as<T>(cv.bias);

  // U = G g Gt per (oc, ic)
  std::vector<std::array<T, 36>> U(size_t(cv.out_ch) * cv.in_ch);
  for (int oc = 0; oc < cv.out_ch; ++oc)
    for (int ic = 0; ic < cv.in_ch; ++ic) {
      std::array<T, 9> g{};
      for (int i = 0; i < 9; ++i) g[i] = w[(size_t(oc) * cv.in_ch + ic) * 9 + i];
      U[size_t(oc) * cv.in_ch + ic] = wg::transform_filter<T>(g);
    }

  Tensor<T> out(os);
  for (int ty = 0; ty < os.h; ty += kWinogradOutputTile)
    for (int tx = 0; tx < os.w; tx += kWinogradOutputTile) {
      // V = Bt d B per in channel for this tile
      std::vector<std::array<T, 36>> V(cv.in_ch);
      for (int ic = 0; ic < cv.in_ch; ++ic) {
        std::array<T, 36> d{};
        for (int r = 0; r < 6; ++r)
          for (int cidx = 0; cidx < 6; ++cidx) {
            int iy = ty + r - cv.pad;
            int ix = tx + cidx - cv.pad;
            d[r * 6 + cidx] = (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w)
                                  ? T(0)
                                  : in(iy, ix, ic);
          }
        V[ic] = wg::transform_input<T>(d);
      }
      for (int oc = 0; oc < cv.out_ch; ++oc) {
        std::array<T, 36> m{};
        for (int i = 0; i < 36; ++i) m[i] = T(0);
        for (int ic = 0; ic < cv.in_ch; ++ic) {
          const std::array<T, 36>& u = U[size_t(oc) * cv.in_ch + ic];
          for (int i = 0; i < 36; ++i) {
            T p = u[i] * V[ic][i];
            m[i] = m[i] + p;
          }
        }
        std::array<T, 16> y = wg::transform_output<T>(m);
        for (int r = 0; r < kWinogradOutputTile && ty + r < os.h; ++r)
          for (int cidx = 0; cidx < kWinogradOutputTile && tx + cidx < os.w; ++cidx)
            out(ty + r, tx + cidx, oc) = y[r * 4 + cidx] + b[oc];
      }
    }
  return out;
}

/// Sequential dot product, index ascending; bias last.
template <class T>
Tensor<T> dense_seq(const Tensor<T>& in, const Dense& d) {
  const std::vector<T> w = weights_as<T>(d.weights);
  const std::vector<T> b = weights_as<T>(d.bias);
  Tensor<T> out(Shape{1, 1, d.rows});
  for (int r = 0; r < d.rows; ++r) {
    T acc(0);
    for (int j = 0; j < d.cols; ++j) {
      T p = w[size_t(r) * d.cols + j] * in[j];
      acc = acc + p;
    }
    out[r] = acc + b[r];
  }
  return out;
}

template <class T>
Tensor<T> dense_pairwise(const Tensor<T>& in, const Dense& d) {
  const std::vector<T> w = weights_as<T>(d.weights);
  const std::vector<T> b = weights_as<T>(d.bias);
  Tensor<T> out(Shape{1, 1, d.rows});
  std::vector<T> prods(d.cols);
  for (int r = 0; r < d.rows; ++r) {
    for (int j = 0; j < d.cols; ++j) prods[j] = w[size_t(r) * d.cols + j] * in[j];
    out[r] = pairwise_sum(prods, 0, prods.size()) + b[r];
  }
  return out;
}

template <class T>
Tensor<T> apply_layer(const Tensor<T>& act, const Layer& layer, ConvAlgo algo,
                      bool pairwise_dense) {
  if (const auto* cv = std::get_if<Conv2d>(&layer)) {
    switch (algo) {
      case ConvAlgo::Direct: return conv_direct<T>(act, *cv);
      case ConvAlgo::Im2col: return conv_im2col<T>(act, *cv);
      case ConvAlgo::Pairwise: return conv_pairwise<T>(act, *cv);
      case ConvAlgo::Winograd: return conv_winograd<T>(act, *cv);
    }
  }
  if (const auto* d = std::get_if<Dense>(&layer))
    return pairwise_dense ? dense_pairwise<T>(act, *d) : dense_seq<T>(act, *d);
  if (std::holds_alternative<ReLU>(layer)) {
    Tensor<T> out = act;
    for (int i = 0; i < out.size(); ++i) out[i] = relu_scalar(out[i]);
    return out;
  }
  return Tensor<T>(Shape{1, 1, act.size()}, act.data());  // Flatten
}

inline ConvAlgo conv_algo(BackendId b) {
  switch (b) {
    case BackendId::IM2COL_F32: return ConvAlgo::Im2col;
    case BackendId::PAIRWISE_F32: return ConvAlgo::Pairwise;
    case BackendId::WINOGRAD_F32: return ConvAlgo::Winograd;
    default: return ConvAlgo::Direct;
  }
}

template <class T>
Tensor<T> forward(const Network& net, Tensor<T> act, BackendId b, int num_layers = -1) {
  ConvAlgo algo = conv_algo(b);
  bool pd = b == BackendId::PAIRWISE_F32;
  int n = num_layers < 0 ? int(net.layers.size()) : num_layers;
  for (int i = 0; i < n; ++i) act = apply_layer<T>(act, net.layers[i], algo, pd);
  return act;
}

}  // namespace kernels

namespace detail {
inline void check_input(const Network& net, const Shape& s) {
  require(s == net.input,
          "input shape " + s.str() + " != network input " + net.input.str());
  require(!net.layers.empty(), "empty network");
}
template <class T>
Logits<T> as_logits(const Tensor<T>& t) {
  require(t.shape().h == 1 && t.shape().w == 1, "network output is not a vector");
  return Logits<T>{t.data()};
}
}  // namespace detail

/// Single-precision inference with the chosen backend's reduction order.
inline Logits<float> infer_f32(BackendId b, const Network& net, const ImageF& x) {
  require(is_f32(b), "infer_f32: backend is not single precision");
  detail::check_input(net, x.shape());
  require(all_finite(x) && in_unit_range(x), "infer: input must be finite and in [0,1]");
  return detail::as_logits(kernels::forward<float>(net, x, b));
}

/// Double-precision reference on the exactly widened single-precision input.
inline Logits<double> infer_f64(const Network& net, const ImageF& x) {
  detail::check_input(net, x.shape());
  require(all_finite(x) && in_unit_range(x), "infer: input must be finite and in [0,1]");
  return detail::as_logits(kernels::forward<double>(net, widen_to_double(x), BackendId::REF_F64));
}

/// Double forward on a double input. No [0,1] check: this evaluates the
/// network as a function on R^n (used for solver points and probes).
inline Logits<double> infer_f64(const Network& net, const ImageD& x) {
  detail::check_input(net, x.shape());
  return detail::as_logits(kernels::forward<double>(net, x, BackendId::REF_F64));
}

/// Exact real-arithmetic logits of the exact rational values of the
/// single-precision weights and input.
inline Logits<Rational> infer_exact(const Network& net, const ImageF& x) {
  detail::check_input(net, x.shape());
  require(all_finite(x) && in_unit_range(x), "infer: input must be finite and in [0,1]");
  return detail::as_logits(kernels::forward<Rational>(net, to_rational(x), BackendId::EXACT_RAT));
}

/// Native-precision logits widened to double for reporting. Exact for the
/// f32 and f64 backends; rounds once per logit for EXACT_RAT.
inline Logits<double> infer_as_double(BackendId b, const Network& net, const ImageF& x) {
  if (b == BackendId::REF_F64) return infer_f64(net, x);
  if (b == BackendId::EXACT_RAT) {
    Logits<Rational> q = infer_exact(net, x);
    Logits<double> out;
    for (const Rational& v : q.scores) out.scores.push_back(to_double(v));
    return out;
  }
  Logits<float> f = infer_f32(b, net, x);
  Logits<double> out;
  for (float v : f.scores) out.scores.push_back(widen(v));
  return out;
}

/// CW loss evaluated in the backend's native precision, then widened.
inline double cw_as_double(BackendId b, const Network& net, const ImageF& x, int t) {
  if (b == BackendId::REF_F64) return cw_loss(infer_f64(net, x), t);
  if (b == BackendId::EXACT_RAT) return to_double(cw_loss(infer_exact(net, x), t));
  return widen(cw_loss(infer_f32(b, net, x), t));
}

/// Pre-activation output of layer 1 only (layer 1 must be conv or dense).
template <class T>
Tensor<T> first_layer_output(BackendId b, const Network& net, const ImageF& x) {
  detail::check_input(net, x.shape());
  require(std::holds_alternative<Conv2d>(net.layers[0]) ||
              std::holds_alternative<Dense>(net.layers[0]),
          "first_layer_output: first layer must be conv or dense");
  return kernels::forward<T>(net, image_as<T>(x), b, 1);
}

inline Tensor<double> first_layer_as_double(BackendId b, const Network& net, const ImageF& x) {
  if (b == BackendId::REF_F64) return first_layer_output<double>(b, net, x);
  if (b == BackendId::EXACT_RAT) {
    Tensor<Rational> q = first_layer_output<Rational>(b, net, x);
    Tensor<double> out(q.shape());
    for (int i = 0; i < q.size(); ++i) out[i] = to_double(q[i]);
    return out;
  }
  Tensor<float> f = first_layer_output<float>(b, net, x);
  Tensor<double> out(f.shape());
  for (int i = 0; i < f.size(); ++i) out[i] = widen(f[i]);
  return out;
}

}  // namespace fpgap
