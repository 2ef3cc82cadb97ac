#pragma once

#include <array>

#include "fpgap/network.hpp"

namespace fpgap {

// F(4x4, 3x3) Winograd convolution: 6x6 input tiles -> 4x4 output tiles,
// Y = At [ (G g Gt) . (Bt d B) ] A. Interpolation points {0, +-1, +-2, inf}.
// Bt and At have integer entries; G carries the 1/6-family fractions, so the
// single-precision instantiation rounds G while the rational one is exact.

inline constexpr int kWinogradInputTile = 6;
inline constexpr int kWinogradOutputTile = 4;

namespace wg {

inline constexpr int BT[6][6] = {
    {4, 0, -5, 0, 1, 0},  {0, -4, -4, 1, 1, 0}, {0, 4, -4, -1, 1, 0},
    {0, -2, -1, 2, 1, 0}, {0, 2, -1, -2, 1, 0}, {0, 4, 0, -5, 0, 1}};

// numerator/denominator pairs
inline constexpr int G_NUM[6][3] = {{1, 0, 0},  {-1, -1, -1}, {-1, 1, -1},
                                    {1, 1, 1},  {1, -1, 1},   {0, 0, 1}};
inline constexpr int G_DEN[6][3] = {{4, 1, 1},  {6, 6, 6},    {6, 6, 6},
                                    {24, 12, 6}, {24, 12, 6}, {1, 1, 1}};

inline constexpr int AT[4][6] = {{1, 1, 1, 1, 1, 0},
                                 {0, 1, -1, 2, -2, 0},
                                 {0, 1, 1, 4, 4, 0},
                                 {0, 1, -1, 8, -8, 1}};

template <class T>
std::array<T, 18> filter_transform_matrix() {
  std::array<T, 18> g;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 3; ++j) g[i * 3 + j] = num::ratio<T>(G_NUM[i][j], G_DEN[i][j]);
  return g;
}

/// U = G g Gt for a 3x3 filter g; every product and sum rounds separately.
template <class T>
std::array<T, 36> transform_filter(const std::array<T, 9>& g) {
  const std::array<T, 18> G = filter_transform_matrix<T>();
  std::array<T, 18> tmp{};  // G g : 6x3
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 3; ++j) {
      T acc(0);
      for (int k = 0; k < 3; ++k) {
        T p = G[i * 3 + k] * g[k * 3 + j];
        acc = acc + p;
      }
      tmp[i * 3 + j] = acc;
    }
  std::array<T, 36> u{};  // (G g) Gt : 6x6
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      T acc(0);
      for (int k = 0; k < 3; ++k) {
        T p = tmp[i * 3 + k] * G[j * 3 + k];
        acc = acc + p;
      }
      u[i * 6 + j] = acc;
    }
  return u;
}

/// V = Bt d B for a 6x6 input tile d.
template <class T>
std::array<T, 36> transform_input(const std::array<T, 36>& d) {
  std::array<T, 36> tmp{};  // Bt d
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      T acc(0);
      for (int k = 0; k < 6; ++k) {
        if (BT[i][k] == 0) continue;
        T p = T(BT[i][k]) * d[k * 6 + j];
        acc = acc + p;
      }
      tmp[i * 6 + j] = acc;
    }
  std::array<T, 36> v{};  // (Bt d) B
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      T acc(0);
      for (int k = 0; k < 6; ++k) {
        if (BT[j][k] == 0) continue;
        T p = tmp[i * 6 + k] * T(BT[j][k]);
        acc = acc + p;
      }
      v[i * 6 + j] = acc;
    }
  return v;
}

/// Y = At m A for a 6x6 elementwise-product tile m.
template <class T>
std::array<T, 16> transform_output(const std::array<T, 36>& m) {
  std::array<T, 24> tmp{};  // At m : 4x6
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) {
      T acc(0);
      for (int k = 0; k < 6; ++k) {
        if (AT[i][k] == 0) continue;
        T p = T(AT[i][k]) * m[k * 6 + j];
        acc = acc + p;
      }
      tmp[i * 6 + j] = acc;
    }
  std::array<T, 16> y{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      T acc(0);
      for (int k = 0; k < 6; ++k) {
        if (AT[j][k] == 0) continue;
        T p = tmp[i * 6 + k] * T(AT[j][k]);
        acc = acc + p;
      }
      y[i * 4 + j] = acc;
    }
  return y;
}

}  // namespace wg

/// Single-tile F(4x4,3x3) correlation of a 6x6 tile with a 3x3 filter.
/// Exact in rational arithmetic; in single precision every matrix product
/// is evaluated with a fixed loop order and separate rounding per op.
template <class T>
std::array<T, 16> winograd_conv(const std::array<T, 36>& tile, const std::array<T, 9>& filter) {
  std::array<T, 36> u = wg::transform_filter<T>(filter);
  std::array<T, 36> v = wg::transform_input<T>(tile);
  std::array<T, 36> m{};
  for (int i = 0; i < 36; ++i) m[i] = u[i] * v[i];
  return wg::transform_output<T>(m);
}

/// Runtime-checked wrapper used where the filter arrives as a plain vector.
template <class T>
std::array<T, 16> winograd_conv_checked(const std::array<T, 36>& tile,
                                        const std::vector<T>& filter, int kh, int kw) {
  require(kh == 3 && kw == 3, "winograd_conv: only 3x3 filters are supported");
  std::array<T, 9> g{};
  for (int i = 0; i < 9; ++i) g[i] = filter[i];
  return winograd_conv<T>(tile, g);
}

}  // namespace fpgap
