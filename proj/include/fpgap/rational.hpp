#pragma once

#include <gmpxx.h>

#include <cmath>
#include <string>
#include <type_traits>

#include "fpgap/common.hpp"

namespace fpgap {

/// Arbitrary-precision exact rational. Conversions from binary floats are
/// exact by construction (every finite float is a dyadic rational).
using Rational = mpq_class;

template <class T>
inline constexpr bool is_rational_v = std::is_same_v<T, Rational>;

inline Rational rational_of(double v) {
  require(std::isfinite(v), "rational_of: non-finite value");
  return Rational(v);
}
inline Rational rational_of(float v) { return rational_of(double(v)); }

inline double to_double(const Rational& q) { return q.get_d(); }
inline double to_double(double v) { return v; }
inline double to_double(float v) { return double(v); }

// Scalar helpers usable from templates over {float, double, Rational}.
namespace num {

template <class T>
T abs(const T& v) {
  if constexpr (is_rational_v<T>) {
    return ::abs(v);
  } else {
    return std::abs(v);
  }
}

template <class T>
const T& min(const T& a, const T& b) { return b < a ? b : a; }
template <class T>
const T& max(const T& a, const T& b) { return a < b ? b : a; }

/// Exact value of a single-precision scalar in T's arithmetic.
template <class T>
T from_float(float v) {
  if constexpr (is_rational_v<T>) {
    return rational_of(v);
  } else {
    return T(v);  // single -> double widening is exact
  }
}

/// Exact value of a double scalar in T's arithmetic (rounds only for T=float).
template <class T>
T from_double(double v) {
  if constexpr (is_rational_v<T>) {
    return rational_of(v);
  } else {
    return T(v);
  }
}

/// p/q evaluated in T: exact for Rational, correctly rounded for float/double.
template <class T>
T ratio(long p, long q) {
  if constexpr (is_rational_v<T>) {
    Rational r(p, q);
    r.canonicalize();
    return r;
  } else {
    return T(p) / T(q);
  }
}

inline std::string to_string(const Rational& q) { return q.get_str(); }

}  // namespace num

/// True iff v is an exact integer multiple of step (exact rational test).
inline bool is_multiple_of(double v, double step) {
  require(step > 0, "is_multiple_of: step must be positive");
  Rational q = rational_of(v) / rational_of(step);
  return q.get_den() == 1;
}

}  // namespace fpgap
