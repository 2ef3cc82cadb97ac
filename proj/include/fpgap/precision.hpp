#pragma once

#include <cmath>
#include <cstdint>

#include "fpgap/rational.hpp"

namespace fpgap {

/// IEEE-754 nextafter in the operand's precision.
inline float next_after(float v, float toward) { return std::nextafterf(v, toward); }
inline double next_after(double v, double toward) { return std::nextafter(v, toward); }

/// single -> double widening, exact by IEEE-754.
inline double widen(float v) { return double(v); }

/// Round a double to the nearest single (ties to even).
inline float to_single(double v) { return float(v); }

/// Nearest multiple of step, ties to even multiple. Exact when step is a
/// power of two and v/step fits the significand; otherwise computed in the
/// operand's precision.
inline float round_to_multiple(float v, float step) {
  float q = v / step;
  float r = std::nearbyintf(q) * step;  // default mode: ties to even
  return r == 0.0f ? 0.0f : r;          // canonicalize -0
}
inline double round_to_multiple(double v, double step) {
  double q = v / step;
  double r = std::nearbyint(q) * step;
  return r == 0.0 ? 0.0 : r;
}

/// Exact half-to-even rounding of q to an integer multiple of step.
inline Rational round_to_multiple(const Rational& v, const Rational& step) {
  Rational q = v / step;
  mpz_class fl;
  mpz_fdiv_q(fl.get_mpz_t(), q.get_num().get_mpz_t(), q.get_den().get_mpz_t());
  Rational frac = q - Rational(fl);
  Rational half(1, 2);
  mpz_class n;
  if (frac < half) {
    n = fl;
  } else if (frac > half) {
    n = fl + 1;
  } else {
    n = mpz_even_p(fl.get_mpz_t()) ? fl : mpz_class(fl + 1);
  }
  return Rational(n) * step;
}

}  // namespace fpgap
