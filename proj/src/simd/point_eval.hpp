#pragma once

// Scalar evaluation of one observation; shared by the reference kernel and
// the public single-point API.

#include <cmath>

#include "pkgee/simd/kernels.hpp"

namespace pkgee::simd::detail {

struct PointValue {
  double g;        // f / exp(log_scale)
  double grad[3];  // numerators of d f*/d log k, before division by g
};

inline PointValue eval_point(const ProfileCoeffs& c, double t) {
  const double s = t < c.t_in ? t : c.t_in;
  const double d = t - s;
  const double em_a = std::expm1(-c.a * s);
  const double em_b = std::expm1(-c.b * s);
  const double u_a = std::exp(-c.a * d) * em_a;
  const double u_b = std::exp(-c.b * d) * em_b;
  const double du_a = -d * u_a - s * std::exp(-c.a * t);
  const double du_b = -d * u_b - s * std::exp(-c.b * t);

  PointValue v;
  v.g = c.c_a * u_a + c.c_b * u_b;
  for (int k = 0; k < 3; ++k) {
    v.grad[k] = c.w[k][0] * u_a + c.w[k][1] * du_a + c.w[k][2] * u_b + c.w[k][3] * du_b;
  }
  return v;
}

}  // namespace pkgee::simd::detail
