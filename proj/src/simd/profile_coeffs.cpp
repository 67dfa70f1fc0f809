#include <cmath>

#include "pkgee/pk_model.hpp"
#include "pkgee/simd/kernels.hpp"

namespace pkgee::simd {

ProfileCoeffs make_profile_coeffs(const PkParams& p, const InfusionSpec& inf) {
  const double kel = std::exp(p.log_kel);
  const double k12 = std::exp(p.log_k12);
  const double k21 = std::exp(p.log_k21);
  const auto [a, b] = hybrid_rate_constants(kel, k12, k21);
  const double gap = a - b;

  ProfileCoeffs c;
  c.log_scale = std::log(inf.rate()) - p.log_vd;
  c.a = a;
  c.b = b;
  c.t_in = inf.t_in_h;

  const double ad = a * gap;
  const double bd = b * gap;
  c.c_a = (k21 - a) / ad;
  c.c_b = (b - k21) / bd;

  // Partials of c_a, c_b with respect to a, b and K_21.
  const double ca_a = (-ad - (k21 - a) * (2.0 * a - b)) / (ad * ad);
  const double ca_b = (k21 - a) / (a * gap * gap);
  const double ca_k21 = 1.0 / ad;
  const double cb_a = -(b - k21) / (b * gap * gap);
  const double cb_b = (bd - (b - k21) * (a - 2.0 * b)) / (bd * bd);
  const double cb_k21 = -1.0 / bd;

  // da/dk and db/dk from a + b = sum of rates, a * b = K_el * K_21.
  const double rate[3] = {kel, k12, k21};
  const double da[3] = {(a - k21) / gap, a / gap, (a - kel) / gap};
  const double db[3] = {(k21 - b) / gap, -b / gap, (kel - b) / gap};
  const double direct[3] = {0.0, 0.0, 1.0};

  for (int k = 0; k < 3; ++k) {
    c.w[k][0] = rate[k] * (ca_a * da[k] + ca_b * db[k] + direct[k] * ca_k21);
    c.w[k][1] = rate[k] * (c.c_a * da[k]);
    c.w[k][2] = rate[k] * (cb_a * da[k] + cb_b * db[k] + direct[k] * cb_k21);
    c.w[k][3] = rate[k] * (c.c_b * db[k]);
  }
  return c;
}

}  // namespace pkgee::simd
