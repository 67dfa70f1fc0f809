#include <cmath>

#include "pkgee/simd/kernels.hpp"
#include "simd/point_eval.hpp"

namespace pkgee::simd {

namespace {

std::size_t eval_profile_scalar(const ProfileCoeffs& c, const double* times, std::size_t n,
                                double* log_conc, double* grad) {
  std::size_t bad = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto v = detail::eval_point(c, times[j]);
    if (!(v.g > 0.0) || !std::isfinite(v.g)) ++bad;
    const double inv = 1.0 / v.g;
    log_conc[j] = c.log_scale + std::log(v.g);
    grad[j] = -1.0;
    grad[n + j] = v.grad[0] * inv;
    grad[2 * n + j] = v.grad[1] * inv;
    grad[3 * n + j] = v.grad[2] * inv;
  }
  return bad;
}

void accumulate_gram_scalar(const double* grad, const double* resid, std::size_t n, double* gram,
                            double* score) {
  for (int k = 0; k < 4; ++k) {
    const double* gk = grad + k * n;
    for (int l = k; l < 4; ++l) {
      const double* gl = grad + l * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += gk[j] * gl[j];
      gram[4 * k + l] += acc;
      if (l != k) gram[4 * l + k] += acc;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += gk[j] * resid[j];
    score[k] += s;
  }
}

void vexp_scalar(const double* x, std::size_t n, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = std::exp(x[j]);
}

void vexpm1_scalar(const double* x, std::size_t n, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = std::expm1(x[j]);
}

void vlog_scalar(const double* x, std::size_t n, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = std::log(x[j]);
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", eval_profile_scalar, accumulate_gram_scalar,
                                 vexp_scalar, vexpm1_scalar, vlog_scalar};
  return table;
}

}  // namespace pkgee::simd
