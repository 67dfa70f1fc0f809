#pragma once

// Batched inner loops of the GEE solver.
//
// Every kernel exists as a scalar reference and, where the build and the CPU
// allow, an AVX2/FMA variant. The active table is picked once at startup;
// PKGEE_SIMD=scalar in the environment forces the reference path.
// Variants agree to rounding (see tests/test_kernels.cpp), they are not
// bit-identical to each other.

#include <cstddef>

// Kept free of Eigen and other template-heavy headers: the AVX2 translation
// unit includes this file and is compiled with extra ISA flags.
namespace pkgee {
struct PkParams;
struct InfusionSpec;
}  // namespace pkgee

namespace pkgee::simd {

/// Per-subject constants of the closed form. With u(x) = e^{-x(t-s)} expm1(-x s),
/// s = min(t, T_in), the model is
///   f(t)      = exp(log_scale) * (c_a u(a) + c_b u(b))
///   df*/dlogk = (w[k] . (u(a), u'(a), u(b), u'(b))) / (c_a u(a) + c_b u(b))
/// for the three rate constants k = K_el, K_12, K_21, and df*/dlogV_d = -1.
struct ProfileCoeffs {
  double log_scale = 0.0;  // log(K0 / V_d)
  double a = 0.0;
  double b = 0.0;
  double t_in = 0.0;
  double c_a = 0.0;
  double c_b = 0.0;
  double w[3][4] = {};
};

/// Throws DegenerateRoots.
ProfileCoeffs make_profile_coeffs(const PkParams& p, const InfusionSpec& inf);

struct KernelTable {
  const char* name;

  /// Writes log f(t_j) into log_conc[j] and the theta-gradient into
  /// grad[k * n + j] (k = 0..3, structure-of-arrays). Returns the number of
  /// points whose concentration was not finite and positive.
  std::size_t (*eval_profile)(const ProfileCoeffs& c, const double* times, std::size_t n,
                              double* log_conc, double* grad);

  /// gram (4x4, row-major) += sum_j g_j g_j^T and score (4) += sum_j g_j r_j,
  /// with g_j = (grad[j], grad[n + j], grad[2n + j], grad[3n + j]).
  void (*accumulate_gram)(const double* grad, const double* resid, std::size_t n, double* gram,
                          double* score);

  // Elementwise transcendental helpers (exposed for accuracy tests).
  void (*vexp)(const double* x, std::size_t n, double* out);
  void (*vexpm1)(const double* x, std::size_t n, double* out);
  void (*vlog)(const double* x, std::size_t n, double* out);
};

const KernelTable& scalar_kernels();

/// nullptr unless the AVX2 variant was compiled in and the CPU reports
/// AVX2 and FMA.
const KernelTable* avx2_kernels();

const KernelTable& active_kernels();

}  // namespace pkgee::simd
