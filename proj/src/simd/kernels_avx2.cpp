// AVX2 + FMA variants. This file is compiled with -mavx2 -mfma; it must not
// include headers whose inline functions are shared with other translation
// units (Eigen, <cmath> wrappers used elsewhere), or the linker may pick the
// AVX2 instantiation for code that runs on any CPU.

#include <immintrin.h>

#include <cstddef>
#include <cstdint>

#include "pkgee/simd/kernels.hpp"

namespace pkgee::simd {

namespace {

inline __m256d splat(double v) { return _mm256_set1_pd(v); }

// 2^n for integral-valued n in [-1022, 1023].
inline __m256d pow2n(__m256d n) {
  const __m256d magic = splat(6755399441055744.0);  // 2^52 + 2^51
  const __m256i bits = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, magic)),
                                        _mm256_castpd_si256(magic));
  return _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52));
}

// exp(x): x = n ln2 + r, |r| <= ln2/2, Taylor polynomial of degree 13 for e^r.
// Results below ~2.2e-308 flush to zero.
inline __m256d exp_pd(__m256d x) {
  const __m256d lo = splat(-708.39);
  const __m256d hi = splat(709.78);
  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo), hi);
  const __m256d n =
      _mm256_round_pd(_mm256_mul_pd(xc, splat(1.4426950408889634)),
                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, splat(6.93147180369123816490e-01), xc);
  r = _mm256_fnmadd_pd(n, splat(1.90821492927058770002e-10), r);

  __m256d p = splat(1.0 / 6227020800.0);  // 1/13!
  p = _mm256_fmadd_pd(p, r, splat(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, splat(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, splat(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, splat(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, splat(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, splat(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, splat(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, splat(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, splat(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, splat(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, splat(0.5));
  p = _mm256_fmadd_pd(p, r, splat(1.0));
  p = _mm256_fmadd_pd(p, r, splat(1.0));

  __m256d result = _mm256_mul_pd(p, pow2n(n));
  result = _mm256_blendv_pd(result, _mm256_setzero_pd(), _mm256_cmp_pd(x, lo, _CMP_LT_OQ));
  result = _mm256_blendv_pd(result, splat(__builtin_inf()), _mm256_cmp_pd(x, hi, _CMP_GT_OQ));
  return _mm256_blendv_pd(result, x, _mm256_cmp_pd(x, x, _CMP_UNORD_Q));
}

// expm1(x): Taylor series of degree 17 for |x| < 0.5, exp(x) - 1 otherwise.
inline __m256d expm1_pd(__m256d x) {
  static constexpr double kInvFact[18] = {
      1.0,
      1.0,
      1.0 / 2.0,
      1.0 / 6.0,
      1.0 / 24.0,
      1.0 / 120.0,
      1.0 / 720.0,
      1.0 / 5040.0,
      1.0 / 40320.0,
      1.0 / 362880.0,
      1.0 / 3628800.0,
      1.0 / 39916800.0,
      1.0 / 479001600.0,
      1.0 / 6227020800.0,
      1.0 / 87178291200.0,
      1.0 / 1307674368000.0,
      1.0 / 20922789888000.0,
      1.0 / 355687428096000.0,
  };
  __m256d p = splat(kInvFact[17]);
  for (int k = 16; k >= 1; --k) p = _mm256_fmadd_pd(p, x, splat(kInvFact[k]));
  const __m256d small = _mm256_mul_pd(p, x);
  const __m256d large = _mm256_sub_pd(exp_pd(x), splat(1.0));
  const __m256d absx = _mm256_andnot_pd(splat(-0.0), x);
  return _mm256_blendv_pd(large, small, _mm256_cmp_pd(absx, splat(0.5), _CMP_LT_OQ));
}

// log(x) for x > 0: x = 2^e m with m in [sqrt(1/2), sqrt(2)), then
// log m = 2 atanh((m-1)/(m+1)) by its odd series.
inline __m256d log_pd(__m256d x) {
  const __m256d tiny = splat(2.2250738585072014e-308);
  const __m256d is_sub = _mm256_cmp_pd(x, tiny, _CMP_LT_OQ);
  const __m256d xs = _mm256_blendv_pd(x, _mm256_mul_pd(x, splat(18014398509481984.0)), is_sub);
  const __m256d sub_shift = _mm256_and_pd(is_sub, splat(54.0));

  const __m256i bits = _mm256_castpd_si256(xs);
  const __m256i exp_bits = _mm256_srli_epi64(bits, 52);
  const __m256d two52 = splat(4503599627370496.0);
  __m256d e = _mm256_sub_pd(
      _mm256_castsi256_pd(_mm256_or_si256(exp_bits, _mm256_castpd_si256(two52))), two52);
  e = _mm256_sub_pd(e, _mm256_add_pd(splat(1023.0), sub_shift));

  const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
  const __m256i one_bits = _mm256_set1_epi64x(0x3FF0000000000000LL);
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, mant_mask), one_bits));
  const __m256d big = _mm256_cmp_pd(m, splat(1.4142135623730951), _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, splat(0.5)), big);
  e = _mm256_add_pd(e, _mm256_and_pd(big, splat(1.0)));

  const __m256d z = _mm256_div_pd(_mm256_sub_pd(m, splat(1.0)), _mm256_add_pd(m, splat(1.0)));
  const __m256d z2 = _mm256_mul_pd(z, z);
  __m256d p = splat(1.0 / 23.0);
  for (int k = 21; k >= 1; k -= 2) p = _mm256_fmadd_pd(p, z2, splat(1.0 / k));
  const __m256d log_m = _mm256_mul_pd(_mm256_add_pd(z, z), p);

  __m256d result = _mm256_fmadd_pd(e, splat(1.90821492927058770002e-10), log_m);
  result = _mm256_fmadd_pd(e, splat(6.93147180369123816490e-01), result);

  const __m256d nonpos = _mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_LE_OQ);
  const __m256d zero = _mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_EQ_OQ);
  const __m256d inf = _mm256_cmp_pd(x, splat(__builtin_inf()), _CMP_EQ_OQ);
  result = _mm256_blendv_pd(result, splat(__builtin_nan("")), nonpos);
  result = _mm256_blendv_pd(result, splat(-__builtin_inf()), zero);
  result = _mm256_blendv_pd(result, x, inf);
  return _mm256_blendv_pd(result, x, _mm256_cmp_pd(x, x, _CMP_UNORD_Q));
}

struct Lanes {
  __m256d log_conc;
  __m256d grad[3];
  int bad_mask;
};

inline Lanes eval_lanes(const ProfileCoeffs& c, __m256d t) {
  const __m256d neg_a = splat(-c.a);
  const __m256d neg_b = splat(-c.b);
  const __m256d s = _mm256_min_pd(t, splat(c.t_in));
  const __m256d d = _mm256_sub_pd(t, s);

  const __m256d em_a = expm1_pd(_mm256_mul_pd(neg_a, s));
  const __m256d em_b = expm1_pd(_mm256_mul_pd(neg_b, s));
  const __m256d u_a = _mm256_mul_pd(exp_pd(_mm256_mul_pd(neg_a, d)), em_a);
  const __m256d u_b = _mm256_mul_pd(exp_pd(_mm256_mul_pd(neg_b, d)), em_b);
  const __m256d e_at = exp_pd(_mm256_mul_pd(neg_a, t));
  const __m256d e_bt = exp_pd(_mm256_mul_pd(neg_b, t));
  // u'(x) = -d u(x) - s e^{-x t}
  const __m256d du_a = _mm256_fnmadd_pd(d, u_a, _mm256_mul_pd(_mm256_sub_pd(_mm256_setzero_pd(), s), e_at));
  const __m256d du_b = _mm256_fnmadd_pd(d, u_b, _mm256_mul_pd(_mm256_sub_pd(_mm256_setzero_pd(), s), e_bt));

  const __m256d g = _mm256_fmadd_pd(splat(c.c_a), u_a, _mm256_mul_pd(splat(c.c_b), u_b));
  const __m256d inv = _mm256_div_pd(splat(1.0), g);

  Lanes out;
  for (int k = 0; k < 3; ++k) {
    __m256d num = _mm256_mul_pd(splat(c.w[k][0]), u_a);
    num = _mm256_fmadd_pd(splat(c.w[k][1]), du_a, num);
    num = _mm256_fmadd_pd(splat(c.w[k][2]), u_b, num);
    num = _mm256_fmadd_pd(splat(c.w[k][3]), du_b, num);
    out.grad[k] = _mm256_mul_pd(num, inv);
  }
  out.log_conc = _mm256_add_pd(splat(c.log_scale), log_pd(g));
  // bad: not (g > 0 and g finite)
  const __m256d ok = _mm256_and_pd(_mm256_cmp_pd(g, _mm256_setzero_pd(), _CMP_GT_OQ),
                                   _mm256_cmp_pd(g, splat(__builtin_inf()), _CMP_LT_OQ));
  out.bad_mask = (~_mm256_movemask_pd(ok)) & 0xF;
  return out;
}

std::size_t eval_profile_avx2(const ProfileCoeffs& c, const double* times, std::size_t n,
                              double* log_conc, double* grad) {
  std::size_t bad = 0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const Lanes v = eval_lanes(c, _mm256_loadu_pd(times + j));
    _mm256_storeu_pd(log_conc + j, v.log_conc);
    _mm256_storeu_pd(grad + j, splat(-1.0));
    _mm256_storeu_pd(grad + n + j, v.grad[0]);
    _mm256_storeu_pd(grad + 2 * n + j, v.grad[1]);
    _mm256_storeu_pd(grad + 3 * n + j, v.grad[2]);
    bad += static_cast<std::size_t>(__builtin_popcount(v.bad_mask));
  }
  if (j < n) {
    const std::size_t rem = n - j;
    alignas(32) double tb[4];
    for (std::size_t q = 0; q < 4; ++q) tb[q] = times[j + (q < rem ? q : rem - 1)];
    const Lanes v = eval_lanes(c, _mm256_load_pd(tb));
    alignas(32) double lc[4], g0[4], g1[4], g2[4];
    _mm256_store_pd(lc, v.log_conc);
    _mm256_store_pd(g0, v.grad[0]);
    _mm256_store_pd(g1, v.grad[1]);
    _mm256_store_pd(g2, v.grad[2]);
    for (std::size_t q = 0; q < rem; ++q) {
      log_conc[j + q] = lc[q];
      grad[j + q] = -1.0;
      grad[n + j + q] = g0[q];
      grad[2 * n + j + q] = g1[q];
      grad[3 * n + j + q] = g2[q];
      if (v.bad_mask & (1 << q)) ++bad;
    }
  }
  return bad;
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void accumulate_gram_avx2(const double* grad, const double* resid, std::size_t n, double* gram,
                          double* score) {
  __m256d acc_g[10];
  __m256d acc_s[4];
  for (auto& v : acc_g) v = _mm256_setzero_pd();
  for (auto& v : acc_s) v = _mm256_setzero_pd();

  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d g[4];
    for (int k = 0; k < 4; ++k) g[k] = _mm256_loadu_pd(grad + k * n + j);
    const __m256d r = _mm256_loadu_pd(resid + j);
    int idx = 0;
    for (int k = 0; k < 4; ++k) {
      for (int l = k; l < 4; ++l) acc_g[idx] = _mm256_fmadd_pd(g[k], g[l], acc_g[idx]), ++idx;
      acc_s[k] = _mm256_fmadd_pd(g[k], r, acc_s[k]);
    }
  }

  double sums_g[10];
  double sums_s[4];
  for (int q = 0; q < 10; ++q) sums_g[q] = hsum(acc_g[q]);
  for (int k = 0; k < 4; ++k) sums_s[k] = hsum(acc_s[k]);
  for (; j < n; ++j) {
    int idx = 0;
    for (int k = 0; k < 4; ++k) {
      const double gk = grad[k * n + j];
      for (int l = k; l < 4; ++l) sums_g[idx++] += gk * grad[l * n + j];
      sums_s[k] += gk * resid[j];
    }
  }

  int idx = 0;
  for (int k = 0; k < 4; ++k) {
    for (int l = k; l < 4; ++l) {
      gram[4 * k + l] += sums_g[idx];
      if (l != k) gram[4 * l + k] += sums_g[idx];
      ++idx;
    }
    score[k] += sums_s[k];
  }
}

template <__m256d (*Fn)(__m256d)>
void apply_elementwise(const double* x, std::size_t n, double* out) {
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) _mm256_storeu_pd(out + j, Fn(_mm256_loadu_pd(x + j)));
  if (j < n) {
    alignas(32) double buf[4] = {1.0, 1.0, 1.0, 1.0};
    for (std::size_t q = 0; j + q < n; ++q) buf[q] = x[j + q];
    _mm256_store_pd(buf, Fn(_mm256_load_pd(buf)));
    for (std::size_t q = 0; j + q < n; ++q) out[j + q] = buf[q];
  }
}

}  // namespace

namespace detail {
const KernelTable& avx2_table() {
  static const KernelTable table{"avx2", eval_profile_avx2, accumulate_gram_avx2,
                                 apply_elementwise<exp_pd>, apply_elementwise<expm1_pd>,
                                 apply_elementwise<log_pd>};
  return table;
}
}  // namespace detail

}  // namespace pkgee::simd
