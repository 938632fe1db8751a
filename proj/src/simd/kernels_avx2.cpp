// AVX2 + FMA variants of the kernels in kernels_scalar.cpp. Functions carry
// target attributes instead of the whole file being built with -mavx2, so no
// AVX2 code can leak into inline functions shared with the scalar path.

#include <cmath>
#include <limits>

#include "otproto/simd.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define OTPROTO_AVX2_TARGET __attribute__((target("avx2,fma")))
#include <immintrin.h>

namespace otproto::simd {

namespace {

OTPROTO_AVX2_TARGET inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

OTPROTO_AVX2_TARGET inline double hmax(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d m = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(m, _mm_unpackhi_pd(m, m)));
}

OTPROTO_AVX2_TARGET inline __m256d load4(const float* p) {
  return _mm256_cvtps_pd(_mm_loadu_ps(p));
}

// e^x for double lanes. Range reduction x = k ln2 + r with |r| <= ln2/2, then a
// degree-13 Taylor polynomial (truncation error below 1e-16 relative). Inputs
// below -708 flush to zero.
OTPROTO_AVX2_TARGET inline __m256d exp_pd(__m256d x) {
  const __m256d lo = _mm256_set1_pd(-708.0);
  const __m256d hi = _mm256_set1_pd(709.0);
  const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(6.93147180369123816490e-01), x);
  r = _mm256_fnmadd_pd(k, _mm256_set1_pd(1.90821492927058770002e-10), r);

  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  const __m256i k64 = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(k));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(k64, _mm256_set1_epi64x(1023)), 52);
  const __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(underflow, result);
}

OTPROTO_AVX2_TARGET double dot_f32(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(load4(a + i), load4(b + i), acc0);
    acc1 = _mm256_fmadd_pd(load4(a + i + 4), load4(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(load4(a + i + 8), load4(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(load4(a + i + 12), load4(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(load4(a + i), load4(b + i), acc0);
  double sum = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) sum += static_cast<double>(a[i]) * b[i];
  return sum;
}

OTPROTO_AVX2_TARGET double dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

OTPROTO_AVX2_TARGET void axpy_f32(double a, const float* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, load4(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

OTPROTO_AVX2_TARGET void axpy_f64(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

OTPROTO_AVX2_TARGET double row_logsumexp(const float* m, const double* b, double scale,
                                         std::size_t n) {
  const __m256d vs = _mm256_set1_pd(scale);
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t j = 0;
  {
    __m256d vhi = _mm256_set1_pd(hi);
    for (; j + 4 <= n; j += 4) {
      vhi = _mm256_max_pd(vhi, _mm256_fnmadd_pd(load4(m + j), vs, _mm256_loadu_pd(b + j)));
    }
    hi = hmax(vhi);
    for (; j < n; ++j) {
      const double v = b[j] - m[j] * scale;
      if (v > hi) hi = v;
    }
  }
  const __m256d vhi = _mm256_set1_pd(hi);
  __m256d acc = _mm256_setzero_pd();
  j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d t = _mm256_fnmadd_pd(load4(m + j), vs, _mm256_loadu_pd(b + j));
    acc = _mm256_add_pd(acc, exp_pd(_mm256_sub_pd(t, vhi)));
  }
  double sum = hsum(acc);
  for (; j < n; ++j) sum += std::exp(b[j] - m[j] * scale - hi);
  return hi + std::log(sum);
}

OTPROTO_AVX2_TARGET void col_max(const float* m, double a, double scale, double* hi,
                                 std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vs = _mm256_set1_pd(scale);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d t = _mm256_fnmadd_pd(load4(m + j), vs, va);
    _mm256_storeu_pd(hi + j, _mm256_max_pd(_mm256_loadu_pd(hi + j), t));
  }
  for (; j < n; ++j) {
    const double t = a - m[j] * scale;
    if (t > hi[j]) hi[j] = t;
  }
}

OTPROTO_AVX2_TARGET void col_expsum(const float* m, double a, double scale, const double* hi,
                                    double* sum, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vs = _mm256_set1_pd(scale);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d t = _mm256_sub_pd(_mm256_fnmadd_pd(load4(m + j), vs, va),
                                    _mm256_loadu_pd(hi + j));
    _mm256_storeu_pd(sum + j, _mm256_add_pd(_mm256_loadu_pd(sum + j), exp_pd(t)));
  }
  for (; j < n; ++j) sum[j] += std::exp(a - m[j] * scale - hi[j]);
}

OTPROTO_AVX2_TARGET void plan_row(const float* m, double a, const double* b, double scale,
                                  float* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vs = _mm256_set1_pd(scale);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d t =
        _mm256_fnmadd_pd(load4(m + j), vs, _mm256_add_pd(va, _mm256_loadu_pd(b + j)));
    _mm_storeu_ps(out + j, _mm256_cvtpd_ps(exp_pd(t)));
  }
  for (; j < n; ++j) out[j] = static_cast<float>(std::exp(a + b[j] - m[j] * scale));
}

OTPROTO_AVX2_TARGET void gibbs_row(const float* m, double scale, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(-scale);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) _mm256_storeu_pd(out + j, exp_pd(_mm256_mul_pd(load4(m + j), vs)));
  for (; j < n; ++j) out[j] = std::exp(-m[j] * scale);
}

constexpr Kernels kAvx2{
    Backend::Avx2, dot_f32,    dot_f64,  axpy_f32, axpy_f64, row_logsumexp,
    col_max,       col_expsum, plan_row, gibbs_row,
};

}  // namespace

const Kernels* avx2_kernels() noexcept {
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &kAvx2 : nullptr;
}

}  // namespace otproto::simd

#else

namespace otproto::simd {
const Kernels* avx2_kernels() noexcept { return nullptr; }
}  // namespace otproto::simd

#endif
