#pragma once

// Inner-loop kernels shared by the cost, transport and update code. Every
// kernel has a scalar reference implementation; an AVX2+FMA variant is picked
// at runtime when the CPU supports it. Storage is float32, accumulation is
// float64 in both variants.

#include <cstddef>
#include <string_view>

namespace otproto::simd {

enum class Backend { Scalar, Avx2 };

std::string_view to_string(Backend backend) noexcept;

struct Kernels {
  Backend backend;

  // sum_i a[i] * b[i]
  double (*dot_f32)(const float* a, const float* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);

  // y[i] += a * x[i]
  void (*axpy_f32)(double a, const float* x, double* y, std::size_t n);
  void (*axpy_f64)(double a, const double* x, double* y, std::size_t n);

  // log sum_j exp(b[j] - m[j] * scale)
  double (*row_logsumexp)(const float* m, const double* b, double scale, std::size_t n);

  // hi[j] = max(hi[j], a - m[j] * scale)
  void (*col_max)(const float* m, double a, double scale, double* hi, std::size_t n);

  // sum[j] += exp(a - m[j] * scale - hi[j])
  void (*col_expsum)(const float* m, double a, double scale, const double* hi, double* sum,
                     std::size_t n);

  // out[j] = exp(a + b[j] - m[j] * scale)
  void (*plan_row)(const float* m, double a, const double* b, double scale, float* out,
                   std::size_t n);

  // out[j] = exp(-m[j] * scale)
  void (*gibbs_row)(const float* m, double scale, double* out, std::size_t n);
};

const Kernels& scalar_kernels() noexcept;

/// nullptr when the AVX2 variant is not compiled in or the CPU lacks AVX2/FMA.
const Kernels* avx2_kernels() noexcept;

/// Kernels in use. Chosen on first use: AVX2 when available, unless the
/// OTPROTO_SIMD environment variable is set to "scalar".
const Kernels& active() noexcept;

/// Throws std::invalid_argument if the backend is unavailable on this CPU.
void set_backend(Backend backend);

}  // namespace otproto::simd
