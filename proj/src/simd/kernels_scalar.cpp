#include <algorithm>
#include <cmath>
#include <limits>

#include "otproto/simd.hpp"

namespace otproto::simd {

namespace {

double dot_f32(const float* a, const float* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += static_cast<double>(a[i]) * b[i];
  return sum;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_f32(double a, const float* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpy_f64(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double row_logsumexp(const float* m, const double* b, double scale, std::size_t n) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) hi = std::max(hi, b[j] - m[j] * scale);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += std::exp(b[j] - m[j] * scale - hi);
  return hi + std::log(sum);
}

void col_max(const float* m, double a, double scale, double* hi, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) hi[j] = std::max(hi[j], a - m[j] * scale);
}

void col_expsum(const float* m, double a, double scale, const double* hi, double* sum,
                std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) sum[j] += std::exp(a - m[j] * scale - hi[j]);
}

void plan_row(const float* m, double a, const double* b, double scale, float* out,
              std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = static_cast<float>(std::exp(a + b[j] - m[j] * scale));
  }
}

void gibbs_row(const float* m, double scale, double* out, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) out[j] = std::exp(-m[j] * scale);
}

constexpr Kernels kScalar{
    Backend::Scalar, dot_f32,    dot_f64,    axpy_f32, axpy_f64, row_logsumexp,
    col_max,         col_expsum, plan_row,   gibbs_row,
};

}  // namespace

const Kernels& scalar_kernels() noexcept { return kScalar; }

}  // namespace otproto::simd
