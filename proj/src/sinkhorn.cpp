#include "otproto/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "otproto/error.hpp"
#include "otproto/simd.hpp"

namespace otproto {

void SolverParams::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::InvalidConfig, "epsilon must be > 0");
  }
  if (max_iters == 0) throw Error(ErrorCode::InvalidConfig, "max_iters must be >= 1");
  if (!(marginal_tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "marginal_tol must be > 0");
}

TransportPlan::TransportPlan(std::size_t rows, std::size_t cols, std::vector<float> values,
                             double epsilon, std::size_t iterations, bool converged)
    : rows_(rows), cols_(cols), values_(std::move(values)), epsilon_(epsilon),
      iterations_(iterations), converged_(converged) {
  if (values_.size() != rows_ * cols_) {
    throw Error(ErrorCode::DimMismatch, "transport plan buffer has wrong length");
  }
}

double TransportPlan::transport_cost(const CostMatrix& m) const {
  if (m.rows() != rows_ || m.cols() != cols_) {
    throw Error(ErrorCode::DimMismatch, "cost matrix and plan shapes differ");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    total += static_cast<double>(values_[i]) * m.values()[i];
  }
  return total;
}

namespace {

// The plan is stored in float32, which moves each row sum by up to about
// 2^-24 of its mass. Stop early enough that the stored plan still meets tol.
double stopping_threshold(double tol, double row_mass) {
  return std::max(tol - 0x1p-23 * row_mass, 0.5 * tol);
}

TransportPlan solve_log(const CostMatrix& m, const SolverParams& params) {
  const auto& k = simd::active();
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  const double scale = 1.0 / params.epsilon;
  const double mu = 1.0 / static_cast<double>(rows);
  const double log_mu = std::log(mu);
  const double log_nu = -std::log(static_cast<double>(cols));

  // Potentials divided by epsilon.
  std::vector<double> a(rows, 0.0);
  std::vector<double> b(cols, 0.0);
  std::vector<double> lse(rows);
  std::vector<double> hi(cols);
  std::vector<double> sum(cols);
  const float* data = m.values().data();

  auto row_pass = [&] {
    for (std::size_t r = 0; r < rows; ++r) {
      lse[r] = k.row_logsumexp(data + r * cols, b.data(), scale, cols);
    }
  };
  auto row_residual = [&] {
    double worst = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      worst = std::max(worst, std::abs(std::exp(a[r] + lse[r]) - mu));
    }
    return worst;
  };

  const double stop_at = stopping_threshold(params.marginal_tol, mu);
  std::size_t iterations = 0;
  bool converged = false;
  while (true) {
    row_pass();
    if (iterations > 0 && row_residual() <= stop_at) {
      converged = true;
      break;
    }
    if (iterations == params.max_iters) break;

    for (std::size_t r = 0; r < rows; ++r) a[r] = log_mu - lse[r];

    std::fill(hi.begin(), hi.end(), -std::numeric_limits<double>::infinity());
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) k.col_max(data + r * cols, a[r], scale, hi.data(), cols);
    for (std::size_t r = 0; r < rows; ++r) {
      k.col_expsum(data + r * cols, a[r], scale, hi.data(), sum.data(), cols);
    }
    for (std::size_t j = 0; j < cols; ++j) b[j] = log_nu - (hi[j] + std::log(sum[j]));
    ++iterations;
  }

  std::vector<float> values(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    k.plan_row(data + r * cols, a[r], b.data(), scale, values.data() + r * cols, cols);
  }
  return TransportPlan(rows, cols, std::move(values), params.epsilon, iterations, converged);
}

TransportPlan solve_direct(const CostMatrix& m, const SolverParams& params) {
  const auto& k = simd::active();
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  const double scale = 1.0 / params.epsilon;
  const double mu = 1.0 / static_cast<double>(rows);
  const double nu = 1.0 / static_cast<double>(cols);

  std::vector<double> gibbs(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    k.gibbs_row(m.values().data() + r * cols, scale, gibbs.data() + r * cols, cols);
  }
  std::vector<double> u(rows, 1.0);
  std::vector<double> v(cols, 1.0);
  std::vector<double> kv(rows);
  std::vector<double> ktu(cols);

  auto check = [](double x) {
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw Error(ErrorCode::NumericOverflow,
                  "Gibbs kernel under/overflow; use log-domain iterations for this epsilon");
    }
  };
  auto row_residual = [&] {
    double worst = 0.0;
    for (std::size_t r = 0; r < rows; ++r) worst = std::max(worst, std::abs(u[r] * kv[r] - mu));
    return worst;
  };

  const double stop_at = stopping_threshold(params.marginal_tol, mu);
  std::size_t iterations = 0;
  bool converged = false;
  while (true) {
    for (std::size_t r = 0; r < rows; ++r) {
      kv[r] = k.dot_f64(gibbs.data() + r * cols, v.data(), cols);
      check(kv[r]);
    }
    if (iterations > 0 && row_residual() <= stop_at) {
      converged = true;
      break;
    }
    if (iterations == params.max_iters) break;

    for (std::size_t r = 0; r < rows; ++r) u[r] = mu / kv[r];
    std::fill(ktu.begin(), ktu.end(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) k.axpy_f64(u[r], gibbs.data() + r * cols, ktu.data(), cols);
    for (std::size_t j = 0; j < cols; ++j) {
      check(ktu[j]);
      v[j] = nu / ktu[j];
    }
    ++iterations;
  }

  std::vector<float> values(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      values[r * cols + j] = static_cast<float>(u[r] * gibbs[r * cols + j] * v[j]);
    }
  }
  return TransportPlan(rows, cols, std::move(values), params.epsilon, iterations, converged);
}

}  // namespace

TransportPlan solve(const CostMatrix& m, const SolverParams& params) {
  params.validate();
  for (float v : m.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "cost matrix entry is not finite");
  }
  return params.log_domain ? solve_log(m, params) : solve_direct(m, params);
}

MarginalResiduals marginal_residuals(const TransportPlan& plan) {
  std::vector<double> col_sums(plan.cols(), 0.0);
  MarginalResiduals res;
  for (std::size_t r = 0; r < plan.rows(); ++r) {
    double row_sum = 0.0;
    const auto row = plan.row(r);
    for (std::size_t j = 0; j < plan.cols(); ++j) {
      row_sum += row[j];
      col_sums[j] += row[j];
    }
    res.row = std::max(res.row, std::abs(row_sum - plan.row_mass()));
  }
  for (double s : col_sums) res.col = std::max(res.col, std::abs(s - plan.col_mass()));
  return res;
}

}  // namespace otproto
