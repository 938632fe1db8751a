#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "otproto/cost.hpp"

namespace otproto {

struct SolverParams {
  double epsilon = 0.01;
  std::size_t max_iters = 100;
  double marginal_tol = 1e-6;
  // Log-sum-exp iterations. The direct (scaling) form underflows for small
  // epsilon and is meant for epsilon >= 0.1.
  bool log_domain = true;

  void validate() const;
};

/// Entropic transport plan between rows (uniform mass 1/rows) and columns
/// (uniform mass 1/cols), stored in float32.
class TransportPlan {
 public:
  TransportPlan(std::size_t rows, std::size_t cols, std::vector<float> values, double epsilon,
                std::size_t iterations, bool converged);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const float> values() const noexcept { return values_; }
  std::span<float> mutable_values() noexcept { return values_; }
  std::span<const float> row(std::size_t k) const noexcept {
    return std::span<const float>(values_).subspan(k * cols_, cols_);
  }
  float at(std::size_t k, std::size_t j) const noexcept { return values_[k * cols_ + j]; }

  double row_mass() const noexcept { return 1.0 / static_cast<double>(rows_); }
  double col_mass() const noexcept { return 1.0 / static_cast<double>(cols_); }
  double epsilon() const noexcept { return epsilon_; }
  std::size_t iterations() const noexcept { return iterations_; }
  bool converged() const noexcept { return converged_; }

  /// <M, T>, accumulated in double.
  double transport_cost(const CostMatrix& m) const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<float> values_;
  double epsilon_;
  std::size_t iterations_;
  bool converged_;
};

/// Sinkhorn-Knopp for min <M, T> - eps H(T) over uniform marginals.
///
/// Each iteration rescales rows then columns, so column marginals are exact
/// after every iteration; the stopping test is the L-inf row residual against
/// marginal_tol, evaluated on the plan of the previous iteration. Throws
/// NumericOverflow when the direct form underflows.
TransportPlan solve(const CostMatrix& m, const SolverParams& params);

struct MarginalResiduals {
  double row = 0.0;
  double col = 0.0;
};

/// L-inf norms of (T 1 - mu) and (T^t 1 - nu).
MarginalResiduals marginal_residuals(const TransportPlan& plan);

}  // namespace otproto
