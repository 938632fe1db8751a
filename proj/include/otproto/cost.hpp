#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "otproto/core.hpp"

namespace otproto {

/// Norm below which a feature vector counts as zero and cosine is undefined.
inline constexpr double kNormFloor = 1e-12;

/// Matrix-wide maxima below this are treated as zero and the component dropped.
inline constexpr double kNormalizerFloor = 1e-12;

struct CostConfig {
  double alpha = 0.0;
  ZeroVectorPolicy zero_vectors = ZeroVectorPolicy::Error;

  void validate() const;
};

/// A feature vector together with its lattice position: an embedding (z, c)
/// or a prototype (p, rho).
struct Positioned {
  std::span<const float> feature;
  LatticeCoord coord;
};

/// 1 - <a, b> / (|a| |b|), clamped to [0, 2]. Zero norms follow `policy`.
double feature_cost(double dot, double norm_a, double norm_b, ZeroVectorPolicy policy);

inline double fuse(double feature_term, double spatial_term, double alpha) {
  return (1.0 - alpha) * feature_term + alpha * spatial_term;
}

/// (1 - alpha)(1 - cos(z, p)) + alpha |c - rho|^2, unnormalized.
double fused_cost(const Positioned& embedding, const Positioned& prototype,
                  const CostConfig& cfg);

/// Euclidean norms of consecutive `dim`-sized rows of `data`.
std::vector<double> row_norms(std::span<const float> data, std::size_t dim);

/// Squared lattice distances between every pair of cells of an H x W grid,
/// indexed by row-major cell index.
class StructCostTable {
 public:
  StructCostTable(std::size_t height, std::size_t width);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t cells() const noexcept { return height_ * width_; }
  double at(std::size_t cell_a, std::size_t cell_b) const noexcept {
    return values_[cell_a * cells() + cell_b];
  }
  std::span<const double> row(std::size_t cell) const noexcept {
    return std::span<const double>(values_).subspan(cell * cells(), cells());
  }
  double max() const noexcept { return max_; }

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<double> values_;
  double max_ = 0.0;
};

inline StructCostTable struct_cost_table(std::size_t height, std::size_t width) {
  return StructCostTable(height, width);
}

/// Dense rows x cols cost matrix in float32. Rows enumerate batch-major then
/// row-major grid order: row = b * H * W + i * W + j.
class CostMatrix {
 public:
  /// Wraps an arbitrary finite matrix; used for generic transport problems.
  static CostMatrix from_values(std::size_t rows, std::size_t cols, std::vector<float> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const float> values() const noexcept { return values_; }
  std::span<const float> row(std::size_t k) const noexcept {
    return std::span<const float>(values_).subspan(k * cols_, cols_);
  }
  float at(std::size_t k, std::size_t j) const noexcept { return values_[k * cols_ + j]; }

  double alpha() const noexcept { return alpha_; }
  double max_feat() const noexcept { return max_feat_; }
  double max_struct() const noexcept { return max_struct_; }

 private:
  friend CostMatrix cost_matrix(std::span<const FeatureGrid>, const PrototypeSet&,
                                const CostConfig&, const StructCostTable*);
  CostMatrix() = default;

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> values_;
  double alpha_ = 0.0;
  double max_feat_ = 0.0;
  double max_struct_ = 0.0;
};

/// Batch-normalized fused cost:
///   M = (1 - alpha) M_feat / max(M_feat) + alpha M_struct / max(M_struct)
/// with both maxima taken over the current batch. A component whose max is
/// below kNormalizerFloor contributes zero. `table` may be passed to reuse a
/// precomputed lattice table; it must match the grid dimensions.
CostMatrix cost_matrix(std::span<const FeatureGrid> batch, const PrototypeSet& protos,
                       const CostConfig& cfg, const StructCostTable* table = nullptr);

}  // namespace otproto
