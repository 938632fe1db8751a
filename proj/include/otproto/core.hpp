#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace otproto {

using Rng = std::mt19937_64;

/// Normalized lattice position of a grid cell: (i / H, j / W) with 1-indexed i, j.
struct LatticeCoord {
  double row = 0.0;
  double col = 0.0;
};

/// Lattice coordinate of the cell stored at 0-based (row, col) in an H x W grid.
inline LatticeCoord lattice_coord(std::size_t row, std::size_t col, std::size_t height,
                                  std::size_t width) {
  return {static_cast<double>(row + 1) / static_cast<double>(height),
          static_cast<double>(col + 1) / static_cast<double>(width)};
}

inline double squared_distance(LatticeCoord a, LatticeCoord b) {
  const double dr = a.row - b.row;
  const double dc = a.col - b.col;
  return dr * dr + dc * dc;
}

/// One H x W grid of D-dimensional feature vectors, stored row-major with the
/// feature dimension innermost. Storage indices are 0-based; coordinates follow
/// the 1-indexed lattice convention.
class FeatureGrid {
 public:
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t cells() const noexcept { return height_ * width_; }
  int scale_id() const noexcept { return scale_id_; }

  std::span<const float> features() const noexcept { return features_; }
  std::span<const float> feature(std::size_t cell) const noexcept {
    return std::span<const float>(features_).subspan(cell * dim_, dim_);
  }
  std::span<const float> feature(std::size_t row, std::size_t col) const noexcept {
    return feature(row * width_ + col);
  }
  LatticeCoord coord(std::size_t row, std::size_t col) const noexcept {
    return lattice_coord(row, col, height_, width_);
  }
  LatticeCoord coord(std::size_t cell) const noexcept {
    return coord(cell / width_, cell % width_);
  }

 private:
  friend FeatureGrid make_feature_grid(std::size_t, std::size_t, std::size_t,
                                       std::vector<float>, int);
  FeatureGrid(std::size_t h, std::size_t w, std::size_t d, std::vector<float> f, int scale)
      : height_(h), width_(w), dim_(d), scale_id_(scale), features_(std::move(f)) {}

  std::size_t height_;
  std::size_t width_;
  std::size_t dim_;
  int scale_id_;
  std::vector<float> features_;
};

/// Throws ZeroDim when a dimension is zero, DimMismatch when the buffer length
/// is not H*W*D, and NonFinite on NaN/Inf entries.
FeatureGrid make_feature_grid(std::size_t height, std::size_t width, std::size_t dim,
                              std::vector<float> raw, int scale_id);

/// n prototypes per lattice cell. Prototype index layout:
///   index = ((row * W) + col) * n + slot
/// so cell (row, col) owns the contiguous run [cell * n, cell * n + n).
class PrototypeSet {
 public:
  static PrototypeSet from_weights(std::size_t n, std::size_t height, std::size_t width,
                                   std::size_t dim, double alpha, int scale_id,
                                   std::vector<float> weights);

  std::size_t per_cell() const noexcept { return n_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return n_ * height_ * width_; }
  double alpha() const noexcept { return alpha_; }
  int scale_id() const noexcept { return scale_id_; }

  std::span<const float> weights() const noexcept { return weights_; }
  std::span<float> mutable_weights() noexcept { return weights_; }
  std::span<const float> weight(std::size_t index) const noexcept {
    return std::span<const float>(weights_).subspan(index * dim_, dim_);
  }

  std::size_t cell_of(std::size_t index) const noexcept { return index / n_; }
  std::size_t slot_of(std::size_t index) const noexcept { return index % n_; }
  std::size_t row_of(std::size_t index) const noexcept { return cell_of(index) / width_; }
  std::size_t col_of(std::size_t index) const noexcept { return cell_of(index) % width_; }
  std::size_t index_of(std::size_t row, std::size_t col, std::size_t slot) const noexcept {
    return (row * width_ + col) * n_ + slot;
  }
  LatticeCoord coord(std::size_t index) const noexcept {
    return lattice_coord(row_of(index), col_of(index), height_, width_);
  }

 private:
  PrototypeSet(std::size_t n, std::size_t h, std::size_t w, std::size_t d, double alpha,
               int scale, std::vector<float> weights)
      : n_(n), height_(h), width_(w), dim_(d), alpha_(alpha), scale_id_(scale),
        weights_(std::move(weights)) {}

  std::size_t n_;
  std::size_t height_;
  std::size_t width_;
  std::size_t dim_;
  double alpha_;
  int scale_id_;
  std::vector<float> weights_;
};

/// Gaussian(mean, std) weights drawn from a generator seeded with `seed`.
PrototypeSet init_prototypes(std::size_t n, std::size_t height, std::size_t width,
                             std::size_t dim, double alpha, std::uint64_t seed,
                             double mean = 0.0, double stddev = 1.0, int scale_id = 0);

/// Per-pixel anomaly scores at image resolution. image_score is the exact max.
class AnomalyMap {
 public:
  static AnomalyMap from_scores(std::size_t height, std::size_t width, std::vector<float> scores);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::span<const float> scores() const noexcept { return scores_; }
  float at(std::size_t row, std::size_t col) const noexcept { return scores_[row * width_ + col]; }
  float image_score() const noexcept { return image_score_; }

 private:
  AnomalyMap(std::size_t h, std::size_t w, std::vector<float> s, float max)
      : height_(h), width_(w), scores_(std::move(s)), image_score_(max) {}

  std::size_t height_;
  std::size_t width_;
  std::vector<float> scores_;
  float image_score_;
};

enum class ZeroVectorPolicy {
  Error,  // throw ZeroVector
  Clamp,  // treat cosine similarity as 0 (feature cost 1)
};

struct TrainConfig {
  std::size_t n = 16;
  double eta = 0.95;
  double alpha_local = 0.3;
  double epsilon = 0.01;
  std::size_t max_sinkhorn_iters = 100;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  std::uint64_t rng_seed = 0;
  double init_std = 1.0;
  double init_mean = 0.0;

  double marginal_tol = 1e-6;
  bool log_domain = true;
  ZeroVectorPolicy zero_vectors = ZeroVectorPolicy::Error;
  // Relative change in mean assignment cost below which training stops early; 0 disables.
  double early_stop_tol = 0.0;

  /// Throws InvalidConfig. Batch size is checked against n here as well.
  void validate() const;
};

}  // namespace otproto
