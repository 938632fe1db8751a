#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "otproto/core.hpp"

namespace otproto {

/// Grid-resolution field of per-cell scores, row-major.
struct ScoreField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
};

struct CellAssignment {
  std::size_t prototype = 0;  // argmin prototype index
  double cost = 0.0;          // unnormalized fused cost at the argmin
  std::size_t proto_row = 0;  // 0-based lattice cell of that prototype
  std::size_t proto_col = 0;
};

/// Closest prototype of every grid cell under the bank's own alpha.
struct AssignmentMap {
  std::size_t height = 0;
  std::size_t width = 0;
  int scale_id = 0;
  double alpha = 0.0;
  std::vector<CellAssignment> cells;  // row-major

  const CellAssignment& at(std::size_t row, std::size_t col) const {
    return cells[row * width + col];
  }
};

struct GridScore {
  ScoreField field;
  AssignmentMap assignments;
};

/// Per cell, the minimum unnormalized fused cost over all prototypes with
/// alpha = protos.alpha(). Ties resolve to the lowest prototype index.
GridScore score_grid(const FeatureGrid& grid, const PrototypeSet& protos,
                     ZeroVectorPolicy zero_vectors = ZeroVectorPolicy::Error);

/// Bilinear resize with half-pixel centres (align_corners = false); source
/// positions are clamped to the valid range at the borders.
std::vector<double> bilinear_upsample(const ScoreField& field, std::size_t out_height,
                                      std::size_t out_width);

/// Separable Gaussian blur, kernel truncated at 4 sigma, reflected borders.
/// sigma <= 0 is a no-op.
void gaussian_smooth(std::vector<double>& image, std::size_t height, std::size_t width,
                     double sigma);

/// Global (alpha = 0) and local (alpha > 0) score fields of one scale.
struct ScaleFields {
  ScoreField global;
  ScoreField local;
};

/// A_l = upsample((global + local) / 2) per scale, summed over scales; the
/// image score is the max of the full-resolution map.
AnomalyMap aggregate(std::span<const ScaleFields> scales, std::size_t image_height,
                     std::size_t image_width, double smooth_sigma = 0.0);

/// Location of a training feature.
struct Provenance {
  std::string sample_id;
  std::size_t row = 0;  // 0-based grid cell
  std::size_t col = 0;
  double similarity = 0.0;
};

struct NamedGrid {
  std::string sample_id;
  const FeatureGrid* grid = nullptr;
};

/// For every prototype, the dataset feature of maximal cosine similarity.
/// Ties resolve to the smallest (sample_id, row, col).
std::vector<Provenance> reconstruct_prototypes(const PrototypeSet& protos,
                                               std::span<const NamedGrid> dataset,
                                               ZeroVectorPolicy zero_vectors =
                                                   ZeroVectorPolicy::Error);

/// Per test cell, the provenance of its assigned prototype. Throws
/// MissingProvenance when an assigned prototype has no entry.
struct RestoreRecipe {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Provenance> cells;  // row-major
};

RestoreRecipe restore_image_patches(const AssignmentMap& assignments,
                                    std::span<const Provenance> provenance);

}  // namespace otproto
