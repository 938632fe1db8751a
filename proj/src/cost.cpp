#include "otproto/cost.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "otproto/error.hpp"
#include "otproto/simd.hpp"

namespace otproto {

void CostConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "alpha must lie in [0, 1]");
  }
}

double feature_cost(double dot, double norm_a, double norm_b, ZeroVectorPolicy policy) {
  if (norm_a < kNormFloor || norm_b < kNormFloor) {
    if (policy == ZeroVectorPolicy::Error) {
      throw Error(ErrorCode::ZeroVector, "cosine similarity undefined for a zero feature vector");
    }
    return 1.0;
  }
  return std::clamp(1.0 - dot / (norm_a * norm_b), 0.0, 2.0);
}

double fused_cost(const Positioned& embedding, const Positioned& prototype,
                  const CostConfig& cfg) {
  cfg.validate();
  if (embedding.feature.size() != prototype.feature.size()) {
    throw Error(ErrorCode::DimMismatch, "embedding and prototype dimensions differ");
  }
  const auto& k = simd::active();
  const std::size_t d = embedding.feature.size();
  const float* z = embedding.feature.data();
  const float* p = prototype.feature.data();
  const double fc = feature_cost(k.dot_f32(z, p, d), std::sqrt(k.dot_f32(z, z, d)),
                                 std::sqrt(k.dot_f32(p, p, d)), cfg.zero_vectors);
  return fuse(fc, squared_distance(embedding.coord, prototype.coord), cfg.alpha);
}

std::vector<double> row_norms(std::span<const float> data, std::size_t dim) {
  const auto& k = simd::active();
  const std::size_t count = dim == 0 ? 0 : data.size() / dim;
  std::vector<double> norms(count);
  for (std::size_t r = 0; r < count; ++r) {
    const float* v = data.data() + r * dim;
    norms[r] = std::sqrt(k.dot_f32(v, v, dim));
  }
  return norms;
}

StructCostTable::StructCostTable(std::size_t height, std::size_t width)
    : height_(height), width_(width) {
  if (height == 0 || width == 0) throw Error(ErrorCode::ZeroDim, "lattice must be non-empty");
  const std::size_t n = cells();
  values_.resize(n * n);
  for (std::size_t a = 0; a < n; ++a) {
    const LatticeCoord ca = lattice_coord(a / width, a % width, height, width);
    for (std::size_t b = 0; b < n; ++b) {
      const double v = squared_distance(ca, lattice_coord(b / width, b % width, height, width));
      values_[a * n + b] = v;
      max_ = std::max(max_, v);
    }
  }
}

CostMatrix CostMatrix::from_values(std::size_t rows, std::size_t cols, std::vector<float> values) {
  if (rows == 0 || cols == 0) throw Error(ErrorCode::ZeroDim, "cost matrix must be non-empty");
  if (values.size() != rows * cols) {
    throw Error(ErrorCode::DimMismatch, "cost buffer has wrong length");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "cost matrix entry is not finite");
  }
  CostMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.values_ = std::move(values);
  return m;
}

CostMatrix cost_matrix(std::span<const FeatureGrid> batch, const PrototypeSet& protos,
                       const CostConfig& cfg, const StructCostTable* table) {
  cfg.validate();
  if (batch.empty()) throw Error(ErrorCode::EmptyDataset, "cost matrix needs a non-empty batch");
  const std::size_t h = protos.height();
  const std::size_t w = protos.width();
  const std::size_t d = protos.dim();
  for (const auto& g : batch) {
    if (g.height() != h || g.width() != w || g.dim() != d) {
      throw Error(ErrorCode::DimMismatch,
                  "grid " + std::to_string(g.height()) + "x" + std::to_string(g.width()) + "x" +
                      std::to_string(g.dim()) + " does not match prototypes " +
                      std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(d));
    }
  }
  std::optional<StructCostTable> owned;
  if (table == nullptr) {
    owned.emplace(h, w);
    table = &*owned;
  } else if (table->height() != h || table->width() != w) {
    throw Error(ErrorCode::DimMismatch, "struct cost table does not match the lattice");
  }

  const auto& k = simd::active();
  const std::size_t cells = h * w;
  const std::size_t rows = batch.size() * cells;
  const std::size_t cols = protos.size();
  const std::vector<double> proto_norms = row_norms(protos.weights(), d);
  for (double nv : proto_norms) {
    if (nv < kNormFloor && cfg.zero_vectors == ZeroVectorPolicy::Error) {
      throw Error(ErrorCode::ZeroVector, "prototype with zero feature vector");
    }
  }

  CostMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.alpha_ = cfg.alpha;
  m.values_.resize(rows * cols);

  // Pass 1: raw feature costs, tracking the batch-wide max.
  float max_feat = 0.0f;
  const float* weights = protos.weights().data();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::vector<double> norms = row_norms(batch[b].features(), d);
    for (std::size_t c = 0; c < cells; ++c) {
      const float* z = batch[b].features().data() + c * d;
      float* out = m.values_.data() + (b * cells + c) * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        const double dot = k.dot_f32(z, weights + j * d, d);
        out[j] = static_cast<float>(feature_cost(dot, norms[c], proto_norms[j], cfg.zero_vectors));
        max_feat = std::max(max_feat, out[j]);
      }
    }
  }
  m.max_feat_ = max_feat;
  m.max_struct_ = table->max();

  // Pass 2: normalize and blend in the spatial term.
  const bool use_feat = m.max_feat_ >= kNormalizerFloor;
  const bool use_struct = m.max_struct_ >= kNormalizerFloor;
  const std::size_t n = protos.per_cell();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::span<const double> spatial = table->row(r % cells);
    float* out = m.values_.data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      const double feat = use_feat ? out[j] / m.max_feat_ : 0.0;
      const double st = use_struct ? spatial[j / n] / m.max_struct_ : 0.0;
      out[j] = static_cast<float>(fuse(feat, st, cfg.alpha));
    }
  }
  return m;
}

}  // namespace otproto
