#include "otproto/score.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "otproto/cost.hpp"
#include "otproto/error.hpp"
#include "otproto/simd.hpp"

namespace otproto {

GridScore score_grid(const FeatureGrid& grid, const PrototypeSet& protos,
                     ZeroVectorPolicy zero_vectors) {
  if (grid.height() != protos.height() || grid.width() != protos.width() ||
      grid.dim() != protos.dim()) {
    throw Error(ErrorCode::DimMismatch, "grid shape does not match the prototype set");
  }
  const auto& k = simd::active();
  const std::size_t d = grid.dim();
  const std::size_t np = protos.size();
  const double alpha = protos.alpha();
  const std::vector<double> proto_norms = row_norms(protos.weights(), d);
  const std::vector<double> norms = row_norms(grid.features(), d);

  GridScore out;
  out.field = {grid.height(), grid.width(), std::vector<double>(grid.cells())};
  out.assignments = {grid.height(), grid.width(), protos.scale_id(), alpha,
                     std::vector<CellAssignment>(grid.cells())};
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    const float* z = grid.feature(c).data();
    const LatticeCoord pos = grid.coord(c);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;
    for (std::size_t i = 0; i < np; ++i) {
      const double fc = feature_cost(k.dot_f32(z, protos.weight(i).data(), d), norms[c],
                                     proto_norms[i], zero_vectors);
      const double cost = fuse(fc, squared_distance(pos, protos.coord(i)), alpha);
      if (cost < best) {
        best = cost;
        best_index = i;
      }
    }
    out.field.values[c] = best;
    out.assignments.cells[c] = {best_index, best, protos.row_of(best_index),
                                protos.col_of(best_index)};
  }
  return out;
}

std::vector<double> bilinear_upsample(const ScoreField& field, std::size_t out_height,
                                      std::size_t out_width) {
  if (field.height == 0 || field.width == 0 || out_height == 0 || out_width == 0) {
    throw Error(ErrorCode::ZeroDim, "upsampling needs non-empty shapes");
  }
  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * ratio - 0.5);
      const auto lo = std::min(static_cast<std::size_t>(src), in - 1);
      t[o] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return t;
  };
  const std::vector<Tap> ty = taps(field.height, out_height);
  const std::vector<Tap> tx = taps(field.width, out_width);

  std::vector<double> out(out_height * out_width);
  for (std::size_t y = 0; y < out_height; ++y) {
    for (std::size_t x = 0; x < out_width; ++x) {
      const double top = (1.0 - tx[x].frac) * field.at(ty[y].lo, tx[x].lo) +
                         tx[x].frac * field.at(ty[y].lo, tx[x].hi);
      const double bottom = (1.0 - tx[x].frac) * field.at(ty[y].hi, tx[x].lo) +
                            tx[x].frac * field.at(ty[y].hi, tx[x].hi);
      out[y * out_width + x] = (1.0 - ty[y].frac) * top + ty[y].frac * bottom;
    }
  }
  return out;
}

void gaussian_smooth(std::vector<double>& image, std::size_t height, std::size_t width,
                     double sigma) {
  if (!(sigma > 0.0)) return;
  if (image.size() != height * width) {
    throw Error(ErrorCode::DimMismatch, "image buffer has wrong length");
  }
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  }
  const double norm = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (auto& v : kernel) v /= norm;

  auto reflect = [](std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return std::ptrdiff_t{0};
    const std::ptrdiff_t period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
  };
  const auto h = static_cast<std::ptrdiff_t>(height);
  const auto w = static_cast<std::ptrdiff_t>(width);
  std::vector<double> tmp(image.size());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        s += kernel[i + radius] * image[y * w + reflect(x + i, w)];
      }
      tmp[y * w + x] = s;
    }
  }
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        s += kernel[i + radius] * tmp[reflect(y + i, h) * w + x];
      }
      image[y * w + x] = s;
    }
  }
}

AnomalyMap aggregate(std::span<const ScaleFields> scales, std::size_t image_height,
                     std::size_t image_width, double smooth_sigma) {
  if (scales.empty()) throw Error(ErrorCode::EmptyDataset, "aggregation needs at least one scale");
  std::vector<double> total(image_height * image_width, 0.0);
  for (const auto& s : scales) {
    if (s.global.height != s.local.height || s.global.width != s.local.width ||
        s.global.values.size() != s.local.values.size()) {
      throw Error(ErrorCode::DimMismatch, "global and local fields of a scale differ in shape");
    }
    ScoreField mean{s.global.height, s.global.width, std::vector<double>(s.global.values.size())};
    for (std::size_t i = 0; i < mean.values.size(); ++i) {
      mean.values[i] = 0.5 * (s.global.values[i] + s.local.values[i]);
    }
    const std::vector<double> up = bilinear_upsample(mean, image_height, image_width);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += up[i];
  }
  gaussian_smooth(total, image_height, image_width, smooth_sigma);
  std::vector<float> scores(total.size());
  for (std::size_t i = 0; i < total.size(); ++i) {
    scores[i] = static_cast<float>(std::max(0.0, total[i]));
  }
  return AnomalyMap::from_scores(image_height, image_width, std::move(scores));
}

std::vector<Provenance> reconstruct_prototypes(const PrototypeSet& protos,
                                               std::span<const NamedGrid> dataset,
                                               ZeroVectorPolicy zero_vectors) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "no samples to search");
  const std::size_t d = protos.dim();
  for (const auto& s : dataset) {
    if (s.grid == nullptr || s.grid->dim() != d) {
      throw Error(ErrorCode::DimMismatch, "sample '" + s.sample_id + "' has the wrong dimension");
    }
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dataset[a].sample_id < dataset[b].sample_id;
  });

  const auto& k = simd::active();
  const std::vector<double> proto_norms = row_norms(protos.weights(), d);
  std::vector<std::vector<double>> sample_norms;
  for (std::size_t s : order) sample_norms.push_back(row_norms(dataset[s].grid->features(), d));

  std::vector<Provenance> result(protos.size());
  for (std::size_t i = 0; i < protos.size(); ++i) {
    const float* p = protos.weight(i).data();
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < order.size(); ++o) {
      const NamedGrid& s = dataset[order[o]];
      for (std::size_t c = 0; c < s.grid->cells(); ++c) {
        const double sim =
            1.0 - feature_cost(k.dot_f32(p, s.grid->feature(c).data(), d), proto_norms[i],
                               sample_norms[o][c], zero_vectors);
        if (sim > best) {
          best = sim;
          result[i] = {s.sample_id, c / s.grid->width(), c % s.grid->width(), sim};
        }
      }
    }
  }
  return result;
}

RestoreRecipe restore_image_patches(const AssignmentMap& assignments,
                                    std::span<const Provenance> provenance) {
  if (provenance.empty()) throw Error(ErrorCode::MissingProvenance, "no prototype provenance");
  RestoreRecipe recipe{assignments.height, assignments.width, {}};
  recipe.cells.reserve(assignments.cells.size());
  for (const auto& cell : assignments.cells) {
    if (cell.prototype >= provenance.size()) {
      throw Error(ErrorCode::MissingProvenance,
                  "prototype " + std::to_string(cell.prototype) + " has no provenance");
    }
    recipe.cells.push_back(provenance[cell.prototype]);
  }
  return recipe;
}

}  // namespace otproto
