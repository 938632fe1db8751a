#include "otproto/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "otproto/error.hpp"

namespace otproto {

namespace {

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace

FeatureGrid make_feature_grid(std::size_t height, std::size_t width, std::size_t dim,
                              std::vector<float> raw, int scale_id) {
  if (height == 0 || width == 0 || dim == 0) {
    throw Error(ErrorCode::ZeroDim, "feature grid dimensions must be positive");
  }
  if (raw.size() != height * width * dim) {
    throw Error(ErrorCode::DimMismatch, "feature buffer holds " + std::to_string(raw.size()) +
                                            " values, expected " +
                                            std::to_string(height * width * dim));
  }
  if (!all_finite(raw)) {
    throw Error(ErrorCode::NonFinite, "feature grid contains NaN or Inf");
  }
  return FeatureGrid(height, width, dim, std::move(raw), scale_id);
}

PrototypeSet PrototypeSet::from_weights(std::size_t n, std::size_t height, std::size_t width,
                                        std::size_t dim, double alpha, int scale_id,
                                        std::vector<float> weights) {
  if (n == 0 || height == 0 || width == 0 || dim == 0) {
    throw Error(ErrorCode::ZeroDim, "prototype set dimensions must be positive");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "alpha must lie in [0, 1]");
  }
  if (weights.size() != n * height * width * dim) {
    throw Error(ErrorCode::DimMismatch, "prototype weight buffer has wrong length");
  }
  if (!all_finite(weights)) {
    throw Error(ErrorCode::NonFinite, "prototype weights contain NaN or Inf");
  }
  return PrototypeSet(n, height, width, dim, alpha, scale_id, std::move(weights));
}

PrototypeSet init_prototypes(std::size_t n, std::size_t height, std::size_t width,
                             std::size_t dim, double alpha, std::uint64_t seed, double mean,
                             double stddev, int scale_id) {
  if (n == 0 || height == 0 || width == 0 || dim == 0) {
    throw Error(ErrorCode::ZeroDim, "prototype set dimensions must be positive");
  }
  if (!(stddev >= 0.0) || !std::isfinite(mean)) {
    throw Error(ErrorCode::InvalidConfig, "init_std must be >= 0 and init_mean finite");
  }
  std::vector<float> weights(n * height * width * dim);
  if (stddev == 0.0) {
    std::fill(weights.begin(), weights.end(), static_cast<float>(mean));
  } else {
    Rng rng(seed);
    std::normal_distribution<double> gauss(mean, stddev);
    for (auto& w : weights) w = static_cast<float>(gauss(rng));
  }
  return PrototypeSet::from_weights(n, height, width, dim, alpha, scale_id, std::move(weights));
}

AnomalyMap AnomalyMap::from_scores(std::size_t height, std::size_t width,
                                   std::vector<float> scores) {
  if (height == 0 || width == 0) throw Error(ErrorCode::ZeroDim, "anomaly map is empty");
  if (scores.size() != height * width) {
    throw Error(ErrorCode::DimMismatch, "anomaly map buffer has wrong length");
  }
  for (float s : scores) {
    if (!std::isfinite(s)) throw Error(ErrorCode::NonFinite, "anomaly score is not finite");
    if (s < 0.0f) throw Error(ErrorCode::InvalidConfig, "anomaly score is negative");
  }
  const float max = *std::max_element(scores.begin(), scores.end());
  return AnomalyMap(height, width, std::move(scores), max);
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (n == 0) fail("n must be >= 1");
  if (!(eta >= 0.0 && eta <= 1.0)) fail("eta must lie in [0, 1]");
  if (!(alpha_local >= 0.0 && alpha_local <= 1.0)) fail("alpha_local must lie in [0, 1]");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail("epsilon must be > 0");
  if (max_sinkhorn_iters == 0) fail("max_sinkhorn_iters must be >= 1");
  if (batch_size < n) {
    fail("batch_size (" + std::to_string(batch_size) + ") must be >= n (" + std::to_string(n) +
         ")");
  }
  if (!(init_std >= 0.0)) fail("init_std must be >= 0");
  if (!(marginal_tol > 0.0)) fail("marginal_tol must be > 0");
  if (!(early_stop_tol >= 0.0)) fail("early_stop_tol must be >= 0");
}

}  // namespace otproto
