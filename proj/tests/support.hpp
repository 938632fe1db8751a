#pragma once

// Random inputs shared by the unit and acceptance tests, plus converters from
// library types to the plain vectors the oracles take.

#include <optional>
#include <random>
#include <vector>

#include "otproto/core.hpp"
#include "otproto/error.hpp"
#include "oracles/oracles.hpp"

namespace testing_support {

// Code of the otproto::Error thrown by fn, or nullopt when it returns normally.
template <class F>
std::optional<otproto::ErrorCode> error_code(F&& fn) {
  try {
    fn();
  } catch (const otproto::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline std::vector<float> gaussian(std::size_t count, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<float> v(count);
  for (auto& x : v) x = static_cast<float>(g(rng));
  return v;
}

inline otproto::FeatureGrid random_grid(std::size_t h, std::size_t w, std::size_t d,
                                        std::mt19937_64& rng, int scale = 0) {
  return otproto::make_feature_grid(h, w, d, gaussian(h * w * d, rng), scale);
}

inline otproto::PrototypeSet random_protos(std::size_t n, std::size_t h, std::size_t w,
                                           std::size_t d, double alpha, std::mt19937_64& rng) {
  return otproto::PrototypeSet::from_weights(n, h, w, d, alpha, 0, gaussian(n * h * w * d, rng));
}

inline oracle::Vecs cells_of(const otproto::FeatureGrid& g) {
  oracle::Vecs out;
  for (std::size_t c = 0; c < g.cells(); ++c) {
    auto f = g.feature(c);
    out.emplace_back(f.begin(), f.end());
  }
  return out;
}

inline oracle::Vecs weights_of(const otproto::PrototypeSet& p) {
  oracle::Vecs out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto f = p.weight(i);
    out.emplace_back(f.begin(), f.end());
  }
  return out;
}

}  // namespace testing_support
