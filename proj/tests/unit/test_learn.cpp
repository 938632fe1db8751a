#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "otproto/learn.hpp"
#include "support.hpp"

using namespace otproto;
using namespace testing_support;

namespace {

std::vector<ScaleData> noise_scale(std::size_t count, std::size_t h, std::size_t w, std::size_t d,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ScaleData s{2, {}};
  for (std::size_t i = 0; i < count; ++i) s.grids.push_back(random_grid(h, w, d, rng, 2));
  return {s};
}

bool same_bits(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("EMA update matches the double-loop oracle") {
  std::mt19937_64 rng(21);
  for (double eta : {0.0, 0.5, 0.95}) {
    auto protos = random_protos(2, 2, 2, 6, 0.0, rng);
    std::vector<FeatureGrid> batch{random_grid(2, 2, 6, rng), random_grid(2, 2, 6, rng)};
    auto m = cost_matrix(batch, protos, {0.0});
    auto plan = solve(m, {0.1, 200});

    oracle::Vecs z;
    for (const auto& g : batch) {
      for (auto& v : cells_of(g)) z.push_back(v);
    }
    std::vector<double> t(plan.values().begin(), plan.values().end());
    auto want = oracle::ema(weights_of(protos), t, z, eta);

    ema_update(protos, plan, batch, eta);
    for (std::size_t i = 0; i < protos.size(); ++i) {
      for (std::size_t d = 0; d < 6; ++d) {
        CHECK(protos.weight(i)[d] == doctest::Approx(want[i][d]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("eta = 1 leaves prototypes bitwise unchanged") {
  std::mt19937_64 rng(1);
  auto protos = random_protos(3, 2, 3, 4, 0.3, rng);
  const std::vector<float> before(protos.weights().begin(), protos.weights().end());
  std::vector<FeatureGrid> batch;
  for (int b = 0; b < 4; ++b) batch.push_back(random_grid(2, 3, 4, rng));
  auto plan = solve(cost_matrix(batch, protos, {0.3}), {0.01, 100});
  ema_update(protos, plan, batch, 1.0);
  CHECK(same_bits(protos.weights(), before));
}

TEST_CASE("eta = 0 with a constant batch collapses onto the constant") {
  std::mt19937_64 rng(2);
  auto protos = random_protos(2, 2, 2, 3, 0.0, rng);
  const std::vector<float> z{0.25f, -1.5f, 2.0f};
  std::vector<float> raw;
  for (int c = 0; c < 4; ++c) raw.insert(raw.end(), z.begin(), z.end());
  std::vector<FeatureGrid> batch(3, make_feature_grid(2, 2, 3, raw, 0));
  auto plan = solve(cost_matrix(batch, protos, {0.0}), {0.01, 100});
  ema_update(protos, plan, batch, 0.0);
  for (std::size_t i = 0; i < protos.size(); ++i) {
    for (std::size_t d = 0; d < 3; ++d) CHECK(std::abs(protos.weight(i)[d] - z[d]) <= 1e-6);
  }
}

TEST_CASE("alpha = 1 pins each prototype to its own cell mean") {
  auto data = noise_scale(5, 2, 2, 4, 8);
  TrainConfig cfg;
  cfg.n = 1;
  cfg.eta = 0.0;
  cfg.alpha_local = 1.0;
  cfg.epsilon = 0.01;
  cfg.epochs = 1;
  cfg.batch_size = 5;
  auto state = train(data, cfg);
  const Bank* local = state.find(2, 1.0);
  REQUIRE(local != nullptr);
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t d = 0; d < 4; ++d) {
      double mean = 0;
      for (const auto& g : data[0].grids) mean += g.feature(c)[d];
      mean /= 5;
      CHECK(local->protos.weight(c)[d] == doctest::Approx(mean).epsilon(1e-5));
    }
  }
}

TEST_CASE("banks, diagnostics and determinism") {
  auto data = noise_scale(10, 3, 3, 5, 3);
  TrainConfig cfg;
  cfg.n = 2;
  cfg.batch_size = 4;  // 10 = 4 + 4 + 2; the trailing 2 still covers n
  cfg.epochs = 3;
  cfg.rng_seed = 42;
  std::size_t callbacks = 0;
  auto a = train(data, cfg, [&](const TrainState&) { ++callbacks; });
  CHECK(callbacks == 3);
  REQUIRE(a.banks.size() == 2);
  CHECK(a.banks[0].protos.alpha() == 0.0);
  CHECK(a.banks[1].protos.alpha() == static_cast<double>(0.3f));
  CHECK(a.batches == 9);
  CHECK(a.banks[0].diagnostics.mean_cost.size() == 3);
  CHECK(a.banks[0].diagnostics.converged_fraction.size() == 3);

  auto b = train(data, cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(same_bits(a.banks[i].protos.weights(), b.banks[i].protos.weights()));
  }
}

TEST_CASE("a trailing batch smaller than n is dropped") {
  auto data = noise_scale(9, 2, 2, 3, 5);
  TrainConfig cfg;
  cfg.n = 2;
  cfg.batch_size = 4;  // 9 = 4 + 4 + 1
  cfg.epochs = 1;
  auto s = train(data, cfg);
  CHECK(s.batches == 2);
}

TEST_CASE("resuming from a saved state matches an uninterrupted run") {
  auto data = noise_scale(8, 2, 3, 4, 6);
  TrainConfig cfg;
  cfg.n = 2;
  cfg.batch_size = 4;
  cfg.epochs = 4;
  auto full = train(data, cfg);

  cfg.epochs = 2;
  auto part = train(data, cfg);
  cfg.epochs = 4;
  train(part, data, cfg);
  for (std::size_t i = 0; i < full.banks.size(); ++i) {
    CHECK(same_bits(full.banks[i].protos.weights(), part.banks[i].protos.weights()));
  }
}

TEST_CASE("early stop on a plateau") {
  auto data = noise_scale(4, 2, 2, 3, 7);
  TrainConfig cfg;
  cfg.n = 1;
  cfg.batch_size = 4;
  cfg.epochs = 200;
  cfg.eta = 0.5;
  cfg.early_stop_tol = 1e-3;
  auto s = train(data, cfg);
  CHECK(s.stopped_early);
  CHECK(s.epoch < 200);
}

TEST_CASE("augment hook sees every batch") {
  auto data = noise_scale(6, 2, 2, 3, 9);
  TrainConfig cfg;
  cfg.n = 1;
  cfg.batch_size = 3;
  cfg.epochs = 2;
  std::size_t calls = 0;
  train(data, cfg, {}, [&](int scale, std::vector<FeatureGrid>& batch, Rng&) {
    CHECK(scale == 2);
    CHECK(batch.size() == 3);
    ++calls;
  });
  CHECK(calls == 4);
}

TEST_CASE("training input errors") {
  TrainConfig cfg;
  cfg.n = 1;
  cfg.batch_size = 1;
  CHECK(error_code([&] { train(std::vector<ScaleData>{}, cfg); }) == ErrorCode::EmptyDataset);
  auto data = noise_scale(2, 2, 2, 3, 1);
  std::mt19937_64 rng(0);
  data[0].grids.push_back(random_grid(3, 2, 3, rng, 2));
  CHECK(error_code([&] { train(data, cfg); }) == ErrorCode::DimMismatch);
}
