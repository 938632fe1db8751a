#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "otproto/core.hpp"
#include "otproto/error.hpp"
#include "support.hpp"

using namespace otproto;

using testing_support::error_code;

TEST_CASE("lattice coordinates are 1-indexed and normalized") {
  auto c = lattice_coord(0, 0, 4, 8);
  CHECK(c.row == doctest::Approx(0.25));
  CHECK(c.col == doctest::Approx(0.125));
  c = lattice_coord(3, 7, 4, 8);
  CHECK(c.row == 1.0);
  CHECK(c.col == 1.0);
  CHECK(squared_distance({0.25, 0.5}, {0.5, 0.25}) == doctest::Approx(0.125));
}

TEST_CASE("feature grid validation") {
  CHECK(error_code([] { make_feature_grid(0, 2, 2, {}, 0); }) == ErrorCode::ZeroDim);
  CHECK(error_code([] { make_feature_grid(1, 2, 2, {1, 2, 3}, 0); }) == ErrorCode::DimMismatch);
  CHECK(error_code([] {
          make_feature_grid(1, 1, 2, {1, std::numeric_limits<float>::quiet_NaN()}, 0);
        }) == ErrorCode::NonFinite);

  auto g = make_feature_grid(2, 3, 2, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, 3);
  CHECK(g.cells() == 6);
  CHECK(g.scale_id() == 3);
  CHECK(g.feature(1, 2)[0] == 10);
  CHECK(g.feature(4)[1] == 9);
  CHECK(g.coord(5).row == 1.0);
}

TEST_CASE("prototype index layout") {
  auto p = PrototypeSet::from_weights(3, 2, 2, 1, 0.5, 0, std::vector<float>(12, 1.0f));
  CHECK(p.size() == 12);
  CHECK(p.index_of(1, 0, 2) == 8);
  CHECK(p.cell_of(8) == 2);
  CHECK(p.slot_of(8) == 2);
  CHECK(p.row_of(8) == 1);
  CHECK(p.col_of(8) == 0);
  CHECK(p.coord(11).row == 1.0);
  CHECK(error_code([] { PrototypeSet::from_weights(1, 1, 1, 1, 1.5, 0, {1}); }) ==
        ErrorCode::InvalidConfig);
}

TEST_CASE("prototype initialization is seeded") {
  auto a = init_prototypes(2, 3, 3, 4, 0.0, 7);
  auto b = init_prototypes(2, 3, 3, 4, 0.0, 7);
  auto c = init_prototypes(2, 3, 3, 4, 0.0, 8);
  CHECK(std::equal(a.weights().begin(), a.weights().end(), b.weights().begin()));
  CHECK_FALSE(std::equal(a.weights().begin(), a.weights().end(), c.weights().begin()));

  auto flat = init_prototypes(1, 1, 2, 3, 0.0, 1, 0.5, 0.0);
  for (float w : flat.weights()) CHECK(w == 0.5f);
}

TEST_CASE("anomaly map image score is the max") {
  auto m = AnomalyMap::from_scores(2, 2, {0.1f, 0.7f, 0.3f, 0.0f});
  CHECK(m.image_score() == 0.7f);
  CHECK(m.at(1, 0) == 0.3f);
  CHECK(error_code([] { AnomalyMap::from_scores(1, 1, {-1.0f}); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK(cfg.n == 16);
  CHECK(cfg.eta == 0.95);
  CHECK(cfg.alpha_local == 0.3);
  CHECK(cfg.epsilon == 0.01);
  CHECK(cfg.max_sinkhorn_iters == 100);
  CHECK(cfg.epochs == 50);
  CHECK(cfg.batch_size == 64);
  cfg.validate();
  cfg.batch_size = 8;
  CHECK(error_code([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
  cfg.batch_size = 64;
  cfg.epsilon = 0;
  CHECK(error_code([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("error messages carry the code name") {
  Error e(ErrorCode::MissingProvenance, "x");
  CHECK(std::string(e.what()) == "MissingProvenance: x");
}
