#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "otproto/score.hpp"
#include "support.hpp"

using namespace otproto;
using namespace testing_support;

TEST_CASE("min-cost scoring matches brute force") {
  std::mt19937_64 rng(31);
  for (double alpha : {0.0, 0.3, 1.0}) {
    auto grid = random_grid(3, 4, 7, rng);
    auto protos = random_protos(2, 3, 4, 7, alpha, rng);
    auto out = score_grid(grid, protos);
    auto pw = weights_of(protos);
    auto z = cells_of(grid);
    for (std::size_t c = 0; c < grid.cells(); ++c) {
      auto want = oracle::nearest(z[c], c / 4, c % 4, pw, 3, 4, 2, alpha);
      CHECK(out.field.values[c] == doctest::Approx(want.cost).epsilon(1e-6));
      CHECK(out.assignments.cells[c].prototype == want.index);
      CHECK(out.assignments.cells[c].proto_row == want.index / 2 / 4);
      CHECK(out.assignments.cells[c].proto_col == want.index / 2 % 4);
    }
  }
}

TEST_CASE("ties go to the lowest prototype index") {
  auto grid = make_feature_grid(1, 1, 2, {1, 0}, 0);
  auto protos = PrototypeSet::from_weights(3, 1, 1, 2, 0.0, 0, {0, 1, 2, 0, 1, 0});
  auto out = score_grid(grid, protos);
  CHECK(out.assignments.cells[0].prototype == 1);
  CHECK(out.field.values[0] == doctest::Approx(0.0));
}

TEST_CASE("scoring a grid against its own features gives zero") {
  std::mt19937_64 rng(2);
  auto grid = random_grid(2, 2, 5, rng);
  std::vector<float> w(grid.features().begin(), grid.features().end());
  auto protos = PrototypeSet::from_weights(1, 2, 2, 5, 0.3, 0, w);
  auto out = score_grid(grid, protos);
  for (double v : out.field.values) CHECK(v == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("bilinear 2x2 to 4x4 stencil") {
  ScoreField f{2, 2, {0, 4, 8, 12}};
  auto up = bilinear_upsample(f, 4, 4);
  const std::vector<double> want{0, 1, 3, 4, 2, 3, 5, 6, 6, 7, 9, 10, 8, 9, 11, 12};
  CHECK(up == want);
}

TEST_CASE("bilinear resize matches the per-pixel oracle") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto [h, w, oh, ow] : std::vector<std::array<std::size_t, 4>>{
           {3, 5, 17, 9}, {1, 1, 4, 4}, {7, 7, 224, 224}, {4, 6, 2, 3}}) {
    ScoreField f{h, w, std::vector<double>(h * w)};
    for (auto& v : f.values) v = u(rng);
    auto got = bilinear_upsample(f, oh, ow);
    auto want = oracle::bilinear(f.values, h, w, oh, ow);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]));
  }
}

TEST_CASE("aggregation sums per-scale means") {
  // Constant fields upsample to constants, so the map is the closed form
  // (g2 + l2) / 2 + (g3 + l3) / 2.
  std::vector<ScaleFields> scales{
      {{4, 4, std::vector<double>(16, 0.5)}, {4, 4, std::vector<double>(16, 0.25)}},
      {{2, 2, std::vector<double>(4, 1.0)}, {2, 2, std::vector<double>(4, 0.5)}}};
  auto map = aggregate(scales, 8, 8);
  for (float v : map.scores()) CHECK(v == 0.375f + 0.75f);
  CHECK(map.image_score() == 1.125f);

  ScaleFields one{{2, 2, {0, 4, 8, 12}}, {2, 2, {0, 4, 8, 12}}};
  auto m1 = aggregate(std::span(&one, 1), 4, 4);
  CHECK(m1.at(1, 2) == 5.0f);
  CHECK(m1.image_score() == 12.0f);
}

TEST_CASE("gaussian smoothing") {
  std::vector<double> flat(25, 3.0);
  gaussian_smooth(flat, 5, 5, 1.5);
  for (double v : flat) CHECK(v == doctest::Approx(3.0));

  std::vector<double> impulse(49, 0.0);
  impulse[24] = 1.0;
  gaussian_smooth(impulse, 7, 7, 0.8);
  double sum = 0;
  for (double v : impulse) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(impulse[24] < 1.0);
  CHECK(impulse[23] == doctest::Approx(impulse[25]));

  auto copy = impulse;
  gaussian_smooth(copy, 7, 7, 0.0);
  CHECK(copy == impulse);
}

TEST_CASE("prototype provenance and restore recipe") {
  auto a = make_feature_grid(1, 2, 2, {1, 0, 0, 1}, 0);
  auto b = make_feature_grid(1, 2, 2, {1, 0.1f, -1, 0}, 0);
  auto protos = PrototypeSet::from_weights(1, 1, 2, 2, 0.0, 0, {2, 0.2f, 0, 3});
  std::vector<NamedGrid> dataset{{"b", &b}, {"a", &a}};
  auto prov = reconstruct_prototypes(protos, dataset);
  REQUIRE(prov.size() == 2);
  CHECK(prov[0].sample_id == "b");
  CHECK(prov[0].col == 0);
  CHECK(prov[0].similarity == doctest::Approx(1.0));
  CHECK(prov[1].sample_id == "a");
  CHECK(prov[1].col == 1);

  // Equal similarity in two samples resolves to the smaller id.
  std::vector<NamedGrid> twins{{"z", &a}, {"m", &a}};
  CHECK(reconstruct_prototypes(protos, twins)[1].sample_id == "m");

  auto test = make_feature_grid(1, 2, 2, {0, 1, 1, 0}, 0);
  auto scored = score_grid(test, protos);
  auto recipe = restore_image_patches(scored.assignments, prov);
  CHECK(recipe.cells[0].sample_id == "a");
  CHECK(recipe.cells[1].sample_id == "b");

  std::vector<Provenance> partial{prov[0]};
  CHECK(error_code([&] { restore_image_patches(scored.assignments, partial); }) ==
        ErrorCode::MissingProvenance);
}

TEST_CASE("shape mismatch is rejected") {
  std::mt19937_64 rng(0);
  auto grid = random_grid(2, 2, 3, rng);
  auto protos = random_protos(1, 2, 2, 4, 0.0, rng);
  CHECK(error_code([&] { score_grid(grid, protos); }) == ErrorCode::DimMismatch);
}
