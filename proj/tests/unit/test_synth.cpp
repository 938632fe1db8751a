#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "otproto/synth.hpp"
#include "support.hpp"

using namespace otproto;
using testing_support::error_code;

TEST_CASE("synthetic dataset layout") {
  SynthSpec spec;
  spec.scales = {2, 3};
  spec.noise = 0.0;
  auto data = synth_dataset(spec);
  REQUIRE(data.samples.size() == 30);
  CHECK(data.samples[0].grids.size() == 2);
  CHECK(data.samples[0].grids[1].height() == 4);
  CHECK(data.samples[0].grids[1].scale_id() == 3);

  // Without noise a normal grid is its band means exactly.
  const auto& g = data.samples[0].grids[0];
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& mean = data.cluster_means[0][i * 4 / 8];
    for (std::size_t d = 0; d < 16; ++d) CHECK(g.feature(i, 5)[d] == mean[d]);
  }

  std::size_t good = 0, logical = 0;
  for (const auto& s : data.samples) {
    if (s.split != io::Split::Test) {
      CHECK_FALSE(s.mask.has_value());
      continue;
    }
    REQUIRE(s.mask.has_value());
    CHECK(s.mask->height == 224);
    if (s.tag == "good") {
      ++good;
      CHECK_FALSE(s.mask->any_anomalous());
    } else {
      ++logical;
      CHECK(s.perturbed.size() == 8);  // two 2x2 blocks
      std::size_t marked = 0;
      for (auto v : s.mask->values) marked += v == 255;
      CHECK(marked == 8 * 28 * 28);
    }
  }
  CHECK(good == 5);
  CHECK(logical == 5);
}

TEST_CASE("logical anomalies only move normal features") {
  SynthSpec spec;
  spec.noise = 0.0;
  auto data = synth_dataset(spec);
  const auto& s = data.samples.back();
  REQUIRE(s.tag == "logical");
  const auto& g = s.grids[0];
  for (std::size_t c = 0; c < g.cells(); ++c) {
    bool matches_some_mean = false;
    for (const auto& mean : data.cluster_means[0]) {
      matches_some_mean |= std::equal(mean.begin(), mean.end(), g.feature(c).begin());
    }
    CHECK(matches_some_mean);
  }
}

TEST_CASE("seeded and validated") {
  SynthSpec spec;
  spec.kind = AnomalyKind::Structural;
  auto a = synth_dataset(spec);
  auto b = synth_dataset(spec);
  CHECK(std::equal(a.samples[25].grids[0].features().begin(),
                   a.samples[25].grids[0].features().end(),
                   b.samples[25].grids[0].features().begin()));
  CHECK(a.samples[25].tag == "structural");
  CHECK(a.samples[25].perturbed.size() == 4);

  spec.clusters = 1;
  CHECK(error_code([&] { synth_dataset(spec); }) == ErrorCode::InvalidConfig);
  spec.clusters = 4;
  spec.scales = {2, 3, 4, 5};
  CHECK(error_code([&] { synth_dataset(spec); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("written dataset reloads through the manifest") {
  auto dir = std::filesystem::temp_directory_path() / "otproto_test_synth";
  std::filesystem::remove_all(dir);
  SynthSpec spec;
  spec.train_count = 2;
  spec.test_count = 2;
  auto data = synth_dataset(spec);
  write_synth_dataset(data, dir);
  auto m = io::load_manifest(dir / "manifest.json");
  CHECK(m.samples.size() == 4);
  CHECK(*m.image_height == 224);
  CHECK(m.split(io::Split::Test)[1]->tag == "logical");
  auto g = io::read_feature_grid(m.samples[0].grids.at(2));
  CHECK(std::equal(g.features().begin(), g.features().end(),
                   data.samples[0].grids[0].features().begin()));
  std::filesystem::remove_all(dir);
}
