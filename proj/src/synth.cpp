#include "otproto/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "otproto/error.hpp"

namespace otproto {

namespace {

struct Block {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t size = 0;
};

std::size_t band_of(std::size_t row, std::size_t clusters, std::size_t height) {
  return row * clusters / height;
}

std::string sample_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu", prefix, i);
  return buf;
}

// The block at a coarser scale covering the same image area.
Block scaled(const Block& b, std::size_t factor) {
  return {b.row / factor, b.col / factor, std::max<std::size_t>(1, b.size / factor)};
}

}  // namespace

void SynthSpec::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, "synth: " + msg); };
  if (height < 2 || width < 2) fail("grid must be at least 2x2");
  if (clusters < 2) fail("at least 2 clusters are required");
  if (dim == 0) fail("dim must be positive");
  if (!(noise >= 0.0)) fail("noise must be >= 0");
  if (train_count == 0) fail("train_count must be positive");
  if (scales.empty()) fail("at least one scale is required");
  const std::size_t factor = std::size_t{1} << (scales.size() - 1);
  if (height % factor != 0 || width % factor != 0 || height / factor < 2 || width / factor < 2) {
    fail("grid must halve to at least 2x2 at every scale");
  }
  if (clusters > height / factor) fail("more clusters than rows at the coarsest scale");
  const std::size_t s = std::max<std::size_t>(1, height / 4);
  if (s > width) fail("anomaly block wider than the grid");
  if (band_of(s - 1, clusters, height) >= band_of(height - s, clusters, height)) {
    fail("top and bottom blocks fall into the same cluster band");
  }
  if (image_height < height || image_width < width) fail("image smaller than the grid");
}

SynthDataset synth_dataset(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthDataset data;
  data.spec = spec;
  const std::size_t num_scales = spec.scales.size();
  data.cluster_means.resize(num_scales);
  for (auto& means : data.cluster_means) {
    means.assign(spec.clusters, std::vector<float>(spec.dim));
    for (auto& m : means) {
      for (auto& v : m) v = static_cast<float>(gauss(rng));
    }
  }

  auto normal_grid = [&](std::size_t l) {
    const std::size_t h = spec.height >> l;
    const std::size_t w = spec.width >> l;
    std::vector<float> f(h * w * spec.dim);
    for (std::size_t i = 0; i < h; ++i) {
      const auto& mean = data.cluster_means[l][band_of(i, spec.clusters, h)];
      for (std::size_t j = 0; j < w; ++j) {
        float* out = f.data() + (i * w + j) * spec.dim;
        for (std::size_t d = 0; d < spec.dim; ++d) {
          out[d] = static_cast<float>(mean[d] + spec.noise * gauss(rng));
        }
      }
    }
    return f;
  };

  for (std::size_t t = 0; t < spec.train_count; ++t) {
    SynthSample s;
    s.id = sample_id("train", t);
    s.split = io::Split::Train;
    s.tag = "good";
    for (std::size_t l = 0; l < num_scales; ++l) {
      s.grids.push_back(make_feature_grid(spec.height >> l, spec.width >> l, spec.dim,
                                          normal_grid(l), spec.scales[l]));
    }
    data.samples.push_back(std::move(s));
  }

  const std::size_t block = std::max<std::size_t>(1, spec.height / 4);
  const std::size_t good_tests = spec.test_count / 2;
  for (std::size_t t = 0; t < spec.test_count; ++t) {
    SynthSample s;
    s.id = sample_id("test", t);
    s.split = io::Split::Test;
    const bool anomalous = t >= good_tests;
    s.tag = !anomalous ? "good" : spec.kind == AnomalyKind::Logical ? "logical" : "structural";

    std::uniform_int_distribution<std::size_t> col_pick(0, (spec.width - block) / block);
    std::uniform_int_distribution<std::size_t> row_pick(0, (spec.height - block) / block);
    Block a{0, col_pick(rng) * block, block};
    Block b{spec.height - block, col_pick(rng) * block, block};
    if (anomalous && spec.kind == AnomalyKind::Structural) a.row = row_pick(rng) * block;

    for (std::size_t l = 0; l < num_scales; ++l) {
      const std::size_t w = spec.width >> l;
      std::vector<float> f = normal_grid(l);
      if (anomalous) {
        const std::size_t factor = std::size_t{1} << l;
        const Block sa = scaled(a, factor);
        const Block sb = scaled(b, factor);
        for (std::size_t di = 0; di < sa.size; ++di) {
          for (std::size_t dj = 0; dj < sa.size; ++dj) {
            float* pa = f.data() + ((sa.row + di) * w + sa.col + dj) * spec.dim;
            if (spec.kind == AnomalyKind::Logical) {
              float* pb = f.data() + ((sb.row + di) * w + sb.col + dj) * spec.dim;
              std::swap_ranges(pa, pa + spec.dim, pb);
            } else {
              for (std::size_t d = 0; d < spec.dim; ++d) pa[d] = static_cast<float>(gauss(rng));
            }
          }
        }
      }
      s.grids.push_back(make_feature_grid(spec.height >> l, w, spec.dim, std::move(f),
                                          spec.scales[l]));
    }

    if (anomalous) {
      auto mark = [&](const Block& blk) {
        for (std::size_t di = 0; di < blk.size; ++di) {
          for (std::size_t dj = 0; dj < blk.size; ++dj) {
            s.perturbed.push_back((blk.row + di) * spec.width + blk.col + dj);
          }
        }
      };
      mark(a);
      if (spec.kind == AnomalyKind::Logical) mark(b);
      std::sort(s.perturbed.begin(), s.perturbed.end());
    }

    Mask mask{spec.image_height, spec.image_width,
              std::vector<std::uint8_t>(spec.image_height * spec.image_width, 0)};
    for (std::size_t y = 0; y < spec.image_height; ++y) {
      const std::size_t row = y * spec.height / spec.image_height;
      for (std::size_t x = 0; x < spec.image_width; ++x) {
        const std::size_t cell = row * spec.width + x * spec.width / spec.image_width;
        if (std::binary_search(s.perturbed.begin(), s.perturbed.end(), cell)) {
          mask.values[y * spec.image_width + x] = 255;
        }
      }
    }
    s.mask = std::move(mask);
    data.samples.push_back(std::move(s));
  }
  return data;
}

io::DatasetManifest write_synth_dataset(const SynthDataset& data,
                                        const std::filesystem::path& out_dir) {
  io::DatasetManifest manifest;
  manifest.category = data.spec.category;
  manifest.image_height = data.spec.image_height;
  manifest.image_width = data.spec.image_width;
  for (const auto& s : data.samples) {
    io::ManifestSample ms;
    ms.id = s.id;
    ms.split = s.split;
    ms.tag = s.tag;
    for (const auto& g : s.grids) {
      const auto path = out_dir / "grids" / (s.id + "_s" + std::to_string(g.scale_id()) + ".fgrd");
      io::write_feature_grid(path, g);
      ms.grids[g.scale_id()] = path;
    }
    if (s.mask) {
      const auto path = out_dir / "masks" / (s.id + ".amsk");
      io::write_mask(path, *s.mask);
      ms.mask = path;
    }
    manifest.samples.push_back(std::move(ms));
  }
  io::write_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace otproto
