#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "otproto/core.hpp"
#include "otproto/io.hpp"
#include "otproto/metrics.hpp"

namespace otproto {

enum class AnomalyKind { Structural, Logical };

/// Planted-anomaly dataset. Normal grids place K cluster means in horizontal
/// bands (cell row i belongs to cluster floor(i * K / H)) plus Gaussian noise.
/// Anomalous test grids perturb an s x s block of cells, s = max(1, H / 4):
///   logical    - a block in the top band is swapped with a block in the
///                bottom band, so every feature is normal but misplaced;
///   structural - a block is overwritten with fresh random vectors.
/// Scale l (0-based, in listing order) uses an (H >> l) x (W >> l) grid.
struct SynthSpec {
  std::size_t clusters = 4;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t dim = 16;
  double noise = 0.05;
  AnomalyKind kind = AnomalyKind::Logical;
  std::size_t train_count = 20;
  std::size_t test_count = 10;  // the first half is anomaly-free
  std::uint64_t seed = 0;
  std::vector<int> scales{2};
  std::size_t image_height = 224;
  std::size_t image_width = 224;
  std::string category = "synth";

  /// Throws InvalidConfig.
  void validate() const;
};

struct SynthSample {
  std::string id;
  io::Split split = io::Split::Train;
  std::string tag;                 // "good", "structural" or "logical"
  std::vector<FeatureGrid> grids;  // one per scale, in SynthSpec::scales order
  std::optional<Mask> mask;        // test samples only
  std::vector<std::size_t> perturbed;  // perturbed cells of the first scale
};

struct SynthDataset {
  SynthSpec spec;
  std::vector<std::vector<std::vector<float>>> cluster_means;  // [scale][cluster] -> D values
  std::vector<SynthSample> samples;
};

SynthDataset synth_dataset(const SynthSpec& spec);

/// Writes grids/, masks/ and manifest.json under `out_dir`; returns the manifest.
io::DatasetManifest write_synth_dataset(const SynthDataset& data,
                                        const std::filesystem::path& out_dir);

}  // namespace otproto
