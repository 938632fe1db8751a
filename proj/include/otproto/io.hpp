#pragma once

// On-disk formats. All integers and floats are little-endian and fixed width,
// with no padding. Version 1 of every format stores float32 values; all
// arithmetic on them is carried out in float64.
//
//   FGRD  "FGRD" | u16 version | u16 scale_id | u32 H | u32 W | u32 D
//         | f32[H*W*D]  (row i outer, column j middle, feature d inner)
//   AMSK  "AMSK" | u16 version | u32 H | u32 W | u8[H*W]
//   PRDT  "PRDT" | u16 version | u16 scale_id | u32 n | u32 H | u32 W | u32 D
//         | f32 alpha | f32 eta | f32 epsilon | u32 epoch
//         | f32[n*H*W*D] | u32 rng_len | u8[rng_len]
//   AMAP  "AMAP" | u16 version | u32 H | u32 W | f32 image_score | f32[H*W]

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "otproto/core.hpp"
#include "otproto/metrics.hpp"

namespace otproto::io {

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kFgrdHeaderSize = 20;
inline constexpr std::size_t kAmskHeaderSize = 14;
inline constexpr std::size_t kAmapHeaderSize = 18;

using Bytes = std::vector<std::uint8_t>;

Bytes encode_feature_grid(const FeatureGrid& grid);
FeatureGrid decode_feature_grid(std::span<const std::uint8_t> bytes);

Bytes encode_mask(const Mask& mask);
Mask decode_mask(std::span<const std::uint8_t> bytes);

/// A prototype bank as persisted between epochs.
struct Checkpoint {
  PrototypeSet protos;
  float eta = 0.0f;
  float epsilon = 0.0f;
  std::uint32_t epoch = 0;
  std::string rng_state;  // textual std::mt19937_64 state
};

Bytes encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

Bytes encode_anomaly_map(const AnomalyMap& map);
AnomalyMap decode_anomaly_map(std::span<const std::uint8_t> bytes);

/// Throws NotFound / IoFailure.
Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

FeatureGrid read_feature_grid(const std::filesystem::path& path);
void write_feature_grid(const std::filesystem::path& path, const FeatureGrid& grid);
Mask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& mask);
Checkpoint read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
AnomalyMap read_anomaly_map(const std::filesystem::path& path);
void write_anomaly_map(const std::filesystem::path& path, const AnomalyMap& map);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

// ---------------------------------------------------------------------------
// Dataset manifest (JSON)
//
//   {
//     "category": "breakfast_box",
//     "image_height": 224, "image_width": 224,          (optional)
//     "samples": [
//       { "id": "train_000", "split": "train",
//         "grids": { "2": "train_000_s2.fgrd", "3": "train_000_s3.fgrd" } },
//       { "id": "test_000", "split": "test", "tag": "logical",
//         "grids": { ... }, "mask": "test_000.amsk",
//         "saturation": { "255": 310.0, "*": 500.0 } }
//     ]
//   }
//
// Relative paths resolve against the manifest's directory.

enum class Split { Train, Test };

struct ManifestSample {
  std::string id;
  Split split = Split::Train;
  std::map<int, std::filesystem::path> grids;  // scale id -> FGRD path
  std::optional<std::filesystem::path> mask;
  std::string tag;  // "", "good", "structural" or "logical"
  SaturationSpec saturation;
};

struct DatasetManifest {
  std::string category;
  std::optional<std::size_t> image_height;
  std::optional<std::size_t> image_width;
  std::vector<ManifestSample> samples;

  std::vector<int> scales() const;
  std::vector<const ManifestSample*> split(Split which) const;
};

/// Parses and validates referential integrity: unique ids, consistent scale
/// sets, existing files, and no masks on training samples.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir,
                               bool check_files = true);

/// Writes paths relative to the manifest's directory where possible.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// key=value configuration

/// Every tunable of a run. Each field is addressable by a key of the same name
/// in a config file and by a CLI flag --<key>.
struct RunConfig {
  TrainConfig train;
  std::size_t image_height = 224;
  std::size_t image_width = 224;
  double smooth_sigma = 0.0;
  double fpr_cap = 0.05;
  std::size_t workers = 1;
};

const std::vector<std::string>& config_keys();

/// Throws InvalidConfig for unknown keys or unparsable values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Lines of key=value; blank lines and '#' comments are ignored.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text);

RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

std::string format_config(const RunConfig& cfg);
std::string config_value(const RunConfig& cfg, std::string_view key);

}  // namespace otproto::io
