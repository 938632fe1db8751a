#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "otproto/core.hpp"

namespace otproto {

/// Ground-truth mask at image resolution: 0 normal, 255 anomalous, 1..254 region ids.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  bool any_anomalous() const noexcept;
};

struct LabeledScores {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;  // 0 or 1
};

/// Mann-Whitney U / (#pos * #neg) with ties counted 1/2. Throws SingleClass.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);
inline double auroc(const LabeledScores& data) { return auroc(data.scores, data.labels); }

struct DefectRegion {
  std::vector<std::size_t> pixels;  // row-major indices into the image
  double saturation_area = 0.0;     // in pixels, 0 < saturation_area <= pixels.size()
};

/// Saturation overrides, in pixels, keyed by mask value. `all` applies to
/// every region without a keyed entry. Values larger than a region's area are
/// clamped to the area.
struct SaturationSpec {
  std::map<int, double> by_value;
  std::optional<double> all;
};

/// Regions of a mask: each id value 1..254 forms one region; pixels equal to
/// 255 are split into 8-connected components. Regions are ordered by mask
/// value, then by first pixel in row-major order.
std::vector<DefectRegion> extract_regions(const Mask& mask, const SaturationSpec& saturation = {});

struct SproCurve {
  std::vector<double> fpr;   // nondecreasing, starts at 0
  std::vector<double> spro;  // nondecreasing, starts at 0
  double area = 0.0;         // integral up to the cap divided by the cap
};

/// Saturated per-region overlap against the false-positive rate, sweeping every
/// distinct score as a threshold (a pixel is positive when score >= threshold).
/// FPR is measured over all region-free pixels of all images jointly; the area
/// is trapezoidal, interpolated at fpr_cap, and normalized by fpr_cap.
SproCurve spro_curve(std::span<const AnomalyMap> maps,
                     std::span<const std::vector<DefectRegion>> regions, double fpr_cap);

/// One test image prepared for evaluation.
struct EvalSample {
  std::string id;
  std::string tag;  // "good", "structural", "logical" or empty
  const AnomalyMap* map = nullptr;
  Mask mask;        // zero-filled when the sample has no annotation
  std::vector<DefectRegion> regions;

  bool anomalous() const;
};

/// NaN marks a metric that is undefined for the subset (e.g. one class only).
struct MetricSummary {
  std::size_t images = 0;
  double image_auroc = 0.0;
  double pixel_auroc = 0.0;
  double au_spro = 0.0;
};

MetricSummary evaluate(std::span<const EvalSample> samples, double fpr_cap);

struct CategoryReport {
  std::string category;
  MetricSummary all;
  // Per anomaly tag: that tag's images together with the good images.
  std::map<std::string, MetricSummary> by_tag;
};

CategoryReport evaluate_category(const std::string& category, std::span<const EvalSample> samples,
                                 double fpr_cap);

/// Fixed-width table: one row per category and tag, then the mean over categories.
std::string format_report_text(std::span<const CategoryReport> reports, double fpr_cap);

/// key=value lines, e.g. "breakfast_box.image_auroc=0.812000".
std::string format_report_kv(std::span<const CategoryReport> reports, double fpr_cap);

}  // namespace otproto
