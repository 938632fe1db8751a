#include "otproto/metrics.hpp"

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "otproto/error.hpp"

namespace otproto {

bool Mask::any_anomalous() const noexcept {
  return std::any_of(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; });
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::DimMismatch, "scores and labels differ in length");
  }
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw Error(ErrorCode::NonFinite, "score is not finite");
    positives += labels[i] != 0 ? 1 : 0;
  }
  const std::uint64_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::SingleClass, "AU-ROC needs both positive and negative samples");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the U statistic, so that ties stay integral.
  std::uint64_t u2 = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos_tie = 0;
    std::uint64_t neg_tie = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? pos_tie : neg_tie) += 1;
      ++j;
    }
    u2 += 2 * pos_tie * neg_below + pos_tie * neg_tie;
    neg_below += neg_tie;
    i = j;
  }
  return static_cast<double>(u2) /
         (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

std::vector<DefectRegion> extract_regions(const Mask& mask, const SaturationSpec& saturation) {
  if (mask.values.size() != mask.height * mask.width) {
    throw Error(ErrorCode::DimMismatch, "mask buffer has wrong length");
  }
  auto saturation_for = [&](int value, std::size_t area) {
    double sat = static_cast<double>(area);
    if (auto it = saturation.by_value.find(value); it != saturation.by_value.end()) {
      sat = it->second;
    } else if (saturation.all) {
      sat = *saturation.all;
    }
    if (!(sat > 0.0)) throw Error(ErrorCode::InvalidConfig, "saturation area must be > 0");
    return std::min(sat, static_cast<double>(area));
  };

  std::vector<DefectRegion> regions;
  std::array<std::vector<std::size_t>, 255> by_id{};
  for (std::size_t p = 0; p < mask.values.size(); ++p) {
    const std::uint8_t v = mask.values[p];
    if (v != 0 && v != 255) by_id[v].push_back(p);
  }
  for (int v = 1; v < 255; ++v) {
    if (by_id[v].empty()) continue;
    const std::size_t area = by_id[v].size();
    regions.push_back({std::move(by_id[v]), saturation_for(v, area)});
  }

  std::vector<std::uint8_t> seen(mask.values.size(), 0);
  const auto h = static_cast<std::ptrdiff_t>(mask.height);
  const auto w = static_cast<std::ptrdiff_t>(mask.width);
  for (std::size_t start = 0; start < mask.values.size(); ++start) {
    if (mask.values[start] != 255 || seen[start]) continue;
    std::vector<std::size_t> pixels;
    std::vector<std::size_t> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      pixels.push_back(p);
      const auto y = static_cast<std::ptrdiff_t>(p) / w;
      const auto x = static_cast<std::ptrdiff_t>(p) % w;
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const std::ptrdiff_t ny = y + dy;
          const std::ptrdiff_t nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const auto q = static_cast<std::size_t>(ny * w + nx);
          if (mask.values[q] == 255 && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
    }
    std::sort(pixels.begin(), pixels.end());
    const std::size_t area = pixels.size();
    regions.push_back({std::move(pixels), saturation_for(255, area)});
  }
  return regions;
}

SproCurve spro_curve(std::span<const AnomalyMap> maps,
                     std::span<const std::vector<DefectRegion>> regions, double fpr_cap) {
  if (!(fpr_cap > 0.0 && fpr_cap <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "fpr_cap must lie in (0, 1]");
  }
  if (maps.size() != regions.size()) {
    throw Error(ErrorCode::DimMismatch, "one region list per map is required");
  }

  struct Entry {
    float score;
    std::int64_t region;  // -1 for a region-free pixel
  };
  std::vector<Entry> entries;
  std::vector<double> saturation;
  std::uint64_t negatives = 0;
  for (std::size_t m = 0; m < maps.size(); ++m) {
    const auto scores = maps[m].scores();
    std::vector<std::int64_t> owner(scores.size(), -1);
    for (const auto& r : regions[m]) {
      if (r.pixels.empty() || !(r.saturation_area > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "defect region is empty or has no saturation area");
      }
      const auto id = static_cast<std::int64_t>(saturation.size());
      saturation.push_back(r.saturation_area);
      for (std::size_t p : r.pixels) {
        if (p >= scores.size()) throw Error(ErrorCode::DimMismatch, "region pixel outside the map");
        owner[p] = id;
      }
    }
    for (std::size_t p = 0; p < scores.size(); ++p) {
      entries.push_back({scores[p], owner[p]});
      negatives += owner[p] < 0 ? 1 : 0;
    }
  }
  if (saturation.empty()) throw Error(ErrorCode::NoRegions, "no defect regions to evaluate");
  if (negatives == 0) throw Error(ErrorCode::NoNegativePixels, "no anomaly-free pixels");

  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.score > b.score; });

  const double region_count = static_cast<double>(saturation.size());
  std::vector<std::uint64_t> detected(saturation.size(), 0);
  double overlap_sum = 0.0;
  std::uint64_t false_pos = 0;

  SproCurve curve;
  curve.fpr.push_back(0.0);
  curve.spro.push_back(0.0);
  for (std::size_t i = 0; i < entries.size();) {
    const float t = entries[i].score;
    for (; i < entries.size() && entries[i].score == t; ++i) {
      const std::int64_t r = entries[i].region;
      if (r < 0) {
        ++false_pos;
        continue;
      }
      const double before = std::min(static_cast<double>(detected[r]) / saturation[r], 1.0);
      ++detected[r];
      overlap_sum += std::min(static_cast<double>(detected[r]) / saturation[r], 1.0) - before;
    }
    curve.fpr.push_back(static_cast<double>(false_pos) / static_cast<double>(negatives));
    curve.spro.push_back(overlap_sum / region_count);
  }

  double area = 0.0;
  for (std::size_t k = 1; k < curve.fpr.size(); ++k) {
    const double x0 = curve.fpr[k - 1];
    const double x1 = curve.fpr[k];
    const double y0 = curve.spro[k - 1];
    const double y1 = curve.spro[k];
    if (x0 >= fpr_cap) break;
    if (x1 <= fpr_cap) {
      area += 0.5 * (x1 - x0) * (y0 + y1);
    } else {
      const double y_cap = y0 + (y1 - y0) * (fpr_cap - x0) / (x1 - x0);
      area += 0.5 * (fpr_cap - x0) * (y0 + y_cap);
      break;
    }
  }
  curve.area = area / fpr_cap;
  return curve;
}

bool EvalSample::anomalous() const {
  if (mask.any_anomalous()) return true;
  return !tag.empty() && tag != "good";
}

MetricSummary evaluate(std::span<const EvalSample> samples, double fpr_cap) {
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  MetricSummary out{samples.size(), kNaN, kNaN, kNaN};
  if (samples.empty()) return out;

  std::vector<double> image_scores;
  std::vector<std::uint8_t> image_labels;
  std::vector<double> pixel_scores;
  std::vector<std::uint8_t> pixel_labels;
  std::vector<AnomalyMap> maps;
  std::vector<std::vector<DefectRegion>> regions;
  for (const auto& s : samples) {
    if (s.map == nullptr) throw Error(ErrorCode::NotFound, "no anomaly map for '" + s.id + "'");
    if (s.map->height() != s.mask.height || s.map->width() != s.mask.width) {
      throw Error(ErrorCode::DimMismatch, "map and mask of '" + s.id + "' differ in size");
    }
    image_scores.push_back(s.map->image_score());
    image_labels.push_back(s.anomalous() ? 1 : 0);
    const auto scores = s.map->scores();
    for (std::size_t p = 0; p < scores.size(); ++p) {
      pixel_scores.push_back(scores[p]);
      pixel_labels.push_back(s.mask.values[p] != 0 ? 1 : 0);
    }
    maps.push_back(*s.map);
    regions.push_back(s.regions);
  }

  auto guarded = [&](auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SingleClass || e.code() == ErrorCode::NoRegions ||
          e.code() == ErrorCode::NoNegativePixels) {
        return kNaN;
      }
      throw;
    }
  };
  out.image_auroc = guarded([&] { return auroc(image_scores, image_labels); });
  out.pixel_auroc = guarded([&] { return auroc(pixel_scores, pixel_labels); });
  out.au_spro = guarded([&] { return spro_curve(maps, regions, fpr_cap).area; });
  return out;
}

CategoryReport evaluate_category(const std::string& category, std::span<const EvalSample> samples,
                                 double fpr_cap) {
  CategoryReport report{category, evaluate(samples, fpr_cap), {}};
  std::vector<std::string> tags;
  for (const auto& s : samples) {
    if (!s.tag.empty() && s.tag != "good" &&
        std::find(tags.begin(), tags.end(), s.tag) == tags.end()) {
      tags.push_back(s.tag);
    }
  }
  for (const auto& tag : tags) {
    std::vector<EvalSample> subset;
    for (const auto& s : samples) {
      if (s.tag == tag || !s.anomalous()) subset.push_back(s);
    }
    report.by_tag.emplace(tag, evaluate(subset, fpr_cap));
  }
  return report;
}

namespace {

std::string fmt_metric(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double nan_mean(const std::vector<double>& xs) {
  double sum = 0.0;
  std::size_t count = 0;
  for (double x : xs) {
    if (!std::isnan(x)) {
      sum += x;
      ++count;
    }
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

MetricSummary mean_summary(std::span<const CategoryReport> reports) {
  std::vector<double> img, pix, spro;
  std::size_t images = 0;
  for (const auto& r : reports) {
    img.push_back(r.all.image_auroc);
    pix.push_back(r.all.pixel_auroc);
    spro.push_back(r.all.au_spro);
    images += r.all.images;
  }
  return {images, nan_mean(img), nan_mean(pix), nan_mean(spro)};
}

}  // namespace

std::string format_report_text(std::span<const CategoryReport> reports, double fpr_cap) {
  std::string out;
  char line[256];
  char cap[32];
  std::snprintf(cap, sizeof cap, "au_spro@%.2f", fpr_cap);
  std::snprintf(line, sizeof line, "%-24s %-12s %7s %12s %12s %14s\n", "category", "tag", "images",
                "image_auroc", "pixel_auroc", cap);
  out += line;
  auto row = [&](const std::string& cat, const std::string& tag, const MetricSummary& m) {
    std::snprintf(line, sizeof line, "%-24s %-12s %7zu %12s %12s %14s\n", cat.c_str(), tag.c_str(),
                  m.images, fmt_metric(m.image_auroc).c_str(), fmt_metric(m.pixel_auroc).c_str(),
                  fmt_metric(m.au_spro).c_str());
    out += line;
  };
  for (const auto& r : reports) {
    row(r.category, "all", r.all);
    for (const auto& [tag, m] : r.by_tag) row(r.category, tag, m);
  }
  row("mean", "all", mean_summary(reports));
  return out;
}

std::string format_report_kv(std::span<const CategoryReport> reports, double fpr_cap) {
  std::string out;
  char cap[32];
  std::snprintf(cap, sizeof cap, "%.6f", fpr_cap);
  out += "fpr_cap=" + std::string(cap) + "\n";
  auto emit = [&](const std::string& prefix, const MetricSummary& m) {
    out += prefix + ".images=" + std::to_string(m.images) + "\n";
    out += prefix + ".image_auroc=" + fmt_metric(m.image_auroc) + "\n";
    out += prefix + ".pixel_auroc=" + fmt_metric(m.pixel_auroc) + "\n";
    out += prefix + ".au_spro=" + fmt_metric(m.au_spro) + "\n";
  };
  for (const auto& r : reports) {
    emit(r.category, r.all);
    for (const auto& [tag, m] : r.by_tag) emit(r.category + "." + tag, m);
  }
  emit("mean", mean_summary(reports));
  return out;
}

}  // namespace otproto
