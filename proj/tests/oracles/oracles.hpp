#pragma once

// Reference computations used by the tests. Nothing here includes library
// headers: each oracle is a direct transcription of its definition in plain
// loops over std::vector, so it shares no code with what it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

namespace oracle {

inline double cosine_cost(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double c = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, 0.0, 2.0);
}

// Cell (i, j) of an H x W grid, 0-based, sits at ((i + 1) / H, (j + 1) / W).
inline double lattice_sq(std::size_t i1, std::size_t j1, std::size_t i2, std::size_t j2,
                         std::size_t h, std::size_t w) {
  const double dr = double(i1 + 1) / double(h) - double(i2 + 1) / double(h);
  const double dc = double(j1 + 1) / double(w) - double(j2 + 1) / double(w);
  return dr * dr + dc * dc;
}

inline double fused(const std::vector<double>& z, std::size_t zi, std::size_t zj,
                    const std::vector<double>& p, std::size_t pi, std::size_t pj, std::size_t h,
                    std::size_t w, double alpha) {
  return (1 - alpha) * cosine_cost(z, p) + alpha * lattice_sq(zi, zj, pi, pj, h, w);
}

// feats[b][cell] -> D values; protos[k] -> D values, k = cell * n + slot.
using Vecs = std::vector<std::vector<double>>;

inline std::vector<double> normalized_cost(const std::vector<Vecs>& feats, const Vecs& protos,
                                           std::size_t h, std::size_t w, std::size_t n,
                                           double alpha) {
  const std::size_t cells = h * w;
  std::vector<double> fc, sc;
  for (const auto& grid : feats) {
    for (std::size_t c = 0; c < cells; ++c) {
      for (std::size_t k = 0; k < protos.size(); ++k) {
        const std::size_t pc = k / n;
        fc.push_back(cosine_cost(grid[c], protos[k]));
        sc.push_back(lattice_sq(c / w, c % w, pc / w, pc % w, h, w));
      }
    }
  }
  const double fmax = *std::max_element(fc.begin(), fc.end());
  const double smax = *std::max_element(sc.begin(), sc.end());
  std::vector<double> m(fc.size());
  for (std::size_t x = 0; x < m.size(); ++x) {
    const double f = fmax > 1e-12 ? fc[x] / fmax : 0.0;
    const double s = smax > 1e-12 ? sc[x] / smax : 0.0;
    m[x] = (1 - alpha) * f + alpha * s;
  }
  return m;
}

// p_i <- eta p_i + (1 - eta) Np sum_k T[k][i] z_k
inline Vecs ema(const Vecs& protos, const std::vector<double>& plan, const Vecs& z, double eta) {
  const std::size_t np = protos.size();
  Vecs out = protos;
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t d = 0; d < protos[i].size(); ++d) {
      double s = 0;
      for (std::size_t k = 0; k < z.size(); ++k) s += plan[k * np + i] * z[k][d];
      out[i][d] = eta * protos[i][d] + (1 - eta) * double(np) * s;
    }
  }
  return out;
}

struct Argmin {
  std::size_t index;
  double cost;
};

// Brute-force nearest prototype of one embedding.
inline Argmin nearest(const std::vector<double>& z, std::size_t zi, std::size_t zj,
                      const Vecs& protos, std::size_t h, std::size_t w, std::size_t n,
                      double alpha) {
  Argmin best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < protos.size(); ++k) {
    const std::size_t pc = k / n;
    const double c = fused(z, zi, zj, protos[k], pc / w, pc % w, h, w, alpha);
    if (c < best.cost) best = {k, c};
  }
  return best;
}

// Square problem with uniform marginals: the transport polytope's vertices are
// permutations scaled by 1/r, so the optimum is the best permutation.
inline double exact_ot_square(const std::vector<double>& m, std::size_t r) {
  std::vector<std::size_t> perm(r);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (std::size_t i = 0; i < r; ++i) s += m[i * r + perm[i]];
    best = std::min(best, s / double(r));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
inline double pairwise_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  std::uint64_t twice = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? pos : neg) += 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
    }
  }
  return double(twice) / (2.0 * double(pos) * double(neg));
}

// Per-region overlap against FPR, evaluated threshold by threshold from
// scratch, then integrated up to the cap and divided by it.
// regions[img] lists pixel index sets; every other pixel counts as negative.
inline double pro_area(const std::vector<std::vector<double>>& maps,
                       const std::vector<std::vector<std::vector<std::size_t>>>& regions,
                       double cap) {
  std::set<double, std::greater<>> thresholds;
  for (const auto& m : maps) thresholds.insert(m.begin(), m.end());

  std::vector<std::vector<bool>> in_region(maps.size());
  double negatives = 0;
  std::size_t region_count = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    in_region[i].assign(maps[i].size(), false);
    for (const auto& r : regions[i]) {
      for (auto p : r) in_region[i][p] = true;
      ++region_count;
    }
    for (bool b : in_region[i]) negatives += b ? 0 : 1;
  }

  std::vector<double> xs{0.0}, ys{0.0};
  for (double t : thresholds) {
    double fp = 0, overlap = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      for (std::size_t p = 0; p < maps[i].size(); ++p) {
        if (!in_region[i][p] && maps[i][p] >= t) fp += 1;
      }
      for (const auto& r : regions[i]) {
        double hit = 0;
        for (auto p : r) hit += maps[i][p] >= t ? 1 : 0;
        overlap += hit / double(r.size());
      }
    }
    xs.push_back(fp / negatives);
    ys.push_back(overlap / double(region_count));
  }

  double area = 0;
  for (std::size_t k = 1; k < xs.size() && xs[k - 1] < cap; ++k) {
    double x1 = xs[k], y1 = ys[k];
    if (x1 > cap) {
      y1 = ys[k - 1] + (ys[k] - ys[k - 1]) * (cap - xs[k - 1]) / (xs[k] - xs[k - 1]);
      x1 = cap;
    }
    area += 0.5 * (x1 - xs[k - 1]) * (ys[k - 1] + y1);
  }
  return area / cap;
}

// Half-pixel-centre bilinear resize, written per output pixel.
inline std::vector<double> bilinear(const std::vector<double>& in, std::size_t h, std::size_t w,
                                    std::size_t oh, std::size_t ow) {
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    const double sy = std::max(0.0, (y + 0.5) * double(h) / double(oh) - 0.5);
    const std::size_t y0 = std::min(std::size_t(sy), h - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - double(y0);
    for (std::size_t x = 0; x < ow; ++x) {
      const double sx = std::max(0.0, (x + 0.5) * double(w) / double(ow) - 0.5);
      const std::size_t x0 = std::min(std::size_t(sx), w - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - double(x0);
      const double top = in[y0 * w + x0] * (1 - fx) + in[y0 * w + x1] * fx;
      const double bot = in[y1 * w + x0] * (1 - fx) + in[y1 * w + x1] * fx;
      out[y * ow + x] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

}  // namespace oracle
