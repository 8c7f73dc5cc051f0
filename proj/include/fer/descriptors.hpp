#pragma once

// Hand-crafted part descriptors: HOG with L2-Hys block normalization and
// uniform LBP cell histograms, plus early fusion by concatenation.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "fer/image.hpp"

namespace fer {

struct FeatureVector {
  std::vector<double> values;
  std::string descriptor_id;

  std::size_t size() const { return values.size(); }
};

struct HogParams {
  int cell_size = 8;
  int block_cells = 2;
  int bins = 9;
  double clip = 0.2;
  double epsilon = 1e-6;
};

inline std::size_t hog_length(int height, int width, const HogParams& p = {}) {
  const int cells_y = height / p.cell_size;
  const int cells_x = width / p.cell_size;
  const int blocks_y = cells_y - p.block_cells + 1;
  const int blocks_x = cells_x - p.block_cells + 1;
  if (blocks_x <= 0 || blocks_y <= 0) return 0;
  return static_cast<std::size_t>(blocks_y) * blocks_x * p.block_cells * p.block_cells * p.bins;
}

namespace detail {

inline void l2_hys(std::span<double> v, double clip, double eps) {
  auto normalize = [&] {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double inv = 1.0 / std::sqrt(sq + eps * eps);
    for (double& x : v) x *= inv;
  };
  normalize();
  for (double& x : v) x = std::min(x, clip);
  normalize();
}

}  // namespace detail

/// Histogram of oriented gradients. Gradients use centered [-1, 0, 1]
/// differences with edge replication; unsigned orientations in [0, 180) vote
/// into bins centered at multiples of 180/bins with linear interpolation.
inline FeatureVector hog(const Image& input, const HogParams& p = {}) {
  const Image img = to_gray(input);
  const int h = img.height();
  const int w = img.width();
  if (h % p.cell_size != 0 || w % p.cell_size != 0 || hog_length(h, w, p) == 0) {
    throw Error(ErrorCode::BadDimensions, "HOG input " + std::to_string(w) + "x" + std::to_string(h) +
                                              " is not a multiple of the cell size");
  }
  const int cells_y = h / p.cell_size;
  const int cells_x = w / p.cell_size;
  std::vector<double> cells(static_cast<std::size_t>(cells_y) * cells_x * p.bins, 0.0);
  const double bin_width = 180.0 / p.bins;

  for (int y = 0; y < h; ++y) {
    const int ym = std::max(y - 1, 0);
    const int yp = std::min(y + 1, h - 1);
    for (int x = 0; x < w; ++x) {
      const int xm = std::max(x - 1, 0);
      const int xp = std::min(x + 1, w - 1);
      const double gx = static_cast<double>(img.at(y, xp)) - img.at(y, xm);
      const double gy = static_cast<double>(img.at(yp, x)) - img.at(ym, x);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;
      double deg = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (deg < 0.0) deg += 180.0;
      if (deg >= 180.0) deg -= 180.0;
      const double pos = deg / bin_width;
      const int lo = static_cast<int>(std::floor(pos)) % p.bins;
      const int hi = (lo + 1) % p.bins;
      const double frac = pos - std::floor(pos);
      double* cell = &cells[(static_cast<std::size_t>(y / p.cell_size) * cells_x + x / p.cell_size) * p.bins];
      cell[lo] += mag * (1.0 - frac);
      cell[hi] += mag * frac;
    }
  }

  FeatureVector out;
  out.descriptor_id = "hog:cell" + std::to_string(p.cell_size) + ":block" + std::to_string(p.block_cells) +
                      ":bins" + std::to_string(p.bins);
  out.values.reserve(hog_length(h, w, p));
  const std::size_t block_len = static_cast<std::size_t>(p.block_cells) * p.block_cells * p.bins;
  for (int by = 0; by + p.block_cells <= cells_y; ++by) {
    for (int bx = 0; bx + p.block_cells <= cells_x; ++bx) {
      const std::size_t start = out.values.size();
      for (int cy = 0; cy < p.block_cells; ++cy) {
        for (int cx = 0; cx < p.block_cells; ++cx) {
          const double* cell = &cells[(static_cast<std::size_t>(by + cy) * cells_x + bx + cx) * p.bins];
          out.values.insert(out.values.end(), cell, cell + p.bins);
        }
      }
      detail::l2_hys(std::span<double>(out.values).subspan(start, block_len), p.clip, p.epsilon);
    }
  }
  return out;
}

inline constexpr int kLbpBins = 59;

/// Maps each 8-bit LBP code to its bin: the 58 uniform patterns (at most two
/// circular 0/1 transitions) in ascending code order, everything else to 58.
inline const std::array<std::uint8_t, 256>& uniform_lbp_table() {
  static const std::array<std::uint8_t, 256> table = [] {
    std::array<std::uint8_t, 256> t{};
    int next = 0;
    for (int code = 0; code < 256; ++code) {
      const auto rotated = static_cast<std::uint8_t>((code >> 1) | ((code & 1) << 7));
      const int transitions = std::popcount(static_cast<unsigned>(static_cast<std::uint8_t>(code) ^ rotated));
      t[code] = transitions <= 2 ? static_cast<std::uint8_t>(next++) : std::uint8_t{58};
    }
    return t;
  }();
  return table;
}

struct LbpParams {
  int cell_size = 16;
};

/// Neighbor offsets (dx, dy) for bit 0..7, counter-clockwise from the right.
inline constexpr std::array<std::array<int, 2>, 8> kLbpNeighbors = {
    {{1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}}};

/// Raw per-cell uniform LBP counts over interior pixels, cells in row-major
/// order, 59 bins each.
inline std::vector<std::uint32_t> ulbp_counts(const Image& input, const LbpParams& p = {}) {
  const Image img = to_gray(input);
  const int h = img.height();
  const int w = img.width();
  if (h % p.cell_size != 0 || w % p.cell_size != 0 || h < 3 || w < 3) {
    throw Error(ErrorCode::BadDimensions, "ULBP input is not a multiple of the cell size");
  }
  const int cells_x = w / p.cell_size;
  const int cells_y = h / p.cell_size;
  const auto& table = uniform_lbp_table();
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(cells_x) * cells_y * kLbpBins, 0);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const float center = img.at(y, x);
      unsigned code = 0;
      for (int b = 0; b < 8; ++b) {
        if (img.at(y + kLbpNeighbors[b][1], x + kLbpNeighbors[b][0]) >= center) code |= 1u << b;
      }
      const std::size_t cell = static_cast<std::size_t>(y / p.cell_size) * cells_x + x / p.cell_size;
      ++counts[cell * kLbpBins + table[code]];
    }
  }
  return counts;
}

/// Uniform LBP descriptor: concatenated L1-normalized cell histograms.
inline FeatureVector ulbp(const Image& input, const LbpParams& p = {}) {
  const auto counts = ulbp_counts(input, p);
  FeatureVector out;
  out.descriptor_id = "ulbp:r1:cell" + std::to_string(p.cell_size);
  out.values.resize(counts.size());
  for (std::size_t start = 0; start < counts.size(); start += kLbpBins) {
    double total = 0.0;
    for (int b = 0; b < kLbpBins; ++b) total += counts[start + b];
    for (int b = 0; b < kLbpBins; ++b) {
      out.values[start + b] = total > 0.0 ? counts[start + b] / total : 0.0;
    }
  }
  return out;
}

/// Concatenation in the given order (callers pass parts in PartKind order,
/// texture before depth).
inline FeatureVector early_fuse(std::span<const FeatureVector> parts) {
  if (parts.empty()) throw Error(ErrorCode::EmptySet, "nothing to fuse");
  FeatureVector out;
  for (const auto& f : parts) {
    out.values.insert(out.values.end(), f.values.begin(), f.values.end());
    if (!out.descriptor_id.empty()) out.descriptor_id += '+';
    out.descriptor_id += f.descriptor_id;
  }
  return out;
}

}  // namespace fer
