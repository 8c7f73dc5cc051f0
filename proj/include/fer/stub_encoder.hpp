#pragma once

// Deterministic stand-in for a pre-trained conv5 backbone. A 64x64 part is
// divided into a 6x6 grid; each cell yields per-channel mean intensity and
// mean absolute horizontal/vertical gradient. Every output location sees the
// statistics of its 3x3 cell neighborhood (zero padded) and maps them through
// a fixed seeded Gaussian projection followed by ReLU into 512 channels.
// Each stage is Lipschitz, so nearby images map to nearby features.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <random>

#include "fer/fusion_net.hpp"
#include "fer/image.hpp"
#include "fer/tensor.hpp"

namespace fer {

class StubEncoder {
 public:
  static constexpr int kInputSize = 64;
  static constexpr int kStatsPerChannel = 3;
  static constexpr int kStatsPerCell = 3 * kStatsPerChannel;
  static constexpr int kReceptive = 9 * kStatsPerCell;  // 3x3 neighborhood

  explicit StubEncoder(std::uint64_t seed = 20180515) : projection_(kConvChannels, kReceptive), offset_(kConvChannels) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(kReceptive)));
    for (Eigen::Index r = 0; r < projection_.rows(); ++r) {
      for (Eigen::Index c = 0; c < projection_.cols(); ++c) projection_(r, c) = dist(rng);
    }
    std::normal_distribution<double> bias(0.0, 0.05);
    for (Eigen::Index r = 0; r < offset_.size(); ++r) offset_(r) = bias(rng);
  }

  /// Encodes one part crop. `mean` (same shape as the 3-channel input, values
  /// may be any real) is subtracted first when given.
  FeatureTensor encode(const Image& part, const Image* mean = nullptr) const {
    if (part.height() != kInputSize || part.width() != kInputSize) {
      throw Error(ErrorCode::BadDimensions, "stub encoder expects a 64x64 input, got " + std::to_string(part.width()) +
                                                "x" + std::to_string(part.height()));
    }
    const Image rgb = to_rgb(part);
    if (mean && (mean->height() != kInputSize || mean->width() != kInputSize || mean->channels() != 3)) {
      throw Error(ErrorCode::BadDimensions, "mean image must be 64x64x3");
    }
    auto value = [&](int y, int x, int c) -> double {
      const double v = rgb.at(y, x, c);
      return mean ? v - mean->at(y, x, c) : v;
    };

    const auto bounds = cell_bounds();
    constexpr int G = static_cast<int>(kConvGrid);
    std::array<std::array<std::array<double, kStatsPerCell>, G>, G> stats{};
    for (int gy = 0; gy < G; ++gy) {
      for (int gx = 0; gx < G; ++gx) {
        const int y0 = bounds[gy], y1 = bounds[gy + 1];
        const int x0 = bounds[gx], x1 = bounds[gx + 1];
        const double area = static_cast<double>((y1 - y0) * (x1 - x0));
        for (int c = 0; c < 3; ++c) {
          double sum = 0.0, gxs = 0.0, gys = 0.0;
          for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
              const double v = value(y, x, c);
              sum += v;
              if (x + 1 < kInputSize) gxs += std::abs(value(y, x + 1, c) - v);
              if (y + 1 < kInputSize) gys += std::abs(value(y + 1, x, c) - v);
            }
          }
          stats[gy][gx][c * kStatsPerChannel + 0] = sum / area;
          stats[gy][gx][c * kStatsPerChannel + 1] = 4.0 * gxs / area;
          stats[gy][gx][c * kStatsPerChannel + 2] = 4.0 * gys / area;
        }
      }
    }

    FeatureTensor out({kConvGrid, kConvGrid, kConvChannels});
    Eigen::VectorXd field(kReceptive);
    for (int gy = 0; gy < G; ++gy) {
      for (int gx = 0; gx < G; ++gx) {
        int k = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = gy + dy, nx = gx + dx;
            const bool inside = ny >= 0 && ny < G && nx >= 0 && nx < G;
            for (int s = 0; s < kStatsPerCell; ++s) field(k++) = inside ? stats[ny][nx][s] : 0.0;
          }
        }
        const Eigen::VectorXd response = (projection_ * field + offset_).cwiseMax(0.0);
        float* dst = out.data.data() + (static_cast<std::size_t>(gy) * kConvGrid + gx) * kConvChannels;
        for (Eigen::Index c = 0; c < response.size(); ++c) dst[c] = static_cast<float>(response(c));
      }
    }
    return out;
  }

  /// Spectral norm of the projection; bounds the output change per unit
  /// change of the pooled statistics.
  double projection_norm() const {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(projection_);
    return svd.singularValues()(0);
  }

  static std::array<int, kConvGrid + 1> cell_bounds() {
    std::array<int, kConvGrid + 1> b{};
    for (std::size_t i = 0; i <= kConvGrid; ++i) {
      b[i] = static_cast<int>(std::lround(static_cast<double>(i) * kInputSize / static_cast<double>(kConvGrid)));
    }
    return b;
  }

 private:
  Eigen::MatrixXd projection_;
  Eigen::VectorXd offset_;
};

/// Pixelwise mean of 64x64 crops, promoted to three channels.
template <typename Range>
Image mean_image(const Range& images) {
  Image acc(StubEncoder::kInputSize, StubEncoder::kInputSize, 3);
  std::vector<double> sum(acc.data().size(), 0.0);
  std::size_t n = 0;
  for (const Image& img : images) {
    const Image rgb = to_rgb(img);
    if (rgb.height() != acc.height() || rgb.width() != acc.width()) {
      throw Error(ErrorCode::BadDimensions, "mean image inputs must be 64x64");
    }
    const auto d = rgb.data();
    for (std::size_t i = 0; i < d.size(); ++i) sum[i] += d[i];
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::EmptySet, "no images to average");
  auto out = acc.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(sum[i] / static_cast<double>(n));
  return acc;
}

}  // namespace fer
