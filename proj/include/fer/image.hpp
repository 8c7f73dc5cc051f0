#pragma once

// Image value type and the geometric primitives shared by every stage.
//
// Coordinate convention (used by every module): x grows rightward, y grows
// downward, origin at the top-left pixel, pixel centers at integer
// coordinates. A positive rotation angle turns content counter-clockwise as
// it appears on screen. Warps use inverse mapping with bilinear sampling and
// a constant fill value outside the source image.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fer/error.hpp"

namespace fer {

inline constexpr float kFillValue = 0.0f;

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
  friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned box; max edges are exclusive once snapped to the pixel grid.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

class Image {
 public:
  Image() = default;

  Image(int height, int width, int channels, float fill = 0.0f)
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || (channels != 1 && channels != 3)) {
      throw Error(ErrorCode::BadDimensions,
                  "image must have non-negative size and 1 or 3 channels");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  Image(int height, int width, int channels, std::vector<float> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (height < 0 || width < 0 || (channels != 1 && channels != 3)) {
      throw Error(ErrorCode::BadDimensions,
                  "image must have non-negative size and 1 or 3 channels");
    }
    if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
      throw Error(ErrorCode::BadDimensions, "image data length does not match its shape");
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  float& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  bool contains(int y, int x) const { return y >= 0 && y < height_ && x >= 0 && x < width_; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  std::vector<float> data_;
};

inline float clamp_unit(double v) {
  if (!std::isfinite(v)) return 0.0f;
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

/// Bilinear interpolation of channel c at (x, y). Neighbors outside the image
/// contribute the fill value.
inline double bilinear_sample(const Image& img, double x, double y, int c) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double ax = x - fx0;
  const double ay = y - fy0;
  auto fetch = [&](int yy, int xx) -> double {
    return img.contains(yy, xx) ? img.at(yy, xx, c) : kFillValue;
  };
  if (ax == 0.0 && ay == 0.0) return fetch(y0, x0);
  const double top = (1.0 - ax) * fetch(y0, x0) + ax * fetch(y0, x0 + 1);
  const double bottom = (1.0 - ax) * fetch(y0 + 1, x0) + ax * fetch(y0 + 1, x0 + 1);
  return (1.0 - ay) * top + ay * bottom;
}

inline std::vector<double> bilinear_sample(const Image& img, double x, double y) {
  if (x <= -1.0 || y <= -1.0 || x >= img.width() || y >= img.height()) {
    return std::vector<double>(img.channels(), kFillValue);
  }
  std::vector<double> out(img.channels());
  for (int c = 0; c < img.channels(); ++c) out[c] = bilinear_sample(img, x, y, c);
  return out;
}

/// Forward map of the similarity transform used by all warps: rotate by
/// `angle` then scale by `factor`, both about `center`.
inline Point similarity_map(Point p, Point center, double angle, double factor) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double dx = p.x - center.x;
  const double dy = p.y - center.y;
  return {center.x + factor * (c * dx + s * dy), center.y + factor * (-s * dx + c * dy)};
}

/// Single-pass inverse warp applying similarity_map to the image content.
inline Image warp_similarity(const Image& img, Point center, double angle, double factor) {
  if (!std::isfinite(angle)) throw Error(ErrorCode::BadDimensions, "rotation angle is not finite");
  if (angle == 0.0 && factor == 1.0) return img;
  Image out(img.height(), img.width(), img.channels());
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double inv = 1.0 / factor;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double dx = x - center.x;
      const double dy = y - center.y;
      // Inverse of similarity_map: rotate by -angle, scale by 1/factor.
      const double sx = center.x + inv * (c * dx - s * dy);
      const double sy = center.y + inv * (s * dx + c * dy);
      for (int ch = 0; ch < img.channels(); ++ch) {
        out.at(y, x, ch) = clamp_unit(bilinear_sample(img, sx, sy, ch));
      }
    }
  }
  return out;
}

inline Image rotate_about(const Image& img, Point center, double angle) {
  return warp_similarity(img, center, angle, 1.0);
}

inline void check_scale_factor(double factor) {
  if (!(factor > 0.1 && factor < 10.0)) {
    throw Error(ErrorCode::NonPositiveFactor,
                "scale factor " + std::to_string(factor) + " outside (0.1, 10)");
  }
}

inline Image scale_about(const Image& img, Point center, double factor) {
  check_scale_factor(factor);
  return warp_similarity(img, center, 0.0, factor);
}

/// Integer pixel rectangle covered by a box after clamping to the image.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

inline PixelRect clamp_box(const BBox& box, int width, int height) {
  PixelRect r;
  r.x0 = static_cast<int>(std::clamp(std::floor(box.x_min), 0.0, static_cast<double>(width)));
  r.y0 = static_cast<int>(std::clamp(std::floor(box.y_min), 0.0, static_cast<double>(height)));
  r.x1 = static_cast<int>(std::clamp(std::ceil(box.x_max), 0.0, static_cast<double>(width)));
  r.y1 = static_cast<int>(std::clamp(std::ceil(box.y_max), 0.0, static_cast<double>(height)));
  return r;
}

inline Image crop(const Image& img, const BBox& box) {
  const PixelRect r = clamp_box(box, img.width(), img.height());
  if (r.width() <= 0 || r.height() <= 0) {
    throw Error(ErrorCode::EmptyRegion, "crop box has zero area after clamping");
  }
  Image out(r.height(), r.width(), img.channels());
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(r.y0 + y, r.x0 + x, c);
    }
  }
  return out;
}

/// Bilinear resampling with pixel-center alignment and edge replication, so
/// constant images stay constant and the identity size is a pixel copy.
inline Image resize(const Image& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw Error(ErrorCode::BadDimensions, "resize target must be >= 1x1");
  if (img.empty()) throw Error(ErrorCode::EmptyRegion, "cannot resize an empty image");
  if (out_w == img.width() && out_h == img.height()) return img;
  Image out(out_h, out_w, img.channels());
  const double sx = static_cast<double>(img.width()) / out_w;
  const double sy = static_cast<double>(img.height()) / out_h;
  const double max_x = img.width() - 1;
  const double max_y = img.height() - 1;
  for (int y = 0; y < out_h; ++y) {
    const double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, max_y);
    const int y0 = static_cast<int>(std::floor(src_y));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double ay = src_y - y0;
    for (int x = 0; x < out_w; ++x) {
      const double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, max_x);
      const int x0 = static_cast<int>(std::floor(src_x));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double ax = src_x - x0;
      for (int c = 0; c < img.channels(); ++c) {
        const double top = (1.0 - ax) * img.at(y0, x0, c) + ax * img.at(y0, x1, c);
        const double bottom = (1.0 - ax) * img.at(y1, x0, c) + ax * img.at(y1, x1, c);
        out.at(y, x, c) = clamp_unit((1.0 - ay) * top + ay * bottom);
      }
    }
  }
  return out;
}

inline Image hflip(const Image& img) {
  Image out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
      }
    }
  }
  return out;
}

/// Unweighted channel mean; single-channel input is returned unchanged.
inline Image to_gray(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double sum = 0.0;
      for (int c = 0; c < img.channels(); ++c) sum += img.at(y, x, c);
      out.at(y, x) = static_cast<float>(sum / img.channels());
    }
  }
  return out;
}

/// Replicates a single-channel image to three channels.
inline Image to_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  Image out(img.height(), img.width(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const float v = img.at(y, x);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = v;
    }
  }
  return out;
}

}  // namespace fer
