#pragma once

// 49-point landmark model and the face alignment geometry: brow midpoint,
// signed tilt angle, inner-eye distance and the composed rotate+scale
// correction applied identically to texture, depth and landmarks.

#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>

#include "fer/image.hpp"
#include "fer/io_util.hpp"

namespace fer {

inline constexpr int kNumLandmarks = 49;

/// Landmark indices are 1-based to match the usual P1..P49 numbering.
namespace lm {
inline constexpr int kInnerBrowRight = 5;
inline constexpr int kInnerBrowLeft = 6;
inline constexpr int kInnerEyeRight = 23;
inline constexpr int kInnerEyeLeft = 26;
inline constexpr int kMouthTop = 35;
}  // namespace lm

class LandmarkSet {
 public:
  LandmarkSet() = default;
  explicit LandmarkSet(const std::array<Point, kNumLandmarks>& points) : points_(points) { validate(); }

  /// 1-based access.
  const Point& p(int i) const { return points_.at(static_cast<std::size_t>(i - 1)); }
  Point& p(int i) { return points_.at(static_cast<std::size_t>(i - 1)); }

  const std::array<Point, kNumLandmarks>& points() const { return points_; }

  void validate() const {
    for (const auto& q : points_) {
      if (!std::isfinite(q.x) || !std::isfinite(q.y)) {
        throw Error(ErrorCode::ParseError, "landmark coordinates must be finite");
      }
    }
  }

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;

 private:
  std::array<Point, kNumLandmarks> points_{};
};

inline LandmarkSet parse_landmarks(const std::string& text, const std::string& what = "landmarks") {
  std::array<Point, kNumLandmarks> pts{};
  int count = 0;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    std::istringstream ls{std::string(body)};
    double x = 0.0, y = 0.0;
    std::string extra;
    if (!(ls >> x >> y) || (ls >> extra)) {
      throw Error(ErrorCode::ParseError, what + ":" + std::to_string(line_no) + ": expected \"x y\"");
    }
    if (count == kNumLandmarks) {
      throw Error(ErrorCode::ParseError, what + ": more than 49 landmark lines");
    }
    pts[count++] = {x, y};
  }
  if (count != kNumLandmarks) {
    throw Error(ErrorCode::ParseError,
                what + ": expected 49 landmarks, found " + std::to_string(count));
  }
  return LandmarkSet(pts);
}

inline LandmarkSet read_landmarks(const fs::path& path) { return parse_landmarks(read_file(path), path.string()); }

inline std::string format_landmarks(const LandmarkSet& lms) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& q : lms.points()) out << q.x << ' ' << q.y << '\n';
  return out.str();
}

inline void write_landmarks(const fs::path& path, const LandmarkSet& lms) {
  write_file_atomic(path, format_landmarks(lms));
}

/// Point halfway between the inner eyebrow ends.
inline Point midpoint_brow(const LandmarkSet& lms) {
  const Point a = lms.p(lm::kInnerBrowRight);
  const Point b = lms.p(lm::kInnerBrowLeft);
  return {(a.x + b.x) / 2.0, (a.y + b.y) / 2.0};
}

/// Tilt of the mouth-top -> brow-midpoint line away from the image vertical.
/// Positive when the face leans counter-clockwise; rotating by the negated
/// angle about P35 makes the face upright.
inline double rotation_angle(const LandmarkSet& lms) {
  const Point top = midpoint_brow(lms);
  const Point mouth = lms.p(lm::kMouthTop);
  const double l1x = top.x - mouth.x;
  const double l1y = top.y - mouth.y;
  // l2 = (0, l1y); cos(angle) = |l1y| / |l1|.
  if (std::hypot(l1x, l1y) == 0.0 || l1y == 0.0) {
    throw Error(ErrorCode::DegenerateLandmarks, "brow midpoint and mouth top give no vertical extent");
  }
  // atan2 form of arccos(l1.l2 / |l1||l2|); stays accurate near zero.
  const double magnitude = std::atan2(std::abs(l1x), std::abs(l1y));
  return l1x > 0.0 ? -magnitude : magnitude;
}

inline double interocular_distance(const LandmarkSet& lms) {
  const Point a = lms.p(lm::kInnerEyeRight);
  const Point b = lms.p(lm::kInnerEyeLeft);
  return std::hypot(b.x - a.x, b.y - a.y);
}

inline LandmarkSet transform_landmarks(const LandmarkSet& lms, Point center, double angle, double factor) {
  if (!(factor > 0.0)) throw Error(ErrorCode::NonPositiveFactor, "landmark scale factor must be positive");
  if (angle == 0.0 && factor == 1.0) return lms;
  std::array<Point, kNumLandmarks> out{};
  for (int i = 0; i < kNumLandmarks; ++i) out[i] = similarity_map(lms.points()[i], center, angle, factor);
  return LandmarkSet(out);
}

struct AlignmentResult {
  Image texture;
  Image depth;
  LandmarkSet landmarks;
  double applied_angle = 0.0;
  double applied_scale = 1.0;
};

inline AlignmentResult align_face(const Image& texture, const Image& depth, const LandmarkSet& lms,
                                  double ref_dist) {
  if (texture.height() != depth.height() || texture.width() != depth.width()) {
    throw Error(ErrorCode::DimensionMismatch, "texture and depth maps differ in size");
  }
  if (!(ref_dist > 0.0)) throw Error(ErrorCode::ExtremeScale, "reference distance must be positive");
  const double angle = -rotation_angle(lms);
  const double dist = interocular_distance(lms);
  const double factor = dist > 0.0 ? ref_dist / dist : INFINITY;
  if (!(factor > 0.1 && factor < 10.0)) {
    throw Error(ErrorCode::ExtremeScale, "required scale " + std::to_string(factor) + " outside (0.1, 10)");
  }
  const Point center = lms.p(lm::kMouthTop);
  AlignmentResult r;
  r.texture = warp_similarity(texture, center, angle, factor);
  r.depth = warp_similarity(depth, center, angle, factor);
  r.landmarks = transform_landmarks(lms, center, angle, factor);
  r.applied_angle = angle;
  r.applied_scale = factor;
  return r;
}

}  // namespace fer
