#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "fer/image.hpp"
#include "fer/landmarks.hpp"

namespace fer {

inline constexpr int kPartSize = 64;
inline constexpr double kDefaultPartPad = 7.0;

enum class PartKind { Eyebrows = 0, Eyes = 1, Nose = 2, Mouth = 3 };

inline constexpr std::array<PartKind, 4> kAllParts = {PartKind::Eyebrows, PartKind::Eyes, PartKind::Nose,
                                                     PartKind::Mouth};

inline std::string_view part_name(PartKind kind) {
  switch (kind) {
    case PartKind::Eyebrows: return "eyebrows";
    case PartKind::Eyes: return "eyes";
    case PartKind::Nose: return "nose";
    case PartKind::Mouth: return "mouth";
  }
  return "?";
}

inline std::optional<PartKind> parse_part(std::string_view name) {
  for (PartKind k : kAllParts) {
    if (part_name(k) == name) return k;
  }
  return std::nullopt;
}

/// Inclusive 1-based landmark index range per part. Left and right instances
/// of brows and eyes share one box.
struct PartRange {
  int first;
  int last;
};

using PartTable = std::array<PartRange, 4>;

inline constexpr PartTable kDefaultPartTable = {{
    {1, 10},   // Eyebrows
    {20, 31},  // Eyes
    {11, 19},  // Nose
    {32, 49},  // Mouth
}};

inline BBox landmark_extent(const LandmarkSet& lms, int first, int last) {
  BBox b{lms.p(first).x, lms.p(first).y, lms.p(first).x, lms.p(first).y};
  for (int i = first + 1; i <= last; ++i) {
    b.x_min = std::min(b.x_min, lms.p(i).x);
    b.y_min = std::min(b.y_min, lms.p(i).y);
    b.x_max = std::max(b.x_max, lms.p(i).x);
    b.y_max = std::max(b.y_max, lms.p(i).y);
  }
  return b;
}

inline BBox pad_box(BBox b, double pad) {
  if (!(pad >= 0.0 && pad <= 32.0)) {
    throw Error(ErrorCode::ConfigError, "part padding must lie in [0, 32]");
  }
  return {b.x_min - pad, b.y_min - pad, b.x_max + pad, b.y_max + pad};
}

inline BBox part_bbox(const LandmarkSet& lms, PartKind kind, double pad,
                      const PartTable& table = kDefaultPartTable) {
  const PartRange r = table[static_cast<std::size_t>(kind)];
  return pad_box(landmark_extent(lms, r.first, r.last), pad);
}

/// Box over all 49 landmarks, used for whole-face crops.
inline BBox face_bbox(const LandmarkSet& lms, double pad) {
  return pad_box(landmark_extent(lms, 1, kNumLandmarks), pad);
}

struct PartCrop {
  Image crop;
  BBox source_bbox;
};

struct PartSet {
  std::array<PartCrop, 4> parts;

  const PartCrop& operator[](PartKind k) const { return parts[static_cast<std::size_t>(k)]; }
  PartCrop& operator[](PartKind k) { return parts[static_cast<std::size_t>(k)]; }
};

inline Image crop_normalized(const Image& img, const BBox& box) {
  return resize(crop(img, box), kPartSize, kPartSize);
}

/// Crops both modalities with the same boxes and normalizes each crop to
/// 64x64. Returns (texture parts, depth parts).
inline std::pair<PartSet, PartSet> extract_parts(const Image& texture, const Image& depth,
                                                 const LandmarkSet& lms, double pad = kDefaultPartPad,
                                                 const PartTable& table = kDefaultPartTable) {
  if (texture.height() != depth.height() || texture.width() != depth.width()) {
    throw Error(ErrorCode::DimensionMismatch, "texture and depth maps differ in size");
  }
  PartSet tex, dep;
  for (PartKind k : kAllParts) {
    const BBox box = part_bbox(lms, k, pad, table);
    tex[k] = {crop_normalized(texture, box), box};
    dep[k] = {crop_normalized(depth, box), box};
  }
  return {std::move(tex), std::move(dep)};
}

}  // namespace fer
