#include <gtest/gtest.h>

#include "fer/parts.hpp"
#include "oracles.hpp"

using namespace fer;

namespace {

// Every landmark parked at the image center except the ones overridden.
LandmarkSet parked(Point at = {100, 100}) {
  std::array<Point, kNumLandmarks> pts;
  pts.fill(at);
  return LandmarkSet(pts);
}

LandmarkSet mouth_spanning(double x0, double y0, double x1, double y1) {
  LandmarkSet l = parked({60, 110});
  l.p(32) = {x0, y0};
  l.p(38) = {x1, y1};
  for (int i = 39; i <= 49; ++i) l.p(i) = {x0 + (x1 - x0) * (i - 38) / 12.0, y0 + (y1 - y0) * 0.5};
  return l;
}

}  // namespace

TEST(PartBox, MouthExample) {
  const BBox b = part_bbox(mouth_spanning(40, 100, 80, 120), PartKind::Mouth, 7);
  EXPECT_EQ(b, (BBox{33, 93, 87, 127}));
}

TEST(PartBox, ZeroPadIsExtent) {
  const BBox b = part_bbox(mouth_spanning(40, 100, 80, 120), PartKind::Mouth, 0);
  EXPECT_EQ(b, (BBox{40, 100, 80, 120}));
}

TEST(PartBox, CoincidentLandmarks) {
  const BBox b = part_bbox(parked({50, 60}), PartKind::Nose, 7);
  EXPECT_EQ(b.width(), 14);
  EXPECT_EQ(b.height(), 14);
  EXPECT_EQ((b.x_min + b.x_max) / 2, 50);
  EXPECT_EQ((b.y_min + b.y_max) / 2, 60);
}

TEST(PartBox, ContainsDefiningLandmarks) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(20, 180);
  for (int trial = 0; trial < 50; ++trial) {
    std::array<Point, kNumLandmarks> pts;
    for (auto& p : pts) p = {u(rng), u(rng)};
    const LandmarkSet l(pts);
    for (PartKind k : kAllParts) {
      const BBox b = part_bbox(l, k, 5);
      const PartRange r = kDefaultPartTable[static_cast<std::size_t>(k)];
      for (int i = r.first; i <= r.last; ++i) {
        EXPECT_GE(l.p(i).x, b.x_min);
        EXPECT_LE(l.p(i).x, b.x_max);
        EXPECT_GE(l.p(i).y, b.y_min);
        EXPECT_LE(l.p(i).y, b.y_max);
      }
    }
  }
}

TEST(PartBox, PadOutOfRangeThrows) {
  EXPECT_THROW(part_bbox(parked(), PartKind::Eyes, -1), Error);
  EXPECT_THROW(part_bbox(parked(), PartKind::Eyes, 33), Error);
}

TEST(ExtractParts, ShapesAndSharedBoxes) {
  const Image tex = oracle::random_image(200, 200, 3, 1);
  const Image dep = oracle::random_image(200, 200, 1, 2);
  LandmarkSet l = mouth_spanning(40, 100, 80, 120);
  for (int i = 1; i <= 31; ++i) l.p(i) = {50.0 + 3 * i, 40.0 + (i % 7)};
  const auto [t, d] = extract_parts(tex, dep, l);
  for (PartKind k : kAllParts) {
    EXPECT_EQ(t[k].crop.width(), kPartSize);
    EXPECT_EQ(t[k].crop.height(), kPartSize);
    EXPECT_EQ(t[k].crop.channels(), 3);
    EXPECT_EQ(d[k].crop.width(), kPartSize);
    EXPECT_EQ(d[k].crop.height(), kPartSize);
    EXPECT_EQ(d[k].crop.channels(), 1);
    EXPECT_EQ(t[k].source_bbox, d[k].source_bbox);
  }
}

TEST(ExtractParts, IdenticalContentGivesIdenticalCrops) {
  const Image img = oracle::random_image(200, 200, 1, 3);
  const auto [t, d] = extract_parts(img, img, mouth_spanning(40, 100, 80, 120));
  for (PartKind k : kAllParts) EXPECT_EQ(t[k].crop, d[k].crop);
}

TEST(ExtractParts, ConstantStaysConstant) {
  const auto [t, d] = extract_parts(Image(200, 200, 3, 0.5f), Image(200, 200, 1, 0.5f), mouth_spanning(40, 100, 80, 120));
  for (PartKind k : kAllParts) {
    for (float v : t[k].crop.data()) EXPECT_FLOAT_EQ(v, 0.5f);
    for (float v : d[k].crop.data()) EXPECT_FLOAT_EQ(v, 0.5f);
  }
}

TEST(ExtractParts, MarkerAtBoxCenterLandsAtCropCenter) {
  Image tex(200, 200, 3), dep(200, 200, 1);
  for (int c = 0; c < 3; ++c) tex.at(110, 60, c) = 1.0f;
  dep.at(110, 60) = 1.0f;
  const auto [t, d] = extract_parts(tex, dep, mouth_spanning(40, 100, 80, 120));
  const Image& m = d[PartKind::Mouth].crop;
  int by = 0, bx = 0;
  for (int y = 0; y < kPartSize; ++y)
    for (int x = 0; x < kPartSize; ++x)
      if (m.at(y, x) > m.at(by, bx)) by = y, bx = x;
  EXPECT_NEAR(bx, 32, 1);
  EXPECT_NEAR(by, 32, 1);
  EXPECT_GT(m.at(by, bx), 0.1f);
}

TEST(ExtractParts, OffImageLandmarksThrowEmptyRegion) {
  try {
    extract_parts(Image(50, 50, 3), Image(50, 50, 1), parked({300, 300}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyRegion);
  }
}

TEST(ExtractParts, ModalitySizeMismatchThrows) {
  EXPECT_THROW(extract_parts(Image(50, 50, 3), Image(40, 50, 1), parked({25, 25})), Error);
}

TEST(FaceBox, CoversAllLandmarks) {
  LandmarkSet l = parked({80, 90});
  l.p(1) = {30, 40};
  l.p(49) = {130, 150};
  EXPECT_EQ(face_bbox(l, 7), (BBox{23, 33, 137, 157}));
}

TEST(PartNames, RoundTrip) {
  for (PartKind k : kAllParts) EXPECT_EQ(parse_part(part_name(k)), k);
  EXPECT_FALSE(parse_part("ears").has_value());
}
