#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fer/image.hpp"
#include "fer/image_io.hpp"
#include "oracles.hpp"

using namespace fer;

namespace {

Image ramp(int h, int w) {
  Image img(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(y, x) = static_cast<float>(x) / (w - 1);
  return img;
}

Image smooth(int h, int w) {
  Image img(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(y, x) = static_cast<float>(0.5 + 0.25 * std::sin(x * 0.2) * std::cos(y * 0.15));
  return img;
}

}  // namespace

TEST(Bilinear, IntegerCoordinateReturnsStoredValue) {
  const Image img = oracle::random_image(8, 8, 3, 1);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(bilinear_sample(img, 3, 5, c), img.at(5, 3, c));
}

TEST(Bilinear, MidpointBetweenZeroAndOne) {
  Image img(2, 2, 1);
  img.at(0, 1) = 1.0f;
  img.at(1, 1) = 1.0f;
  EXPECT_DOUBLE_EQ(bilinear_sample(img, 0.5, 0.0, 0), 0.5);
  EXPECT_DOUBLE_EQ(bilinear_sample(img, 0.5, 0.5, 0), 0.5);
}

TEST(Bilinear, OutsideGivesFill) {
  const Image img(4, 4, 3, 0.8f);
  for (double v : bilinear_sample(img, -1, -1)) EXPECT_EQ(v, 0.0);
  for (double v : bilinear_sample(img, 10, 2)) EXPECT_EQ(v, 0.0);
}

TEST(Rotate, ZeroAngleIsExactIdentity) {
  const Image img = oracle::random_image(9, 7, 3, 2);
  EXPECT_EQ(rotate_about(img, {3.3, 2.1}, 0.0), img);
}

TEST(Rotate, QuarterTurnMovesMarkerByHand) {
  // Center (1.5, 1.5). Output pixel p samples the input at
  // c + R(-a)(p - c) with a = pi/2: (x, y) -> (cx - (y - cy), cy + (x - cx)).
  // Input marker at (x=3, y=1) is reached from output p with
  // 1.5 - (py - 1.5) = 3 and 1.5 + (px - 1.5) = 1, so p = (1, 0).
  Image img(4, 4, 1);
  img.at(1, 3) = 1.0f;
  const Image out = rotate_about(img, {1.5, 1.5}, std::numbers::pi / 2);
  EXPECT_NEAR(out.at(0, 1), 1.0, 1e-9);
  double total = 0.0;
  for (float v : out.data()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-9);
  // same convention for points
  const Point p = similarity_map({3, 1}, {1.5, 1.5}, std::numbers::pi / 2, 1.0);
  EXPECT_NEAR(p.x, 1.0, 1e-12);
  EXPECT_NEAR(p.y, 0.0, 1e-12);
}

TEST(Rotate, RoundTripOnSmoothImage) {
  const Image img = smooth(40, 40);
  const Point c{19.5, 19.5};
  const Image back = rotate_about(rotate_about(img, c, 0.3), c, -0.3);
  // interior disc that never leaves the frame under a 0.3 rad turn
  for (int y = 2; y < 38; ++y) {
    for (int x = 2; x < 38; ++x) {
      if (std::hypot(x - c.x, y - c.y) > 17.0) continue;
      EXPECT_NEAR(back.at(y, x), img.at(y, x), 0.05);
    }
  }
}

TEST(Rotate, NonFiniteAngleThrows) {
  EXPECT_THROW(rotate_about(Image(3, 3, 1), {1, 1}, NAN), Error);
}

TEST(Scale, FactorOneIsIdentity) {
  const Image img = oracle::random_image(6, 5, 1, 3);
  EXPECT_EQ(scale_about(img, {2, 2}, 1.0), img);
}

TEST(Scale, CenterPixelIsFixed) {
  Image img(9, 9, 1);
  img.at(4, 6) = 1.0f;
  const Image out = scale_about(img, {6, 4}, 2.0);
  EXPECT_NEAR(out.at(4, 6), 1.0, 1e-9);
}

TEST(Scale, PointMapsAboutCenter) {
  const Point c{10, 20}, p{13, 16};
  const Point q = similarity_map(p, c, 0.0, 2.5);
  EXPECT_NEAR(q.x, c.x + 2.5 * (p.x - c.x), 1e-12);
  EXPECT_NEAR(q.y, c.y + 2.5 * (p.y - c.y), 1e-12);
}

TEST(Scale, RejectsBadFactors) {
  const Image img(4, 4, 1);
  for (double f : {0.0, -1.0, 0.1, 10.0, 1e3}) {
    try {
      scale_about(img, {1, 1}, f);
      ADD_FAILURE() << f;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NonPositiveFactor);
    }
  }
}

TEST(Warp, ConstantImageFixedAwayFromBorder) {
  const Image img(30, 30, 3, 0.7f);
  const Image out = warp_similarity(img, {15, 15}, 0.4, 1.3);
  for (int y = 10; y < 20; ++y)
    for (int x = 10; x < 20; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.at(y, x, c), 0.7, 1e-6);
}

TEST(Warp, OutputStaysInUnitRange) {
  const Image img = oracle::random_image(20, 20, 3, 4);
  const Image out = warp_similarity(img, {7, 9}, 1.1, 0.7);
  for (float v : out.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Crop, FullBoxIsIdentity) {
  const Image img = oracle::random_image(5, 6, 3, 5);
  EXPECT_EQ(crop(img, {0, 0, 6, 5}), img);
}

TEST(Crop, CopiesExactPixels) {
  const Image img = oracle::random_image(4, 4, 1, 6);
  const Image out = crop(img, {1, 2, 3, 4});
  ASSERT_EQ(out.width(), 2);
  ASSERT_EQ(out.height(), 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) EXPECT_EQ(out.at(y, x), img.at(2 + y, 1 + x));
}

TEST(Crop, ClampsAtRightEdge) {
  const Image img(10, 10, 1);
  EXPECT_EQ(crop(img, {4, 0, 13, 10}).width(), 6);
}

TEST(Crop, EmptyAfterClampThrows) {
  try {
    crop(Image(10, 10, 1), {12, 0, 20, 5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyRegion);
  }
}

TEST(Resize, SameSizeIsCopy) {
  const Image img = oracle::random_image(7, 9, 3, 7);
  const Image out = resize(img, 9, 7);
  for (std::size_t i = 0; i < img.data().size(); ++i) EXPECT_NEAR(out.data()[i], img.data()[i], 1e-6);
}

TEST(Resize, ConstantStaysConstant) {
  const Image out = resize(Image(23, 17, 1, 0.7f), 64, 64);
  for (float v : out.data()) EXPECT_NEAR(v, 0.7, 1e-6);
}

TEST(Resize, RampStaysRamp) {
  const int w = 20;
  const Image out = resize(ramp(6, w), 2 * w, 12);
  // pixel-center alignment: output column x samples source (x + 0.5) / 2 - 0.5
  for (int x = 2; x < 2 * w - 2; ++x) {
    const double src = (x + 0.5) / 2.0 - 0.5;
    EXPECT_NEAR(out.at(5, x), src / (w - 1), 1e-3);
  }
}

TEST(Hflip, Involution) {
  const Image img = oracle::random_image(5, 8, 3, 8);
  EXPECT_EQ(hflip(hflip(img)), img);
}

TEST(Hflip, ReversesRow) {
  Image img(1, 3, 1, std::vector<float>{0.1f, 0.2f, 0.3f});
  const Image out = hflip(img);
  EXPECT_EQ(out.at(0, 0), 0.3f);
  EXPECT_EQ(out.at(0, 1), 0.2f);
  EXPECT_EQ(out.at(0, 2), 0.1f);
}

TEST(Hflip, SymmetricUnchanged) {
  Image img(2, 4, 1, std::vector<float>{0.1f, 0.5f, 0.5f, 0.1f, 0.9f, 0.2f, 0.2f, 0.9f});
  EXPECT_EQ(hflip(img), img);
}

TEST(Netpbm, RoundTripBothKinds) {
  for (int ch : {1, 3}) {
    const Image img = oracle::random_image(5, 7, ch, 9 + ch);
    const Image back = decode_netpbm(encode_netpbm(img));
    EXPECT_EQ(back, img);
  }
}

TEST(Netpbm, HeaderCommentsAndTruncation) {
  const std::string good = std::string("P5\n# made by hand\n2 1\n255\n") + char(0) + char(255);
  const Image img = decode_netpbm(good);
  EXPECT_EQ(img.at(0, 1), 1.0f);
  EXPECT_THROW(decode_netpbm(good.substr(0, good.size() - 1)), Error);
  EXPECT_THROW(decode_netpbm("P3\n1 1\n255\n0"), Error);
}

TEST(Image, RejectsBadChannelCount) { EXPECT_THROW(Image(2, 2, 2), Error); }
