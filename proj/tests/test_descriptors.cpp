#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fer/descriptors.hpp"
#include "oracles.hpp"

using namespace fer;

TEST(Hog, LengthFor64) {
  EXPECT_EQ(hog_length(64, 64), 1764u);
  EXPECT_EQ(hog(Image(64, 64, 3, 0.3f)).size(), 1764u);
}

TEST(Hog, ConstantImageIsAllZero) {
  for (double v : hog(Image(64, 64, 1, 0.4f)).values) EXPECT_EQ(v, 0.0);
}

TEST(Hog, HorizontalRampUsesOnlyFirstBin) {
  Image img(64, 64, 1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) img.at(y, x) = static_cast<float>(x / 63.0);
  const auto v = hog(img).values;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i % 9 == 0) EXPECT_GT(v[i], 0.0) << i;
    else EXPECT_EQ(v[i], 0.0) << i;
  }
}

TEST(Hog, MatchesOracleOnRandomImages) {
  for (std::uint64_t seed : {1, 2, 3}) {
    for (int ch : {1, 3}) {
      const Image img = oracle::random_image(64, 64, ch, seed * 10 + ch);
      const auto got = hog(img).values;
      const auto want = oracle::hog(img);
      ASSERT_EQ(got.size(), want.size());
      double worst = 0.0;
      for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
      EXPECT_LE(worst, 1e-5) << "seed " << seed << " channels " << ch;
    }
  }
}

TEST(Hog, BlockNormsAtMostOne) {
  const auto v = hog(oracle::random_image(64, 64, 3, 9)).values;
  for (std::size_t b = 0; b < v.size(); b += 36) {
    double sq = 0.0;
    for (std::size_t i = b; i < b + 36; ++i) sq += v[i] * v[i];
    EXPECT_LE(std::sqrt(sq), 1.0 + 1e-6);
  }
}

TEST(Hog, NotDivisibleThrows) {
  try {
    hog(Image(60, 64, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadDimensions);
  }
}

TEST(Ulbp, LengthFor64) { EXPECT_EQ(ulbp(Image(64, 64, 1, 0.1f)).size(), 944u); }

TEST(Ulbp, FiftyEightUniformCodes) {
  const auto& table = uniform_lbp_table();
  int uniform = 0;
  for (int code = 0; code < 256; ++code) {
    EXPECT_EQ(table[code], oracle::uniform_bin(code)) << code;
    uniform += table[code] != 58;
  }
  EXPECT_EQ(uniform, 58);
}

TEST(Ulbp, ConstantImageFillsAllOnesBin) {
  const auto v = ulbp(Image(64, 64, 1, 0.5f)).values;
  const int ones_bin = oracle::uniform_bin(255);
  for (std::size_t cell = 0; cell < 16; ++cell) {
    for (int b = 0; b < kLbpBins; ++b) EXPECT_EQ(v[cell * kLbpBins + b], b == ones_bin ? 1.0 : 0.0);
  }
}

TEST(Ulbp, ExactCountsMatchOracle) {
  for (std::uint64_t seed : {4, 5, 6}) {
    const Image img = oracle::random_image(64, 64, 1, seed);
    EXPECT_EQ(ulbp_counts(img), oracle::ulbp_counts(img));
  }
}

TEST(Ulbp, CountsPartitionInteriorPixels) {
  const auto counts = ulbp_counts(oracle::random_image(64, 64, 3, 7));
  EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), 0u), 62u * 62u);
}

TEST(Ulbp, EveryCellSumsToOne) {
  const auto v = ulbp(oracle::random_image(64, 64, 3, 8)).values;
  for (std::size_t cell = 0; cell < 16; ++cell) {
    double s = 0.0;
    for (int b = 0; b < kLbpBins; ++b) s += v[cell * kLbpBins + b];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Ulbp, SingleCellSumsToOne) {
  const auto v = ulbp(oracle::random_image(16, 16, 1, 10)).values;
  ASSERT_EQ(v.size(), 59u);
  EXPECT_NEAR(std::accumulate(v.begin(), v.end(), 0.0), 1.0, 1e-12);
}

TEST(Descriptors, InvariantToGlobalOffset) {
  // Quantized so the offset is exact in float and pixel order is preserved.
  Image img = oracle::random_image(64, 64, 1, 11);
  for (float& v : img.data()) v = std::floor(v * 128.0f) / 256.0f;
  Image shifted = img;
  for (float& v : shifted.data()) v += 0.25f;
  const auto h0 = hog(img).values, h1 = hog(shifted).values;
  for (std::size_t i = 0; i < h0.size(); ++i) EXPECT_NEAR(h0[i], h1[i], 1e-6);
  const auto u0 = ulbp(img).values, u1 = ulbp(shifted).values;
  for (std::size_t i = 0; i < u0.size(); ++i) EXPECT_NEAR(u0[i], u1[i], 1e-6);
}

TEST(EarlyFuse, Examples) {
  const FeatureVector a{{1, 2, 3}, "a"}, b{{4, 5, 6, 7}, "b"};
  EXPECT_EQ(early_fuse(std::vector<FeatureVector>{a}).values, a.values);
  const std::vector<FeatureVector> ab{a, b};
  EXPECT_EQ(early_fuse(ab).values, (std::vector<double>{1, 2, 3, 4, 5, 6, 7}));
  const FeatureVector h = hog(Image(64, 64, 1, 0.2f));
  EXPECT_EQ(early_fuse(std::vector<FeatureVector>(4, h)).size(), 7056u);
  EXPECT_THROW(early_fuse(std::vector<FeatureVector>{}), Error);
}
