#include <gtest/gtest.h>

#include <filesystem>

#include "fer/image_io.hpp"
#include "fer/synth.hpp"
#include "test_util.hpp"

using namespace fer;

TEST(Synth, RowCountAndLayout) {
  const test_util::TempDir dir("synth_rows");
  SynthOptions opt;
  opt.n_subjects = 10;
  const auto recs = synth_dataset(dir.path(), opt);
  EXPECT_EQ(recs.size(), 130u);
  EXPECT_EQ(read_manifest(dir.path() / "manifest.csv").size(), 130u);
  for (const auto& r : recs) {
    EXPECT_TRUE(fs::exists(r.texture_path));
    EXPECT_TRUE(fs::exists(r.depth_path));
    EXPECT_TRUE(fs::exists(r.landmarks_path));
  }
  const Image t = read_image(recs.front().texture_path);
  EXPECT_EQ(t.width(), kSynthImageSize);
  EXPECT_EQ(t.channels(), 3);
  EXPECT_EQ(read_image(recs.front().depth_path).channels(), 1);
}

TEST(Synth, SameSeedSameBytes) {
  const test_util::TempDir a("synth_a"), b("synth_b");
  SynthOptions opt;
  opt.n_subjects = 2;
  opt.seed = 5;
  const auto ra = synth_dataset(a.path(), opt);
  opt.jobs = 3;
  const auto rb = synth_dataset(b.path(), opt);
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(read_file(ra[i].texture_path), read_file(rb[i].texture_path));
    EXPECT_EQ(read_file(ra[i].depth_path), read_file(rb[i].depth_path));
    EXPECT_EQ(read_file(ra[i].landmarks_path), read_file(rb[i].landmarks_path));
  }
  EXPECT_EQ(read_file(a.path() / "truth.csv"), read_file(b.path() / "truth.csv"));
}

TEST(Synth, TooFewSubjects) {
  const test_util::TempDir dir("synth_few");
  SynthOptions opt;
  opt.n_subjects = 1;
  EXPECT_THROW(synth_dataset(dir.path(), opt), Error);
}

TEST(Synth, ExpressionsMoveLandmarksSymmetrically) {
  const SynthSubject subject = SynthSubject::draw(3);
  const auto neutral = expression_landmarks(subject, Expression::Neutral, 0);
  for (auto e : kBasicExpressions) {
    const auto moved = expression_landmarks(subject, e, 4);
    double shift = 0.0;
    for (int i = 0; i < kNumLandmarks; ++i) shift += std::hypot(moved[i].x - neutral[i].x, moved[i].y - neutral[i].y);
    EXPECT_GT(shift, 10.0) << expression_name(e);
    const auto weaker = expression_landmarks(subject, e, 3);
    double weaker_shift = 0.0;
    for (int i = 0; i < kNumLandmarks; ++i) weaker_shift += std::hypot(weaker[i].x - neutral[i].x, weaker[i].y - neutral[i].y);
    EXPECT_NEAR(weaker_shift, 0.75 * shift, 1e-9);
  }
}

TEST(Synth, RenderedLandmarksFollowPose) {
  const SynthSubject subject = SynthSubject::draw(4);
  const auto canon = expression_landmarks(subject, Expression::Happy, 4);
  SynthPose pose;
  pose.angle = 0.3;
  pose.scale = 1.1;
  pose.center = {110, 108};
  const SynthFace face = render_face(subject, canon, pose, 9);
  EXPECT_NEAR(rotation_angle(face.landmarks) - rotation_angle(LandmarkSet(canon)), 0.3, 1e-9);
  EXPECT_NEAR(interocular_distance(face.landmarks), 1.1 * std::hypot(canon[25].x - canon[22].x, canon[25].y - canon[22].y), 1e-9);
}
