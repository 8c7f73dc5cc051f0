#pragma once

// Synthetic texture/depth face pairs with 49 ground-truth landmarks. Faces are
// drawn procedurally in a canonical frame (inner eye corners 55 px apart,
// origin between the eyes and mouth) and placed with a random in-plane
// rotation, scale and offset. Expressions displace brow, eye, nose and mouth
// landmarks; the drawing follows the landmarks, so the class signal lives in
// the part regions. Each subject gets its own geometry, skin tone and
// low-frequency blotches spread over the face.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fer/harness.hpp"
#include "fer/image.hpp"
#include "fer/image_io.hpp"
#include "fer/landmarks.hpp"
#include "fer/parallel.hpp"

namespace fer {

inline constexpr int kSynthImageSize = 224;

/// Upright neutral layout, 1-based landmark order, origin at the face center.
inline const std::array<Point, kNumLandmarks>& canonical_landmarks() {
  static const std::array<Point, kNumLandmarks> pts = {{
      // brows 1-10
      {-60, -40}, {-48, -46}, {-36, -48}, {-24, -47}, {-12, -44},
      {12, -44}, {24, -47}, {36, -48}, {48, -46}, {60, -40},
      // nose bridge 11-14, nostrils 15-19
      {0, -28}, {0, -18}, {0, -8}, {0, 2},
      {-14, 12}, {-7, 14}, {0, 16}, {7, 14}, {14, 12},
      // eyes 20-25, 26-31
      {-55, -22}, {-46, -28}, {-36, -28}, {-27.5, -22}, {-36, -17}, {-46, -17},
      {27.5, -22}, {36, -28}, {46, -28}, {55, -22}, {46, -17}, {36, -17},
      // outer mouth 32-43
      {-30, 45}, {-18, 41}, {-7, 39}, {0, 40}, {7, 39}, {18, 41},
      {30, 45}, {19, 53}, {9, 56}, {0, 57}, {-9, 56}, {-19, 53},
      // inner mouth 44-49
      {-10, 45}, {0, 45}, {10, 45}, {10, 47}, {0, 48}, {-10, 47},
  }};
  return pts;
}

namespace detail {

struct Move {
  int index;  // 1-based, image-left side; mirrored partner gets the x-flipped move
  double dx;
  double dy;
};

// Mirror partner of every landmark under x -> -x.
inline int mirror_index(int i) {
  static const std::array<int, kNumLandmarks + 1> m = {
      0,  10, 9,  8,  7,  6,  5,  4,  3,  2,  1,  11, 12, 13, 14, 19, 18,
      17, 16, 15, 29, 28, 27, 26, 31, 30, 23, 22, 21, 20, 25, 24, 38, 37,
      36, 35, 34, 33, 32, 43, 42, 41, 40, 39, 46, 45, 44, 49, 48, 47};
  return m[static_cast<std::size_t>(i)];
}

inline std::vector<Move> expression_moves(Expression e) {
  switch (e) {
    case Expression::Angry:
      return {{4, 3, 6},  {5, 4, 7},   {3, 1, 3},  {21, 0, 3}, {22, 0, 3}, {24, 0, -2}, {25, 0, -2},
              {33, 0, 2}, {34, 0, 2},  {35, 0, 2}, {43, 0, -2}, {42, 0, -2}, {41, 0, -2}, {49, 0, -2},
              {48, 0, -3}};
    case Expression::Disgust:
      return {{15, 0, -4}, {16, 0, -4}, {17, 0, -4}, {33, 0, -5}, {34, 0, -6}, {35, 0, -6}, {44, 0, -4},
              {45, 0, -4}, {4, 1, 4},   {5, 2, 4},   {24, 0, -3}, {25, 0, -3}, {32, 0, 2}};
    case Expression::Fear:
      return {{1, 0, -3},  {2, 0, -4},  {3, 0, -4}, {4, 2, -6}, {5, 3, -6}, {21, 0, -4}, {22, 0, -4},
              {32, -6, 2}, {43, 0, 5},  {42, 0, 5}, {41, 0, 5}, {49, 0, 5}, {48, 0, 5}};
    case Expression::Happy:
      return {{32, -6, -6}, {33, -2, -2}, {43, 0, 2},  {42, 0, 2},   {41, 0, 2},
              {49, 0, 3},   {48, 0, 3},   {24, 0, -3}, {25, 0, -3}};
    case Expression::Sad:
      return {{32, 2, 6}, {43, 0, 1}, {4, 0, -5}, {5, 0, -6}, {1, 0, 2}, {2, 0, 2}, {21, 0, 2}, {22, 0, 2}};
    case Expression::Surprise:
      return {{1, 0, -7},  {2, 0, -7},  {3, 0, -7},  {4, 0, -7},  {5, 0, -7},  {21, 0, -4}, {22, 0, -4},
              {24, 0, 1},  {25, 0, 1},  {32, 3, 4},  {43, 0, 12}, {42, 0, 12}, {41, 0, 12}, {49, 0, 12},
              {48, 0, 12}};
    case Expression::Neutral:
      return {};
  }
  return {};
}

inline double segment_distance_sq(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len = vx * vx + vy * vy;
  double t = len > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = p.x - (a.x + t * vx), ey = p.y - (a.y + t * vy);
  return ex * ex + ey * ey;
}

inline double polyline_distance_sq(Point p, const std::vector<Point>& line, bool closed) {
  double best = INFINITY;
  const std::size_t n = line.size();
  for (std::size_t i = 0; i + 1 < n; ++i) best = std::min(best, segment_distance_sq(p, line[i], line[i + 1]));
  if (closed && n > 2) best = std::min(best, segment_distance_sq(p, line[n - 1], line[0]));
  return best;
}

inline bool inside_polygon(Point p, const std::vector<Point>& poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

}  // namespace detail

/// Per-subject appearance drawn once from the subject seed.
struct SynthSubject {
  std::array<Point, kNumLandmarks> base{};  // canonical landmarks with identity jitter
  std::array<double, 3> skin{};
  std::array<double, 3> lip{};
  double background = 0.1;
  struct Blob {
    Point center;
    double sigma;
    double amplitude;
  };
  std::vector<Blob> blobs;
  double dome = 0.5;
  double nose_height = 0.25;

  static SynthSubject draw(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SynthSubject s;
    const double sx = 1.0 + 0.06 * u(rng), sy = 1.0 + 0.06 * u(rng);
    const auto& canon = canonical_landmarks();
    for (int i = 0; i < kNumLandmarks; ++i) {
      s.base[i] = {canon[i].x * sx + 1.2 * u(rng), canon[i].y * sy + 1.2 * u(rng)};
    }
    const double tone = 0.12 * u(rng);
    s.skin = {0.72 + tone + 0.04 * u(rng), 0.56 + tone + 0.04 * u(rng), 0.46 + tone + 0.04 * u(rng)};
    s.lip = {0.68 + 0.06 * u(rng), 0.30 + 0.05 * u(rng), 0.30 + 0.05 * u(rng)};
    s.background = 0.15 + 0.1 * u(rng);
    for (int b = 0; b < 8; ++b) {
      s.blobs.push_back({{60.0 * u(rng), 10.0 + 70.0 * u(rng)}, 10.0 + 6.0 * u(rng), 0.12 * u(rng)});
    }
    s.dome = 0.5 + 0.08 * u(rng);
    s.nose_height = 0.25 + 0.05 * u(rng);
    return s;
  }
};

struct SynthPose {
  double angle = 0.0;
  double scale = 1.0;
  Point center{kSynthImageSize / 2.0, kSynthImageSize / 2.0};
};

struct SynthFace {
  Image texture;
  Image depth;
  LandmarkSet landmarks;
};

/// Canonical landmarks of a subject showing `e` at `intensity` (0..4).
inline std::array<Point, kNumLandmarks> expression_landmarks(const SynthSubject& subject, Expression e,
                                                             int intensity) {
  auto pts = subject.base;
  const double k = intensity / 4.0;
  for (const auto& m : detail::expression_moves(e)) {
    pts[m.index - 1].x += k * m.dx;
    pts[m.index - 1].y += k * m.dy;
    const int j = detail::mirror_index(m.index);
    if (j != m.index) {
      pts[j - 1].x -= k * m.dx;
      pts[j - 1].y += k * m.dy;
    }
  }
  return pts;
}

inline SynthFace render_face(const SynthSubject& subject, const std::array<Point, kNumLandmarks>& canon,
                             const SynthPose& pose, std::uint64_t noise_seed, int size = kSynthImageSize) {
  auto group = [&](int first, int last) {
    std::vector<Point> v;
    for (int i = first; i <= last; ++i) v.push_back(canon[i - 1]);
    return v;
  };
  const auto brow_r = group(1, 5), brow_l = group(6, 10), bridge = group(11, 14), nostrils = group(15, 19);
  const auto eye_r = group(20, 25), eye_l = group(26, 31), mouth = group(32, 43), inner = group(44, 49);
  auto centroid = [](const std::vector<Point>& v) {
    Point c;
    for (auto p : v) c.x += p.x, c.y += p.y;
    return Point{c.x / v.size(), c.y / v.size()};
  };
  const Point iris_r = centroid(eye_r), iris_l = centroid(eye_l);

  SynthFace face;
  face.texture = Image(size, size, 3);
  face.depth = Image(size, size, 1);
  std::mt19937_64 rng(noise_seed);
  std::uniform_real_distribution<double> noise(-0.015, 0.015);
  const double c = std::cos(pose.angle), s = std::sin(pose.angle);

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      // pixel -> canonical frame (inverse of the placement similarity)
      const double dx = x - pose.center.x, dy = y - pose.center.y;
      const Point q{(c * dx - s * dy) / pose.scale, (s * dx + c * dy) / pose.scale};
      const double er = (q.x * q.x) / (72.0 * 72.0) + ((q.y - 5.0) * (q.y - 5.0)) / (92.0 * 92.0);
      std::array<double, 3> rgb;
      double z = 0.0;
      if (er < 1.0) {
        rgb = subject.skin;
        double shade = 0.0;
        for (const auto& b : subject.blobs) {
          const double ddx = q.x - b.center.x, ddy = q.y - b.center.y;
          shade += b.amplitude * std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * b.sigma * b.sigma));
        }
        for (auto& v : rgb) v += shade;
        z = subject.dome * std::sqrt(1.0 - er);

        auto darken = [&](double amount) {
          for (auto& v : rgb) v *= 1.0 - amount;
        };
        for (const auto* brow : {&brow_r, &brow_l}) {
          const double d2 = detail::polyline_distance_sq(q, *brow, false);
          if (d2 < 100.0) {
            darken(0.75 * std::exp(-d2 / (2.0 * 3.0 * 3.0)));
            z += 0.05 * std::exp(-d2 / (2.0 * 5.0 * 5.0));
          }
        }
        const double nose_d2 = detail::polyline_distance_sq(q, bridge, false);
        z += subject.nose_height * std::exp(-nose_d2 / (2.0 * 7.0 * 7.0));
        const double nostril_d2 = detail::polyline_distance_sq(q, nostrils, false);
        if (nostril_d2 < 64.0) {
          darken(0.5 * std::exp(-nostril_d2 / (2.0 * 2.0 * 2.0)));
          z += 0.08 * std::exp(-nostril_d2 / (2.0 * 4.0 * 4.0));
        }
        for (int side = 0; side < 2; ++side) {
          const auto& eye = side ? eye_l : eye_r;
          const Point iris = side ? iris_l : iris_r;
          const double d2 = detail::polyline_distance_sq(q, eye, true);
          if (detail::inside_polygon(q, eye)) {
            rgb = {0.92, 0.92, 0.9};
            const double ir = std::hypot(q.x - iris.x, q.y - iris.y);
            if (ir < 5.5) rgb = {0.25, 0.18, 0.12};
            z -= 0.05;
          }
          if (d2 < 36.0) darken(0.7 * std::exp(-d2 / (2.0 * 1.2 * 1.2)));
        }
        if (detail::inside_polygon(q, mouth)) {
          rgb = subject.lip;
          z += 0.06;
          if (detail::inside_polygon(q, inner)) {
            rgb = {0.12, 0.05, 0.05};
            z -= 0.12;
          }
        }
        const double mouth_d2 = detail::polyline_distance_sq(q, mouth, true);
        if (mouth_d2 < 36.0) darken(0.35 * std::exp(-mouth_d2 / (2.0 * 1.2 * 1.2)));
      } else {
        rgb = {subject.background, subject.background, subject.background};
      }
      for (int ch = 0; ch < 3; ++ch) face.texture.at(y, x, ch) = clamp_unit(rgb[ch] + noise(rng));
      face.depth.at(y, x) = clamp_unit(z + 0.1 * (er < 1.0) + noise(rng) * 0.5);
    }
  }

  std::array<Point, kNumLandmarks> placed{};
  for (int i = 0; i < kNumLandmarks; ++i) {
    const Point p{pose.center.x + canon[i].x, pose.center.y + canon[i].y};
    placed[i] = similarity_map(p, pose.center, pose.angle, pose.scale);
  }
  face.landmarks = LandmarkSet(placed);
  return face;
}

struct SynthOptions {
  std::size_t n_subjects = 10;
  std::uint64_t seed = 1;
  std::vector<int> intensities = {3, 4};
  bool neutral = true;
  std::size_t jobs = 1;
};

struct SynthTruth {
  std::string sample_id;
  double angle = 0.0;
  double scale = 1.0;
};

inline std::string synth_subject_id(std::size_t i) {
  std::string n = std::to_string(i + 1);
  return "S" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n;
}

/// Writes images, landmark files, `manifest.csv` and `truth.csv` (placement
/// angle and scale per sample) under `out_dir`. Returns the manifest records.
inline std::vector<SampleRecord> synth_dataset(const fs::path& out_dir, const SynthOptions& opt) {
  if (opt.n_subjects < 2) throw Error(ErrorCode::TooFewSubjects, "synth needs at least 2 subjects");
  struct Job {
    SampleRecord record;
    std::size_t subject;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < opt.n_subjects; ++s) {
    std::vector<std::pair<Expression, int>> rows;
    for (auto e : kBasicExpressions) {
      for (int i : opt.intensities) rows.emplace_back(e, i);
    }
    if (opt.neutral) rows.emplace_back(Expression::Neutral, 0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      SampleRecord rec;
      rec.subject_id = synth_subject_id(s);
      rec.expression = rows[r].first;
      rec.intensity = rows[r].second;
      const fs::path stem = out_dir / rec.subject_id / rec.sample_id();
      rec.texture_path = stem.string() + "_texture.ppm";
      rec.depth_path = stem.string() + "_depth.pgm";
      rec.landmarks_path = stem.string() + "_landmarks.txt";
      jobs.push_back({rec, s, derive_seed(derive_seed(opt.seed, s), r + 1)});
    }
  }

  std::vector<SynthTruth> truth(jobs.size());
  parallel_for(jobs.size(), opt.jobs, [&](std::size_t j) {
    const auto& job = jobs[j];
    const SynthSubject subject = SynthSubject::draw(derive_seed(opt.seed, job.subject));
    std::mt19937_64 rng(job.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SynthPose pose;
    pose.angle = -0.35 + 0.7 * u(rng);
    pose.scale = 0.8 + 0.45 * u(rng);
    pose.center = {kSynthImageSize / 2.0 + 12.0 * (u(rng) - 0.5), kSynthImageSize / 2.0 - 6.0 + 12.0 * (u(rng) - 0.5)};
    auto canon = expression_landmarks(subject, job.record.expression, job.record.intensity);
    std::normal_distribution<double> jitter(0.0, 0.3);
    for (auto& p : canon) p.x += jitter(rng), p.y += jitter(rng);
    const SynthFace face = render_face(subject, canon, pose, rng());
    write_image(job.record.texture_path, face.texture);
    write_image(job.record.depth_path, face.depth);
    write_landmarks(job.record.landmarks_path, face.landmarks);
    truth[j] = {job.record.sample_id(), pose.angle, pose.scale};
  });

  std::vector<SampleRecord> records;
  std::ostringstream t;
  t.precision(17);
  t << "sample_id,angle,scale\n";
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    records.push_back(jobs[j].record);
    t << truth[j].sample_id << ',' << truth[j].angle << ',' << truth[j].scale << '\n';
  }
  write_manifest(out_dir / "manifest.csv", records);
  write_file_atomic(out_dir / "truth.csv", t.str());
  return records;
}

}  // namespace fer
