#include <gtest/gtest.h>

#include <random>
#include <set>

#include "fer/config.hpp"
#include "fer/harness.hpp"
#include "fer/synth.hpp"

using namespace fer;

namespace {

std::vector<std::string> subject_names(std::size_t n) {
  std::vector<std::string> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(synth_subject_id(i));
  return s;
}

// One sample per (subject, expression, intensity) with a one-hot label code
// in the vector so an oracle can read the label back.
std::vector<LabeledSample> labeled(std::size_t n_subjects, std::vector<int> intensities = {3, 4}) {
  std::vector<LabeledSample> out;
  for (const auto& subj : subject_names(n_subjects)) {
    for (int label = 0; label < 6; ++label) {
      for (int i : intensities) {
        LabeledSample s;
        s.subject_id = subj;
        s.sample_id = subj + "_" + std::to_string(label) + std::to_string(i);
        s.label = label;
        s.intensity = i;
        s.x = Eigen::VectorXd::Zero(6);
        s.x(label) = 1.0;
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

class OracleClassifier : public FoldClassifier {
 public:
  void fit(const Eigen::MatrixXd&, std::span<const int>) override {}
  int predict(const Eigen::VectorXd& x) const override {
    Eigen::Index i;
    x.maxCoeff(&i);
    return static_cast<int>(i);
  }
};

class RandomClassifier : public FoldClassifier {
 public:
  explicit RandomClassifier(std::uint64_t seed) : rng_(seed) {}
  void fit(const Eigen::MatrixXd&, std::span<const int>) override {}
  int predict(const Eigen::VectorXd&) const override { return std::uniform_int_distribution<int>(0, 5)(rng_); }

 private:
  mutable std::mt19937_64 rng_;
};

// Records which subjects it trained on so the test can check the held-out ones.
class SpyClassifier : public FoldClassifier {
 public:
  explicit SpyClassifier(std::size_t* fits) : fits_(fits) {}
  void fit(const Eigen::MatrixXd& X, std::span<const int> y) override {
    EXPECT_EQ(static_cast<std::size_t>(X.rows()), y.size());
    ++*fits_;
  }
  int predict(const Eigen::VectorXd&) const override { return 0; }

 private:
  std::size_t* fits_;
};

}  // namespace

TEST(SplitSubjects, HundredGivesSixtyForty) {
  const auto s = split_subjects(subject_names(100), 7);
  EXPECT_EQ(s.eval.size(), 60u);
  EXPECT_EQ(s.finetune.size(), 40u);
  std::set<std::string> all(s.eval.begin(), s.eval.end());
  for (const auto& f : s.finetune) EXPECT_TRUE(all.insert(f).second) << f;
  EXPECT_EQ(all.size(), 100u);
}

TEST(SplitSubjects, ScaledAndSeeded) {
  const auto a = split_subjects(subject_names(10), 3);
  EXPECT_EQ(a.eval.size(), 6u);
  EXPECT_EQ(a.finetune.size(), 4u);
  const auto b = split_subjects(subject_names(10), 3);
  EXPECT_EQ(a.eval, b.eval);
  EXPECT_NE(a.eval, split_subjects(subject_names(10), 4).eval);
  EXPECT_THROW(split_subjects(subject_names(1), 3), Error);
}

TEST(MakeFolds, SizesAndDisjointness) {
  const auto f = make_folds(subject_names(60), 10, 9);
  ASSERT_EQ(f.size(), 10u);
  for (const auto& fold : f) EXPECT_EQ(fold.size(), 6u);
  EXPECT_NO_THROW(assert_subject_independent(f));

  auto sizes = [](const Folds& folds) {
    std::multiset<std::size_t> s;
    for (const auto& fold : folds) s.insert(fold.size());
    return s;
  };
  EXPECT_EQ(sizes(make_folds(subject_names(7), 3, 1)), (std::multiset<std::size_t>{2, 2, 3}));
}

TEST(MakeFolds, ExhaustivePairwiseSubjectIndependence) {
  const auto f = make_folds(subject_names(23), 5, 11);
  for (std::size_t a = 0; a < f.size(); ++a) {
    for (std::size_t b = 0; b < f.size(); ++b) {
      if (a == b) continue;
      for (const auto& s : f[a]) EXPECT_EQ(std::count(f[b].begin(), f[b].end(), s), 0);
    }
  }
}

TEST(MakeFolds, BadCounts) {
  try {
    make_folds(subject_names(3), 4, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadFoldCount);
  }
  EXPECT_THROW(make_folds(subject_names(3), 1, 1), Error);
  EXPECT_THROW(assert_subject_independent(Folds{{"A", "B"}, {"B"}}), Error);
}

TEST(Confusion, Examples) {
  const std::vector<int> truth = {0, 1, 2, 3, 4, 5, 0, 1};
  auto m = confusion_matrix(truth, truth);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) EXPECT_EQ(m[r][c], r == c ? 1.0 : 0.0);
  m = confusion_matrix(truth, std::vector<int>(truth.size(), 0));
  for (int r = 0; r < 6; ++r) EXPECT_EQ(m[r][0], 1.0);
  EXPECT_THROW(confusion_matrix(truth, std::vector<int>{1}), Error);
}

TEST(Confusion, RowsSumToOne) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> d(0, 5);
  std::vector<int> t, p;
  for (int i = 0; i < 300; ++i) t.push_back(i % 6), p.push_back(d(rng));
  const auto m = confusion_matrix(t, p);
  for (const auto& row : m) {
    double s = 0.0;
    for (double v : row) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Protocol, OracleClassifierIsPerfect) {
  ProtocolConfig cfg;
  cfg.n_tests = 5;
  cfg.n_folds = 6;
  const auto samples = labeled(8);
  const auto report = run_protocol(samples, subject_names(8), cfg, [](std::uint64_t) {
    return std::make_unique<OracleClassifier>();
  });
  EXPECT_EQ(report.mean_accuracy, 1.0);
  for (const auto& t : report.tests) EXPECT_EQ(t.samples, 8u * 12u);
}

TEST(Protocol, RandomClassifierNearChance) {
  ProtocolConfig cfg;
  cfg.n_tests = 100;
  cfg.n_folds = 10;
  cfg.n_subjects_eval = 60;
  const auto samples = labeled(60);
  const auto report = run_protocol(samples, subject_names(60), cfg, [](std::uint64_t seed) {
    return std::make_unique<RandomClassifier>(seed);
  });
  EXPECT_NEAR(report.mean_accuracy, 1.0 / 6.0, 0.03);
  for (const auto& t : report.tests) EXPECT_EQ(t.samples, 720u);
}

TEST(Protocol, SubsetsAndFoldsVaryByTest) {
  ProtocolConfig cfg;
  cfg.n_tests = 4;
  cfg.n_folds = 3;
  cfg.n_subjects_eval = 6;
  const auto report = run_protocol(labeled(12), subject_names(12), cfg, [](std::uint64_t) {
    return std::make_unique<OracleClassifier>();
  });
  std::set<std::vector<std::string>> subsets;
  for (const auto& t : report.tests) {
    EXPECT_EQ(t.subjects.size(), 6u);
    subsets.insert(t.subjects);
    EXPECT_NO_THROW(assert_subject_independent(t.folds));
  }
  EXPECT_GT(subsets.size(), 1u);
}

TEST(Protocol, FiltersIntensityAndPool) {
  ProtocolConfig cfg;
  cfg.n_tests = 2;
  cfg.n_folds = 2;
  auto samples = labeled(6, {1, 2, 3, 4});
  const std::vector<std::string> pool = {"S001", "S002", "S003", "S004"};
  std::size_t fits = 0;
  const auto report = run_protocol(samples, pool, cfg, [&](std::uint64_t) { return std::make_unique<SpyClassifier>(&fits); });
  EXPECT_EQ(fits, 4u);
  for (const auto& t : report.tests) {
    EXPECT_EQ(t.samples, 4u * 12u);
    for (const auto& s : t.subjects) EXPECT_NE(std::find(pool.begin(), pool.end(), s), pool.end());
  }
}

TEST(Protocol, TooFewSubjects) {
  ProtocolConfig cfg;
  cfg.n_folds = 10;
  try {
    run_protocol(labeled(6), subject_names(6), cfg, [](std::uint64_t) { return std::make_unique<OracleClassifier>(); });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewSubjects);
  }
}

TEST(Protocol, SameSeedSameReportBytes) {
  ProtocolConfig cfg;
  cfg.n_tests = 10;
  cfg.n_folds = 3;
  const auto samples = labeled(9);
  auto run = [&] {
    return report_to_json(run_protocol(samples, subject_names(9), cfg, [](std::uint64_t seed) {
             return std::make_unique<RandomClassifier>(seed);
           })).dump(2);
  };
  EXPECT_EQ(run(), run());
  const std::string a = run();
  cfg.seed = 2;
  EXPECT_NE(a, run());
}

TEST(Protocol, PcaSvmOnSeparableVectors) {
  ProtocolConfig cfg;
  cfg.n_tests = 2;
  cfg.n_folds = 3;
  auto samples = labeled(6);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (auto& s : samples) {
    Eigen::VectorXd x(10);
    for (Eigen::Index i = 0; i < 10; ++i) x(i) = noise(rng);
    x.head(6) += 3.0 * s.x;
    s.x = x;
  }
  const auto report = run_protocol(samples, subject_names(6), cfg, [](std::uint64_t) {
    return std::make_unique<PcaSvmClassifier>(0.99, KernelParams{}, 1e-3);
  });
  EXPECT_GE(report.mean_accuracy, 0.95);
}

TEST(Report, JsonAndTextShape) {
  ProtocolConfig cfg;
  cfg.n_tests = 2;
  cfg.n_folds = 2;
  auto report = run_protocol(labeled(4), subject_names(4), cfg, [](std::uint64_t) {
    return std::make_unique<OracleClassifier>();
  });
  report.finetune_subjects = {"S009"};
  const auto j = report_to_json(report);
  EXPECT_EQ(j["mean_accuracy"].get<double>(), 1.0);
  EXPECT_EQ(j["test_accuracies"].size(), 2u);
  EXPECT_EQ(j["confusion"].size(), 6u);
  EXPECT_EQ(j["tests"][0]["folds"].size(), 2u);
  EXPECT_EQ(j["finetune_subjects"][0], "S009");
  EXPECT_NE(report_to_text(report).find("Happy"), std::string::npos);
}

TEST(Manifest, ParseAndRoundTrip) {
  const std::string text =
      "subject_id,expression,intensity,texture_path,depth_path,landmarks_path,feat_tex_mouth\n"
      "F0001,Happy,4,a/t.ppm,a/d.pgm,a/l.txt,f/m.fpt\n"
      "F0001,Neutral,0,b/t.ppm,b/d.pgm,b/l.txt,\n";
  const auto recs = parse_manifest(text, "/data");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].expression, Expression::Happy);
  EXPECT_EQ(recs[0].texture_path, fs::path("/data/a/t.ppm"));
  EXPECT_EQ(recs[0].features.at("feat_tex_mouth"), fs::path("/data/f/m.fpt"));
  EXPECT_TRUE(recs[1].features.empty());
  EXPECT_FALSE(recs[1].is_basic());
  EXPECT_EQ(recs[0].sample_id(), "F0001_HA04");
  const auto again = parse_manifest(format_manifest(recs, "/data"), "/data");
  EXPECT_EQ(again[0].features, recs[0].features);
  EXPECT_EQ(again[1].landmarks_path, recs[1].landmarks_path);
}

TEST(Manifest, Rejections) {
  const std::string header = "subject_id,expression,intensity,texture_path,depth_path,landmarks_path\n";
  EXPECT_THROW(parse_manifest("", "."), Error);
  EXPECT_THROW(parse_manifest("subject,expression\n", "."), Error);
  EXPECT_THROW(parse_manifest(header + "A,Happy,5,t,d,l\n", "."), Error);
  EXPECT_THROW(parse_manifest(header + "A,Smug,3,t,d,l\n", "."), Error);
  EXPECT_THROW(parse_manifest(header + "A,Happy,3,t,d\n", "."), Error);
  EXPECT_THROW(parse_manifest(header + "A,Neutral,2,t,d,l\n", "."), Error);
  EXPECT_THROW(parse_manifest("subject_id,expression,intensity,texture_path,depth_path,landmarks_path,extra\n", "."), Error);
  EXPECT_TRUE(parse_manifest(header, ".").empty());
}

TEST(DeriveSeed, DistinctStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) seen.insert(derive_seed(42, s));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
}

TEST(Config, DefaultsMatchDocumentedValues) {
  const auto c = default_config();
  EXPECT_EQ(c.ref_interocular_distance, 55.0);
  EXPECT_EQ(c.part_pad, 7.0);
  EXPECT_EQ(c.train.batch_size, 12u);
  EXPECT_EQ(c.train.lr_start, 2e-4);
  EXPECT_EQ(c.train.lr_end, 2e-5);
  EXPECT_EQ(c.train.epochs, 150u);
  EXPECT_EQ(c.fc6, 4096u);
  EXPECT_EQ(c.fc7, 2048u);
  EXPECT_EQ(c.pca_target, 0.99);
  EXPECT_EQ(c.kernel.degree, 3);
  EXPECT_EQ(c.protocol.n_tests, 100u);
  EXPECT_EQ(c.protocol.n_folds, 10u);
  EXPECT_EQ(c.protocol.intensities, (std::vector<int>{3, 4}));
  EXPECT_EQ(c.train.seed, derive_seed(c.seed(), 7));
}

TEST(Config, ParsesSectionsAndRoundTrips) {
  const auto c = parse_config(
      "# tuned for a small run\n[fusion]\nepochs = 12\nfc6 = 64\n[features]\nsource = hog\nregion = face\n"
      "[protocol]\nintensities = 4, 3\nseed = 99\n[svm]\nC = 2.5\n");
  EXPECT_EQ(c.train.epochs, 12u);
  EXPECT_EQ(c.fc6, 64u);
  EXPECT_EQ(c.feature_source, FeatureSource::Hog);
  EXPECT_EQ(c.region, Region::Face);
  EXPECT_EQ(c.protocol.intensities, (std::vector<int>{4, 3}));
  EXPECT_EQ(c.seed(), 99u);
  EXPECT_EQ(c.train.seed, derive_seed(99, 7));
  EXPECT_EQ(c.kernel.C, 2.5);
  const auto again = parse_config(format_config(c));
  EXPECT_EQ(format_config(again), format_config(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  auto code_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  EXPECT_NE(code_of("[fusion]\nepochz = 3\n").find("unknown key 'fusion.epochz'"), std::string::npos);
  EXPECT_NE(code_of("[fusoin]\nepochs = 3\n").find("unknown key"), std::string::npos);
  EXPECT_NE(code_of("[fusion]\nepochs = three\n").find("not a number"), std::string::npos);
  EXPECT_NE(code_of("[fusion]\nepochs = 0\n").find("ConfigError"), std::string::npos);
  EXPECT_NE(code_of("[fusion]\nlr_start = 1e-5\nlr_end = 1e-4\n").find("ConfigError"), std::string::npos);
  EXPECT_NE(code_of("[parts]\npad = 40\n").find("ConfigError"), std::string::npos);
  EXPECT_NE(code_of("[pca]\ntarget_variance = 1.5\n").find("ConfigError"), std::string::npos);
  EXPECT_NE(code_of("[protocol]\nintensities = 5\n").find("ConfigError"), std::string::npos);
  EXPECT_NE(code_of("[features]\nsource = sift\n").find("ConfigError"), std::string::npos);
  EXPECT_NE(code_of("epochs = 3\n").find("unknown key"), std::string::npos);
  EXPECT_NE(code_of("[fusion\n").find("malformed"), std::string::npos);
  EXPECT_EQ(code_of("[fusion]\nepochs = 3 # short\n"), "accepted");
}
