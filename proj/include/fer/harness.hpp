#pragma once

// Dataset records, the subject-independent evaluation protocol and its
// report: fine-tune/eval subject split, repeated k-fold cross-validation over
// subjects, pooled confusion matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fer/error.hpp"
#include "fer/io_util.hpp"
#include "fer/pca.hpp"
#include "fer/svm.hpp"

namespace fer {

enum class Expression { Angry = 0, Disgust, Fear, Happy, Sad, Surprise, Neutral };

inline constexpr std::array<Expression, 6> kBasicExpressions = {Expression::Angry, Expression::Disgust,
                                                               Expression::Fear,  Expression::Happy,
                                                               Expression::Sad,   Expression::Surprise};

inline std::string_view expression_name(Expression e) {
  static constexpr std::array<std::string_view, 7> names = {"Angry", "Disgust", "Fear", "Happy",
                                                            "Sad",   "Surprise", "Neutral"};
  return names[static_cast<std::size_t>(e)];
}

inline std::string_view expression_code(Expression e) {
  static constexpr std::array<std::string_view, 7> codes = {"AN", "DI", "FE", "HA", "SA", "SU", "NE"};
  return codes[static_cast<std::size_t>(e)];
}

/// Accepts full names (any case) or two-letter codes.
inline std::optional<Expression> parse_expression(std::string_view s) {
  auto lower = [](std::string_view v) {
    std::string r(v);
    for (char& c : r) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return r;
  };
  const std::string key = lower(s);
  for (int i = 0; i < 7; ++i) {
    const auto e = static_cast<Expression>(i);
    if (key == lower(expression_name(e)) || key == lower(expression_code(e))) return e;
  }
  return std::nullopt;
}

inline int expression_label(Expression e) { return static_cast<int>(e); }

struct SampleRecord {
  std::string subject_id;
  Expression expression = Expression::Neutral;
  int intensity = 0;  // 1..4, 0 for neutral
  fs::path texture_path;
  fs::path depth_path;
  fs::path landmarks_path;
  std::map<std::string, fs::path> features;  // optional feat_* columns

  std::string sample_id() const {
    std::string id = subject_id + "_" + std::string(expression_code(expression));
    id += (intensity < 10 ? "0" : "") + std::to_string(intensity);
    return id;
  }

  bool is_basic() const { return expression != Expression::Neutral; }
};

inline constexpr std::array<const char*, 6> kManifestColumns = {"subject_id",   "expression", "intensity",
                                                                 "texture_path", "depth_path", "landmarks_path"};

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    else if (c == ',' && !quoted) {
      out.emplace_back(trim(cur));
      cur.clear();
    } else cur += c;
  }
  out.emplace_back(trim(cur));
  return out;
}
}  // namespace detail

/// Parses a dataset manifest. Relative paths resolve against `base_dir`.
inline std::vector<SampleRecord> parse_manifest(const std::string& text, const fs::path& base_dir,
                                                const std::string& what = "manifest") {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<SampleRecord> records;
  int line_no = 0;
  auto resolve = [&](const std::string& p) -> fs::path {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line).front() == '#') continue;
    auto cells = detail::split_csv(line);
    if (header.empty()) {
      header = cells;
      if (header.size() < kManifestColumns.size() ||
          !std::equal(kManifestColumns.begin(), kManifestColumns.end(), header.begin())) {
        throw Error(ErrorCode::ParseError, what + ": header must start with "
                                               "subject_id,expression,intensity,texture_path,depth_path,landmarks_path");
      }
      for (std::size_t c = kManifestColumns.size(); c < header.size(); ++c) {
        if (header[c].rfind("feat_", 0) != 0) {
          throw Error(ErrorCode::ParseError, what + ": unknown column '" + header[c] + "'");
        }
      }
      continue;
    }
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::ParseError, what + ":" + std::to_string(line_no) + ": expected " +
                                             std::to_string(header.size()) + " fields, got " +
                                             std::to_string(cells.size()));
    }
    SampleRecord r;
    r.subject_id = cells[0];
    const auto expr = parse_expression(cells[1]);
    if (!expr) throw Error(ErrorCode::ParseError, what + ":" + std::to_string(line_no) + ": unknown expression '" + cells[1] + "'");
    r.expression = *expr;
    try {
      r.intensity = std::stoi(cells[2]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, what + ":" + std::to_string(line_no) + ": bad intensity '" + cells[2] + "'");
    }
    const bool valid_intensity = r.is_basic() ? (r.intensity >= 1 && r.intensity <= 4) : r.intensity == 0;
    if (!valid_intensity) {
      throw Error(ErrorCode::ParseError, what + ":" + std::to_string(line_no) + ": intensity " + cells[2] +
                                             " invalid for " + std::string(expression_name(r.expression)));
    }
    if (r.subject_id.empty()) throw Error(ErrorCode::ParseError, what + ":" + std::to_string(line_no) + ": empty subject_id");
    r.texture_path = resolve(cells[3]);
    r.depth_path = resolve(cells[4]);
    r.landmarks_path = resolve(cells[5]);
    for (std::size_t c = kManifestColumns.size(); c < header.size(); ++c) {
      if (!cells[c].empty()) r.features[header[c]] = resolve(cells[c]);
    }
    records.push_back(std::move(r));
  }
  if (header.empty()) throw Error(ErrorCode::ParseError, what + ": missing header");
  return records;
}

inline std::vector<SampleRecord> read_manifest(const fs::path& path) {
  return parse_manifest(read_file(path), path.parent_path(), path.string());
}

/// Writes a manifest; paths are written relative to `base_dir` when they
/// live beneath it.
inline std::string format_manifest(const std::vector<SampleRecord>& records, const fs::path& base_dir) {
  std::set<std::string> feature_cols;
  for (const auto& r : records) {
    for (const auto& [k, v] : r.features) feature_cols.insert(k);
  }
  auto rel = [&](const fs::path& p) -> std::string {
    if (p.empty()) return {};
    const auto r = p.lexically_relative(base_dir);
    return (!r.empty() && r.native().rfind("..", 0) != 0) ? r.generic_string() : p.generic_string();
  };
  std::ostringstream out;
  for (std::size_t i = 0; i < kManifestColumns.size(); ++i) out << (i ? "," : "") << kManifestColumns[i];
  for (const auto& c : feature_cols) out << ',' << c;
  out << '\n';
  for (const auto& r : records) {
    out << r.subject_id << ',' << expression_name(r.expression) << ',' << r.intensity << ',' << rel(r.texture_path)
        << ',' << rel(r.depth_path) << ',' << rel(r.landmarks_path);
    for (const auto& c : feature_cols) {
      const auto it = r.features.find(c);
      out << ',' << (it == r.features.end() ? std::string() : rel(it->second));
    }
    out << '\n';
  }
  return out.str();
}

inline void write_manifest(const fs::path& path, const std::vector<SampleRecord>& records) {
  write_file_atomic(path, format_manifest(records, path.parent_path()));
}

inline std::vector<std::string> distinct_subjects(const std::vector<SampleRecord>& records) {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.subject_id);
  return {s.begin(), s.end()};
}

/// splitmix64; derives independent per-test/per-fold seeds from one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

struct SubjectSplit {
  std::vector<std::string> eval;
  std::vector<std::string> finetune;
};

/// Seeded 60/40 partition of subjects into evaluation and fine-tuning pools.
inline SubjectSplit split_subjects(std::vector<std::string> subjects, std::uint64_t seed, double eval_fraction = 0.6) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < 2) throw Error(ErrorCode::TooFewSubjects, "need at least 2 distinct subjects");
  seeded_shuffle(subjects, derive_seed(seed, 0x5b11));
  auto n_eval = static_cast<std::size_t>(std::lround(eval_fraction * static_cast<double>(subjects.size())));
  n_eval = std::clamp<std::size_t>(n_eval, 1, subjects.size() - 1);
  SubjectSplit s;
  s.eval.assign(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_eval));
  s.finetune.assign(subjects.begin() + static_cast<std::ptrdiff_t>(n_eval), subjects.end());
  std::sort(s.eval.begin(), s.eval.end());
  std::sort(s.finetune.begin(), s.finetune.end());
  return s;
}

using Folds = std::vector<std::vector<std::string>>;

/// Seeded near-equal partition of subjects into folds (round-robin over a
/// shuffled order, so sizes differ by at most one).
inline Folds make_folds(std::vector<std::string> subjects, std::size_t n_folds, std::uint64_t seed) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (n_folds < 2 || n_folds > subjects.size()) {
    throw Error(ErrorCode::BadFoldCount, std::to_string(n_folds) + " folds requested for " +
                                             std::to_string(subjects.size()) + " subjects");
  }
  seeded_shuffle(subjects, seed);
  Folds folds(n_folds);
  for (std::size_t i = 0; i < subjects.size(); ++i) folds[i % n_folds].push_back(subjects[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

inline constexpr int kNumExpressions = 6;

using ConfusionMatrix = std::array<std::array<double, kNumExpressions>, kNumExpressions>;

/// Row i, column j: fraction of true-class-i samples predicted as j. Rows of
/// absent classes stay zero.
inline ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw Error(ErrorCode::LengthMismatch, "truth and prediction lengths differ");
  std::array<std::array<std::size_t, kNumExpressions>, kNumExpressions> counts{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= kNumExpressions || predicted[i] < 0 || predicted[i] >= kNumExpressions) {
      throw Error(ErrorCode::LengthMismatch, "label outside 0..5");
    }
    ++counts[truth[i]][predicted[i]];
  }
  ConfusionMatrix m{};
  for (int r = 0; r < kNumExpressions; ++r) {
    std::size_t total = 0;
    for (auto c : counts[r]) total += c;
    for (int c = 0; c < kNumExpressions; ++c) {
      m[r][c] = total ? static_cast<double>(counts[r][c]) / static_cast<double>(total) : 0.0;
    }
  }
  return m;
}

/// One feature vector per sample, as consumed by the cross-validation loop.
struct LabeledSample {
  std::string sample_id;
  std::string subject_id;
  int label = 0;
  int intensity = 0;
  Eigen::VectorXd x;
};

/// Per-fold model. `fit` sees only training rows; the harness builds the
/// test rows after it returns.
class FoldClassifier {
 public:
  virtual ~FoldClassifier() = default;
  virtual void fit(const Eigen::MatrixXd& X, std::span<const int> y) = 0;
  virtual int predict(const Eigen::VectorXd& x) const = 0;
};

using ClassifierFactory = std::function<std::unique_ptr<FoldClassifier>(std::uint64_t seed)>;

/// PCA (fit on the training fold) -> standardization -> polynomial SVM.
class PcaSvmClassifier : public FoldClassifier {
 public:
  PcaSvmClassifier(double target_variance, KernelParams kernel, double tol)
      : target_variance_(target_variance), kernel_(kernel), tol_(tol) {}

  void fit(const Eigen::MatrixXd& X, std::span<const int> y) override {
    pca_ = pca_fit(X, target_variance_);
    const Eigen::MatrixXd reduced = pca_transform_rows(*pca_, X);
    scaler_ = Standardizer::fit(reduced);
    svm_ = svm_train_multiclass(scaler_.apply(reduced), y, kernel_, tol_);
  }

  int predict(const Eigen::VectorXd& x) const override {
    if (!pca_) throw Error(ErrorCode::EmptySet, "predict called before fit");
    return svm_predict(svm_, scaler_.apply(pca_transform(*pca_, x)));
  }

  const PcaModel& pca() const { return *pca_; }
  const SvmModel& svm() const { return svm_; }

 private:
  double target_variance_;
  KernelParams kernel_;
  double tol_;
  std::optional<PcaModel> pca_;
  Standardizer scaler_;
  SvmModel svm_;
};

struct ProtocolConfig {
  std::size_t n_subjects_eval = 0;  // 0: the whole evaluation pool
  std::vector<int> intensities = {3, 4};
  std::size_t n_tests = 100;
  std::size_t n_folds = 10;
  std::uint64_t seed = 1;
  double eval_fraction = 0.6;

  void validate() const {
    if (n_tests < 1) throw Error(ErrorCode::ConfigError, "n_tests must be >= 1");
    if (n_folds < 2) throw Error(ErrorCode::BadFoldCount, "n_folds must be >= 2");
    if (intensities.empty()) throw Error(ErrorCode::ConfigError, "no intensities selected");
    for (int i : intensities) {
      if (i < 1 || i > 4) throw Error(ErrorCode::ConfigError, "intensities must lie in 1..4");
    }
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw Error(ErrorCode::ConfigError, "eval_fraction must lie in (0, 1)");
  }
};

struct TestRun {
  std::vector<std::string> subjects;
  Folds folds;
  std::size_t samples = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::vector<TestRun> tests;
  double mean_accuracy = 0.0;
  ConfusionMatrix confusion{};
  std::vector<std::string> finetune_subjects;

  std::vector<double> accuracies() const {
    std::vector<double> a;
    for (const auto& t : tests) a.push_back(t.accuracy);
    return a;
  }
};

/// Throws if any subject appears in more than one fold.
inline void assert_subject_independent(const Folds& folds) {
  std::set<std::string> seen;
  for (const auto& f : folds) {
    for (const auto& s : f) {
      if (!seen.insert(s).second) {
        throw Error(ErrorCode::BadFoldCount, "subject " + s + " appears in more than one fold");
      }
    }
  }
}

/// Repeated subject-independent k-fold cross-validation over the evaluation
/// subjects. Every test draws its subject subset and fold assignment from a
/// seed derived from the master seed.
inline EvalReport run_protocol(const std::vector<LabeledSample>& samples, const std::vector<std::string>& eval_pool,
                               const ProtocolConfig& cfg, const ClassifierFactory& make_classifier) {
  cfg.validate();
  const std::set<int> wanted(cfg.intensities.begin(), cfg.intensities.end());
  std::map<std::string, std::vector<const LabeledSample*>> by_subject;
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= kNumExpressions || !wanted.count(s.intensity)) continue;
    by_subject[s.subject_id].push_back(&s);
  }
  std::vector<std::string> pool;
  for (const auto& subj : eval_pool) {
    if (by_subject.count(subj)) pool.push_back(subj);
  }
  std::sort(pool.begin(), pool.end());
  const std::size_t per_test = cfg.n_subjects_eval == 0 ? pool.size() : cfg.n_subjects_eval;
  if (per_test > pool.size() || per_test < cfg.n_folds) {
    throw Error(ErrorCode::TooFewSubjects, "evaluation pool has " + std::to_string(pool.size()) +
                                               " subjects; need " + std::to_string(std::max(per_test, cfg.n_folds)));
  }

  EvalReport report;
  std::vector<int> all_truth, all_pred;
  double acc_sum = 0.0;
  for (std::size_t t = 0; t < cfg.n_tests; ++t) {
    const std::uint64_t test_seed = derive_seed(cfg.seed, 1000 + t);
    std::vector<std::string> chosen = pool;
    seeded_shuffle(chosen, derive_seed(test_seed, 1));
    chosen.resize(per_test);
    std::sort(chosen.begin(), chosen.end());

    TestRun run;
    run.subjects = chosen;
    run.folds = make_folds(chosen, cfg.n_folds, derive_seed(test_seed, 2));
    assert_subject_independent(run.folds);

    std::size_t correct = 0;
    for (std::size_t f = 0; f < run.folds.size(); ++f) {
      const std::set<std::string> test_subjects(run.folds[f].begin(), run.folds[f].end());
      std::vector<const LabeledSample*> train_rows;
      for (std::size_t g = 0; g < run.folds.size(); ++g) {
        if (g == f) continue;
        for (const auto& subj : run.folds[g]) {
          if (test_subjects.count(subj)) throw Error(ErrorCode::BadFoldCount, "train/test subject overlap: " + subj);
          for (const auto* s : by_subject.at(subj)) train_rows.push_back(s);
        }
      }
      const Eigen::Index dim = train_rows.front()->x.size();
      Eigen::MatrixXd X(static_cast<Eigen::Index>(train_rows.size()), dim);
      std::vector<int> y;
      for (std::size_t i = 0; i < train_rows.size(); ++i) {
        X.row(static_cast<Eigen::Index>(i)) = train_rows[i]->x.transpose();
        y.push_back(train_rows[i]->label);
      }
      auto clf = make_classifier(derive_seed(test_seed, 100 + f));
      clf->fit(X, y);
      // test rows are gathered only after the model is fit
      for (const auto& subj : run.folds[f]) {
        for (const auto* s : by_subject.at(subj)) {
          const int p = clf->predict(s->x);
          correct += p == s->label;
          all_truth.push_back(s->label);
          all_pred.push_back(p);
          ++run.samples;
        }
      }
    }
    run.accuracy = run.samples ? static_cast<double>(correct) / static_cast<double>(run.samples) : 0.0;
    acc_sum += run.accuracy;
    report.tests.push_back(std::move(run));
  }
  report.mean_accuracy = acc_sum / static_cast<double>(cfg.n_tests);
  report.confusion = confusion_matrix(all_truth, all_pred);
  return report;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mean_accuracy"] = r.mean_accuracy;
  j["test_accuracies"] = r.accuracies();
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (auto e : kBasicExpressions) labels.push_back(expression_name(e));
  j["labels"] = labels;
  nlohmann::ordered_json conf = nlohmann::ordered_json::array();
  for (const auto& row : r.confusion) conf.push_back(std::vector<double>(row.begin(), row.end()));
  j["confusion"] = conf;
  j["finetune_subjects"] = r.finetune_subjects;
  nlohmann::ordered_json tests = nlohmann::ordered_json::array();
  for (const auto& t : r.tests) {
    nlohmann::ordered_json tj;
    tj["accuracy"] = t.accuracy;
    tj["samples"] = t.samples;
    tj["folds"] = t.folds;
    tests.push_back(tj);
  }
  j["tests"] = tests;
  return j;
}

inline std::string report_to_text(const EvalReport& r) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "Average recognition rate over " << r.tests.size() << " tests: " << 100.0 * r.mean_accuracy << "%\n\n";
  out << "true\\pred ";
  for (auto e : kBasicExpressions) out << ' ' << std::string(expression_code(e)) << "    ";
  out << '\n';
  for (int i = 0; i < kNumExpressions; ++i) {
    out << std::string(expression_name(kBasicExpressions[i])) << std::string(10 - expression_name(kBasicExpressions[i]).size(), ' ');
    for (int c = 0; c < kNumExpressions; ++c) {
      std::ostringstream cell;
      cell.setf(std::ios::fixed);
      cell.precision(2);
      cell << 100.0 * r.confusion[i][c];
      out << ' ' << std::string(6 - std::min<std::size_t>(6, cell.str().size()), ' ') << cell.str();
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace fer
