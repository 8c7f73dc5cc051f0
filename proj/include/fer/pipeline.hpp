#pragma once

// Stage commands. Each stage reads the dataset manifest plus the previous
// stage's directory and writes its own directory:
//
//   align         <sid>_texture.ppm, <sid>_depth.pgm, <sid>_landmarks.txt
//   parts         <sid>_{tex,dep}_{eyebrows,eyes,nose,mouth,face}.p?m, <sid>_boxes.txt
//   features      <sid>.fpt (one entry per modality/region), source.txt, mean.fpt
//   train-fusion  texture.fpt, depth.fpt, *_log.csv, split.txt
//   extract       vectors.fpt (one entry per sample id)
//   evaluate      report.json, report.txt
//
// Per-sample failures are collected and reported; the remaining samples are
// still processed.

#include <Eigen/Dense>

#include <chrono>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fer/config.hpp"
#include "fer/descriptors.hpp"
#include "fer/fusion_net.hpp"
#include "fer/harness.hpp"
#include "fer/image_io.hpp"
#include "fer/landmarks.hpp"
#include "fer/parallel.hpp"
#include "fer/parts.hpp"
#include "fer/pca.hpp"
#include "fer/stub_encoder.hpp"
#include "fer/svm.hpp"
#include "fer/tensor_file.hpp"

namespace fer {

struct StageResult {
  std::size_t processed = 0;
  std::vector<std::string> errors;  // "<sample id>: <message>"

  bool ok() const { return errors.empty(); }
};

struct StageOptions {
  PipelineConfig config = default_config();
  std::size_t jobs = 1;
};

inline constexpr std::array<const char*, 2> kModalities = {"tex", "dep"};

/// Region names in feature order: the four parts, then the whole face.
inline std::vector<std::string> region_names() {
  std::vector<std::string> names;
  for (auto k : kAllParts) names.emplace_back(part_name(k));
  names.emplace_back("face");
  return names;
}

inline void require_stage_output(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingStageOutput, "missing stage output: " + path.string());
}

namespace detail {

/// Runs fn on every record in parallel, collecting per-sample errors in
/// manifest order. Writes `errors.log` to out_dir when anything failed.
template <typename Fn>
StageResult for_each_sample(const std::vector<SampleRecord>& records, std::size_t jobs, const fs::path& out_dir,
                            Fn&& fn) {
  std::vector<std::string> failures(records.size());
  std::vector<char> done(records.size(), 0);
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    try {
      fn(records[i]);
      done[i] = 1;
    } catch (const std::exception& e) {
      failures[i] = records[i].sample_id() + ": " + e.what();
    }
  });
  StageResult r;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (done[i]) ++r.processed;
    else r.errors.push_back(failures[i]);
  }
  if (!r.errors.empty()) {
    std::string log;
    for (const auto& e : r.errors) log += e + "\n";
    write_file_atomic(out_dir / "errors.log", log);
  }
  return r;
}

inline void ensure_dir(const fs::path& dir) { fs::create_directories(dir); }

inline void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingStageOutput, "missing stage output: " + dir.string());
}

inline fs::path aligned_path(const fs::path& dir, const std::string& sid, const std::string& what) {
  const std::string ext = what == "texture" ? ".ppm" : what == "depth" ? ".pgm" : ".txt";
  return dir / (sid + "_" + what + ext);
}

inline fs::path part_path(const fs::path& dir, const std::string& sid, const std::string& modality,
                          const std::string& region) {
  return dir / (sid + "_" + modality + "_" + region + (modality == "tex" ? ".ppm" : ".pgm"));
}

inline Image read_stage_image(const fs::path& path) {
  require_stage_output(path);
  return read_image(path);
}

inline std::string entry_name(const std::string& modality, const std::string& region, bool flipped = false) {
  return modality + "." + region + (flipped ? ".flip" : "");
}

}  // namespace detail

/// Mean inter-ocular distance over every sample with a readable landmark file.
inline double reference_distance(const std::vector<SampleRecord>& records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    try {
      sum += interocular_distance(read_landmarks(r.landmarks_path));
      ++n;
    } catch (const Error&) {
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptySet, "no readable landmark files");
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------- align

inline StageResult cmd_align(const std::vector<SampleRecord>& records, const fs::path& out_dir,
                             const StageOptions& opt) {
  detail::ensure_dir(out_dir);
  if (records.empty()) return {};
  const double ref = opt.config.ref_interocular_distance > 0.0 ? opt.config.ref_interocular_distance
                                                               : reference_distance(records);
  return detail::for_each_sample(records, opt.jobs, out_dir, [&](const SampleRecord& r) {
    const LandmarkSet lms = read_landmarks(r.landmarks_path);
    const Image texture = read_image(r.texture_path);
    const Image depth = read_image(r.depth_path);
    const AlignmentResult a = align_face(to_rgb(texture), to_gray(depth), lms, ref);
    const std::string sid = r.sample_id();
    write_image(detail::aligned_path(out_dir, sid, "texture"), a.texture);
    write_image(detail::aligned_path(out_dir, sid, "depth"), a.depth);
    write_landmarks(detail::aligned_path(out_dir, sid, "landmarks"), a.landmarks);
  });
}

// ---------------------------------------------------------------- parts

inline StageResult cmd_parts(const std::vector<SampleRecord>& records, const fs::path& aligned_dir,
                             const fs::path& out_dir, const StageOptions& opt) {
  detail::require_dir(aligned_dir);
  detail::ensure_dir(out_dir);
  const double pad = opt.config.part_pad;
  return detail::for_each_sample(records, opt.jobs, out_dir, [&](const SampleRecord& r) {
    const std::string sid = r.sample_id();
    const Image texture = detail::read_stage_image(detail::aligned_path(aligned_dir, sid, "texture"));
    const Image depth = detail::read_stage_image(detail::aligned_path(aligned_dir, sid, "depth"));
    const fs::path lm_path = detail::aligned_path(aligned_dir, sid, "landmarks");
    require_stage_output(lm_path);
    const LandmarkSet lms = read_landmarks(lm_path);

    auto [tex, dep] = extract_parts(texture, depth, lms, pad);
    const BBox face_box = face_bbox(lms, pad);
    std::ostringstream boxes;
    boxes.precision(17);
    for (auto k : kAllParts) {
      const std::string name(part_name(k));
      write_image(detail::part_path(out_dir, sid, "tex", name), tex[k].crop);
      write_image(detail::part_path(out_dir, sid, "dep", name), dep[k].crop);
      const BBox& b = tex[k].source_bbox;
      boxes << name << ' ' << b.x_min << ' ' << b.y_min << ' ' << b.x_max << ' ' << b.y_max << '\n';
    }
    write_image(detail::part_path(out_dir, sid, "tex", "face"), crop_normalized(texture, face_box));
    write_image(detail::part_path(out_dir, sid, "dep", "face"), crop_normalized(depth, face_box));
    boxes << "face " << face_box.x_min << ' ' << face_box.y_min << ' ' << face_box.x_max << ' ' << face_box.y_max
          << '\n';
    write_file_atomic(out_dir / (sid + "_boxes.txt"), boxes.str());
  });
}

// ---------------------------------------------------------------- features

inline FeatureSource read_feature_source(const fs::path& features_dir) {
  const fs::path p = features_dir / "source.txt";
  require_stage_output(p);
  return parse_feature_source(trim(read_file(p)));
}

inline StageResult cmd_features(const std::vector<SampleRecord>& records, const fs::path& parts_dir,
                                const fs::path& out_dir, const StageOptions& opt) {
  const auto& cfg = opt.config;
  detail::ensure_dir(out_dir);
  const auto regions = region_names();

  if (cfg.feature_source == FeatureSource::TensorFiles) {
    // conv feature maps supplied per sample through feat_<mod>_<region> columns
    auto result = detail::for_each_sample(records, opt.jobs, out_dir, [&](const SampleRecord& r) {
      TensorFile out;
      for (const char* mod : kModalities) {
        for (const auto& region : regions) {
          const std::string column = "feat_" + std::string(mod) + "_" + region;
          const auto it = r.features.find(column);
          if (it == r.features.end()) {
            if (region == "face" && cfg.region == Region::Parts) continue;
            throw Error(ErrorCode::MissingStageOutput, "manifest has no " + column + " for this sample");
          }
          require_stage_output(it->second);
          const TensorFile src = read_tensor_file(it->second);
          if (src.empty()) throw Error(ErrorCode::ParseError, it->second.string() + ": no tensors");
          const FeatureTensor& t = src.front().tensor;
          if (t.dims != std::vector<std::size_t>{kConvGrid, kConvGrid, kConvChannels}) {
            throw Error(ErrorCode::ShapeMismatch, it->second.string() + ": shape " + shape_string(t.dims) +
                                                      ", expected (6,6,512)");
          }
          if (!t.all_finite()) throw Error(ErrorCode::ParseError, it->second.string() + ": non-finite values");
          out.push_back({detail::entry_name(mod, region), t});
        }
      }
      write_tensor_file(out_dir / (r.sample_id() + ".fpt"), out);
    });
    write_file_atomic(out_dir / "source.txt", std::string(feature_source_name(cfg.feature_source)) + "\n");
    return result;
  }

  detail::require_dir(parts_dir);

  if (cfg.feature_source == FeatureSource::Hog || cfg.feature_source == FeatureSource::Ulbp) {
    auto result = detail::for_each_sample(records, opt.jobs, out_dir, [&](const SampleRecord& r) {
      TensorFile out;
      for (const char* mod : kModalities) {
        for (const auto& region : regions) {
          const Image img = detail::read_stage_image(detail::part_path(parts_dir, r.sample_id(), mod, region));
          const FeatureVector v = cfg.feature_source == FeatureSource::Hog ? hog(img, cfg.hog) : ulbp(img, cfg.ulbp);
          out.push_back({detail::entry_name(mod, region),
                         FeatureTensor({v.size()}, std::vector<float>(v.values.begin(), v.values.end()))});
        }
      }
      write_tensor_file(out_dir / (r.sample_id() + ".fpt"), out);
    });
    write_file_atomic(out_dir / "source.txt", std::string(feature_source_name(cfg.feature_source)) + "\n");
    return result;
  }

  // stub encoder: the dataset mean image (per modality and region) is
  // subtracted before encoding
  std::vector<char> readable(records.size(), 1);
  TensorFile means;
  for (const char* mod : kModalities) {
    for (const auto& region : regions) {
      std::vector<Image> crops;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const fs::path p = detail::part_path(parts_dir, records[i].sample_id(), mod, region);
        if (!readable[i]) continue;
        try {
          crops.push_back(detail::read_stage_image(p));
        } catch (const std::exception&) {
          readable[i] = 0;
        }
      }
      if (crops.empty()) continue;
      const Image mean = mean_image(crops);
      means.push_back({detail::entry_name(mod, region),
                       FeatureTensor({64, 64, 3}, std::vector<float>(mean.data().begin(), mean.data().end()))});
    }
  }
  write_tensor_file(out_dir / "mean.fpt", means);
  const StubEncoder encoder(cfg.encoder_seed);
  auto result = detail::for_each_sample(records, opt.jobs, out_dir, [&](const SampleRecord& r) {
    TensorFile out;
    for (const char* mod : kModalities) {
      for (const auto& region : regions) {
        const Image img = detail::read_stage_image(detail::part_path(parts_dir, r.sample_id(), mod, region));
        const auto& m = find_tensor(means, detail::entry_name(mod, region));
        const Image mean(64, 64, 3, m.data);
        out.push_back({detail::entry_name(mod, region), encoder.encode(img, &mean)});
        if (cfg.flip_augment) out.push_back({detail::entry_name(mod, region, true), encoder.encode(hflip(img), &mean)});
      }
    }
    write_tensor_file(out_dir / (r.sample_id() + ".fpt"), out);
  });
  write_file_atomic(out_dir / "source.txt", std::string(feature_source_name(cfg.feature_source)) + "\n");
  return result;
}

// ---------------------------------------------------------------- fusion

struct ProtocolSplit {
  SubjectSplit subjects;
  std::vector<std::string> finetune_train;
  std::vector<std::string> finetune_val;
};

/// Deterministic split of the dataset's subjects into the evaluation pool and
/// the fine-tuning subjects, which are further split subject-disjointly into
/// fusion-net training and validation.
inline ProtocolSplit protocol_split(const std::vector<SampleRecord>& records, const PipelineConfig& cfg) {
  std::vector<SampleRecord> basic;
  for (const auto& r : records) {
    if (r.is_basic()) basic.push_back(r);
  }
  ProtocolSplit s;
  s.subjects = split_subjects(distinct_subjects(basic), derive_seed(cfg.seed(), 1), cfg.protocol.eval_fraction);
  std::vector<std::string> ft = s.subjects.finetune;
  seeded_shuffle(ft, derive_seed(cfg.seed(), 2));
  if (ft.size() >= 2) {
    const auto n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(cfg.val_fraction * static_cast<double>(ft.size()))), 1, ft.size() - 1);
    s.finetune_val.assign(ft.begin(), ft.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.finetune_train.assign(ft.begin() + static_cast<std::ptrdiff_t>(n_val), ft.end());
  }
  std::sort(s.finetune_val.begin(), s.finetune_val.end());
  std::sort(s.finetune_train.begin(), s.finetune_train.end());
  return s;
}

/// Flattened fusion-net input for one modality: the four part maps
/// concatenated along channels, or the face map alone.
inline std::vector<float> fusion_input(const TensorFile& features, const std::string& modality, Region region,
                                       bool flipped = false) {
  if (region == Region::Face) return find_tensor(features, detail::entry_name(modality, "face", flipped)).data;
  std::vector<FeatureTensor> maps;
  for (auto k : kAllParts) maps.push_back(find_tensor(features, detail::entry_name(modality, std::string(part_name(k)), flipped)));
  return concat_parts(maps).data;
}

inline TensorFile read_sample_features(const fs::path& features_dir, const std::string& sid) {
  const fs::path p = features_dir / (sid + ".fpt");
  require_stage_output(p);
  return read_tensor_file(p);
}

inline std::string format_train_log(const std::vector<EpochLog>& log) {
  std::ostringstream o;
  o.precision(10);
  o << "epoch,lr,train_loss,val_error\n";
  for (const auto& e : log) o << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_error << '\n';
  return o.str();
}

/// Fine-tunes one fusion net per modality on the fine-tuning subjects.
inline StageResult cmd_train_fusion(const std::vector<SampleRecord>& records, const fs::path& features_dir,
                                    const fs::path& out_dir, const StageOptions& opt) {
  const auto& cfg = opt.config;
  detail::require_dir(features_dir);
  detail::ensure_dir(out_dir);
  const FeatureSource source = read_feature_source(features_dir);
  const ProtocolSplit split = protocol_split(records, cfg);
  {
    std::ostringstream o;
    auto list = [&](const char* name, const std::vector<std::string>& v) {
      o << name << ':';
      for (const auto& s : v) o << ' ' << s;
      o << '\n';
    };
    list("eval", split.subjects.eval);
    list("finetune_train", split.finetune_train);
    list("finetune_val", split.finetune_val);
    write_file_atomic(out_dir / "split.txt", o.str());
  }
  StageResult result;
  if (!uses_fusion_net(source)) {
    std::cerr << "train-fusion: feature source " << feature_source_name(source) << " skips the fusion net\n";
    return result;
  }
  if (split.finetune_train.empty() || split.finetune_val.empty()) {
    throw Error(ErrorCode::TooFewSubjects, "fine-tuning needs at least 2 subjects");
  }
  const std::set<std::string> train_subj(split.finetune_train.begin(), split.finetune_train.end());
  const std::set<std::string> val_subj(split.finetune_val.begin(), split.finetune_val.end());

  for (const char* mod : kModalities) {
    std::vector<std::vector<float>> train_x, val_x;
    std::vector<int> train_y, val_y;
    for (const auto& r : records) {
      if (!r.is_basic()) continue;
      const bool is_train = train_subj.count(r.subject_id) > 0;
      if (!is_train && !val_subj.count(r.subject_id)) continue;
      TensorFile f;
      try {
        f = read_sample_features(features_dir, r.sample_id());
      } catch (const std::exception& e) {
        if (std::string(mod) == "tex") result.errors.push_back(r.sample_id() + ": " + e.what());
        continue;
      }
      const int label = expression_label(r.expression);
      if (is_train) {
        train_x.push_back(fusion_input(f, mod, cfg.region));
        train_y.push_back(label);
        if (cfg.flip_augment && source == FeatureSource::StubEncoder) {
          train_x.push_back(fusion_input(f, mod, cfg.region, true));
          train_y.push_back(label);
        }
      } else {
        val_x.push_back(fusion_input(f, mod, cfg.region));
        val_y.push_back(label);
      }
    }
    auto examples = [](const std::vector<std::vector<float>>& xs, const std::vector<int>& ys) {
      std::vector<Example<float>> ex;
      for (std::size_t i = 0; i < xs.size(); ++i) ex.push_back({xs[i], ys[i]});
      return ex;
    };
    const auto train_set = examples(train_x, train_y);
    const auto val_set = examples(val_x, val_y);
    if (train_set.empty() || val_set.empty()) throw Error(ErrorCode::EmptySet, "no fine-tuning features found");
    const NetShape shape{train_set.front().x.size(), cfg.fc6, cfg.fc7, kNumClasses};
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.train.seed, std::string(mod) == "tex" ? 1 : 2);
    const auto trained = train<float>(shape, train_set, val_set, tc);
    const std::string name = std::string(mod) == "tex" ? "texture" : "depth";
    write_tensor_file(out_dir / (name + ".fpt"), net_to_tensors(trained.net));
    write_file_atomic(out_dir / (name + "_log.csv"), format_train_log(trained.log));
    result.processed += train_set.size() + val_set.size();
  }
  if (!result.errors.empty()) {
    std::string log;
    for (const auto& e : result.errors) log += e + "\n";
    write_file_atomic(out_dir / "errors.log", log);
  }
  return result;
}

// ---------------------------------------------------------------- extract

/// Per-sample fused descriptor: FC7 texture ++ FC7 depth for conv features,
/// or the early-fused hand-crafted descriptors (texture regions, then depth).
inline StageResult cmd_extract(const std::vector<SampleRecord>& records, const fs::path& features_dir,
                               const fs::path& models_dir, const fs::path& out_dir, const StageOptions& opt) {
  const auto& cfg = opt.config;
  detail::require_dir(features_dir);
  detail::ensure_dir(out_dir);
  const FeatureSource source = read_feature_source(features_dir);
  std::optional<FusionNet<float>> tex_net, dep_net;
  if (uses_fusion_net(source)) {
    const fs::path tp = models_dir / "texture.fpt", dp = models_dir / "depth.fpt";
    require_stage_output(tp);
    require_stage_output(dp);
    tex_net = net_from_tensors<float>(read_tensor_file(tp));
    dep_net = net_from_tensors<float>(read_tensor_file(dp));
  }
  std::vector<std::optional<NamedTensor>> vectors(records.size());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) index[records[i].sample_id()] = i;
  auto result = detail::for_each_sample(records, opt.jobs, out_dir, [&](const SampleRecord& r) {
    const TensorFile f = read_sample_features(features_dir, r.sample_id());
    std::vector<float> fused;
    if (tex_net) {
      const auto t = extract_fc7<float>(*tex_net, fusion_input(f, "tex", cfg.region), cfg.fc7_post_relu);
      const auto d = extract_fc7<float>(*dep_net, fusion_input(f, "dep", cfg.region), cfg.fc7_post_relu);
      fused = fuse_modalities<float>(t, d);
    } else {
      std::vector<FeatureVector> parts;
      for (const char* mod : kModalities) {
        std::vector<std::string> regions;
        if (cfg.region == Region::Face) regions = {"face"};
        else for (auto k : kAllParts) regions.emplace_back(part_name(k));
        for (const auto& region : regions) {
          const auto& t = find_tensor(f, detail::entry_name(mod, region));
          parts.push_back({std::vector<double>(t.data.begin(), t.data.end()), detail::entry_name(mod, region)});
        }
      }
      const FeatureVector v = early_fuse(parts);
      fused.assign(v.values.begin(), v.values.end());
    }
    const std::size_t n = fused.size();
    vectors[index.at(r.sample_id())] = NamedTensor{r.sample_id(), FeatureTensor({n}, std::move(fused))};
  });
  TensorFile out;
  for (auto& v : vectors) {
    if (v) out.push_back(std::move(*v));
  }
  write_tensor_file(out_dir / "vectors.fpt", out);
  return result;
}

// ---------------------------------------------------------------- evaluate

/// Labeled protocol samples (basic expressions of the evaluation subjects)
/// that have a vector. Samples without one are reported in `missing`.
inline std::vector<LabeledSample> load_protocol_samples(const std::vector<SampleRecord>& records,
                                                        const TensorFile& vectors,
                                                        const std::vector<std::string>& eval_pool,
                                                        std::vector<std::string>* missing = nullptr) {
  std::map<std::string, const FeatureTensor*> by_id;
  for (const auto& v : vectors) by_id[v.name] = &v.tensor;
  const std::set<std::string> pool(eval_pool.begin(), eval_pool.end());
  std::vector<LabeledSample> out;
  for (const auto& r : records) {
    if (!r.is_basic() || !pool.count(r.subject_id)) continue;
    const auto it = by_id.find(r.sample_id());
    if (it == by_id.end()) {
      if (missing) missing->push_back(r.sample_id() + ": no feature vector");
      continue;
    }
    LabeledSample s;
    s.sample_id = r.sample_id();
    s.subject_id = r.subject_id;
    s.label = expression_label(r.expression);
    s.intensity = r.intensity;
    s.x = Eigen::Map<const Eigen::VectorXf>(it->second->data.data(), static_cast<Eigen::Index>(it->second->size()))
              .cast<double>();
    out.push_back(std::move(s));
  }
  return out;
}

inline ClassifierFactory pca_svm_factory(const PipelineConfig& cfg) {
  return [cfg](std::uint64_t) -> std::unique_ptr<FoldClassifier> {
    return std::make_unique<PcaSvmClassifier>(cfg.pca_target, cfg.kernel, cfg.svm_tol);
  };
}

inline EvalReport evaluate_vectors(const std::vector<SampleRecord>& records, const TensorFile& vectors,
                                   const PipelineConfig& cfg, std::vector<std::string>* missing = nullptr) {
  const ProtocolSplit split = protocol_split(records, cfg);
  const auto samples = load_protocol_samples(records, vectors, split.subjects.eval, missing);
  EvalReport report = run_protocol(samples, split.subjects.eval, cfg.protocol, pca_svm_factory(cfg));
  report.finetune_subjects = split.subjects.finetune;
  return report;
}

inline StageResult cmd_evaluate(const std::vector<SampleRecord>& records, const fs::path& vectors_dir,
                                const fs::path& out_dir, const StageOptions& opt, EvalReport* report_out = nullptr) {
  const fs::path vp = vectors_dir / "vectors.fpt";
  require_stage_output(vp);
  detail::ensure_dir(out_dir);
  StageResult result;
  const EvalReport report = evaluate_vectors(records, read_tensor_file(vp), opt.config, &result.errors);
  write_file_atomic(out_dir / "report.json", report_to_json(report).dump(2) + "\n");
  write_file_atomic(out_dir / "report.txt", report_to_text(report));
  for (const auto& t : report.tests) result.processed += t.samples;
  if (report_out) *report_out = report;
  return result;
}

// ---------------------------------------------------------------- pca / svm

inline Eigen::MatrixXd stack_rows(const std::vector<LabeledSample>& samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptySet, "no samples");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(samples.size()), samples.front().x.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x.size() != X.cols()) throw Error(ErrorCode::ShapeMismatch, samples[i].sample_id + ": vector length differs");
    X.row(static_cast<Eigen::Index>(i)) = samples[i].x.transpose();
  }
  return X;
}

/// Fits PCA on every protocol sample of the evaluation subjects and writes
/// pca.fpt. The cross-validated evaluation refits per fold; this model is
/// for inspection and for `svm`.
inline StageResult cmd_pca(const std::vector<SampleRecord>& records, const fs::path& vectors_dir,
                           const fs::path& out_dir, const StageOptions& opt) {
  const fs::path vp = vectors_dir / "vectors.fpt";
  require_stage_output(vp);
  detail::ensure_dir(out_dir);
  StageResult result;
  const auto split = protocol_split(records, opt.config);
  const auto samples = load_protocol_samples(records, read_tensor_file(vp), split.subjects.eval, &result.errors);
  const PcaModel model = pca_fit(stack_rows(samples), opt.config.pca_target);
  write_tensor_file(out_dir / "pca.fpt", pca_to_tensors(model));
  result.processed = samples.size();
  return result;
}

inline StageResult cmd_svm(const std::vector<SampleRecord>& records, const fs::path& vectors_dir,
                           const fs::path& pca_dir, const fs::path& out_dir, const StageOptions& opt) {
  const fs::path vp = vectors_dir / "vectors.fpt", pp = pca_dir / "pca.fpt";
  require_stage_output(vp);
  require_stage_output(pp);
  detail::ensure_dir(out_dir);
  StageResult result;
  const auto split = protocol_split(records, opt.config);
  const auto samples = load_protocol_samples(records, read_tensor_file(vp), split.subjects.eval, &result.errors);
  const PcaModel pca = pca_from_tensors(read_tensor_file(pp));
  const Eigen::MatrixXd reduced = pca_transform_rows(pca, stack_rows(samples));
  const Standardizer scaler = Standardizer::fit(reduced);
  std::vector<int> y;
  for (const auto& s : samples) y.push_back(s.label);
  const SvmModel model = svm_train_multiclass(scaler.apply(reduced), y, opt.config.kernel, opt.config.svm_tol);
  TensorFile file = svm_to_tensors(model);
  auto to_floats = [](const Eigen::VectorXd& v) { return std::vector<float>(v.data(), v.data() + v.size()); };
  file.push_back({"scaler.mean", FeatureTensor({static_cast<std::size_t>(scaler.mean.size())}, to_floats(scaler.mean))});
  file.push_back({"scaler.scale", FeatureTensor({static_cast<std::size_t>(scaler.scale.size())}, to_floats(scaler.scale))});
  write_tensor_file(out_dir / "svm.fpt", file);
  write_file_atomic(out_dir / "kernel.txt", kernel_manifest(model));
  result.processed = samples.size();
  return result;
}

// ---------------------------------------------------------------- chain

struct ChainDirs {
  fs::path aligned, parts, features, models, vectors, report;

  static ChainDirs under(const fs::path& work) {
    return {work / "aligned", work / "parts", work / "features", work / "models", work / "vectors", work / "report"};
  }
};

/// align -> parts -> features -> train-fusion -> extract -> evaluate.
/// Stages before `features` are skipped for tensor-file input.
inline EvalReport run_chain(const std::vector<SampleRecord>& records, const ChainDirs& dirs, const StageOptions& opt,
                            std::vector<std::string>* errors = nullptr) {
  auto keep = [&](const StageResult& r) {
    if (errors) errors->insert(errors->end(), r.errors.begin(), r.errors.end());
  };
  if (opt.config.feature_source != FeatureSource::TensorFiles) {
    keep(cmd_align(records, dirs.aligned, opt));
    keep(cmd_parts(records, dirs.aligned, dirs.parts, opt));
  }
  keep(cmd_features(records, dirs.parts, dirs.features, opt));
  keep(cmd_train_fusion(records, dirs.features, dirs.models, opt));
  keep(cmd_extract(records, dirs.features, dirs.models, dirs.vectors, opt));
  EvalReport report;
  keep(cmd_evaluate(records, dirs.vectors, dirs.report, opt, &report));
  return report;
}

}  // namespace fer
