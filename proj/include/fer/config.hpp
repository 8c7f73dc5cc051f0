#pragma once

// Pipeline configuration: a flat `key = value` file split into [sections].
// Unknown sections and keys are rejected so misspellings surface early.

#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fer/descriptors.hpp"
#include "fer/error.hpp"
#include "fer/fusion_net.hpp"
#include "fer/harness.hpp"
#include "fer/io_util.hpp"
#include "fer/parts.hpp"
#include "fer/svm.hpp"

namespace fer {

enum class FeatureSource { StubEncoder, TensorFiles, Hog, Ulbp };
enum class Region { Parts, Face };

inline std::string_view feature_source_name(FeatureSource s) {
  switch (s) {
    case FeatureSource::StubEncoder: return "stub_encoder";
    case FeatureSource::TensorFiles: return "tensor_files";
    case FeatureSource::Hog: return "hog";
    case FeatureSource::Ulbp: return "ulbp";
  }
  return "?";
}

inline FeatureSource parse_feature_source(std::string_view s) {
  for (auto f : {FeatureSource::StubEncoder, FeatureSource::TensorFiles, FeatureSource::Hog, FeatureSource::Ulbp}) {
    if (s == feature_source_name(f)) return f;
  }
  throw Error(ErrorCode::ConfigError, "unknown feature source '" + std::string(s) +
                                          "' (expected stub_encoder, tensor_files, hog or ulbp)");
}

inline bool uses_fusion_net(FeatureSource s) { return s == FeatureSource::StubEncoder || s == FeatureSource::TensorFiles; }

struct PipelineConfig {
  double ref_interocular_distance = 55.0;  // 0: mean over the dataset
  double part_pad = kDefaultPartPad;

  FeatureSource feature_source = FeatureSource::StubEncoder;
  Region region = Region::Parts;
  bool flip_augment = true;
  std::uint64_t encoder_seed = 20180515;

  HogParams hog;
  LbpParams ulbp;

  TrainConfig train;
  std::size_t fc6 = 4096;
  std::size_t fc7 = 2048;
  bool fc7_post_relu = false;
  double val_fraction = 0.2;

  double pca_target = 0.99;
  KernelParams kernel;
  double svm_tol = 1e-3;

  ProtocolConfig protocol;

  /// Master seed; the fusion-net seed is derived from it.
  std::uint64_t seed() const { return protocol.seed; }
  void set_seed(std::uint64_t s) {
    protocol.seed = s;
    train.seed = derive_seed(s, 7);
  }

  void validate() const {
    if (!(ref_interocular_distance >= 0.0)) throw Error(ErrorCode::ConfigError, "alignment.ref_interocular_distance must be >= 0");
    if (!(part_pad >= 0.0 && part_pad <= 32.0)) throw Error(ErrorCode::ConfigError, "parts.pad must lie in [0, 32]");
    if (hog.cell_size < 1 || hog.block_cells < 1 || hog.bins < 1 || !(hog.clip > 0.0)) {
      throw Error(ErrorCode::ConfigError, "hog parameters must be positive");
    }
    if (ulbp.cell_size < 1) throw Error(ErrorCode::ConfigError, "ulbp.cell_size must be >= 1");
    train.validate();
    if (fc6 < 1 || fc7 < 1) throw Error(ErrorCode::ConfigError, "fusion widths must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw Error(ErrorCode::ConfigError, "fusion.val_fraction must lie in (0, 1)");
    if (!(pca_target > 0.0 && pca_target <= 1.0)) throw Error(ErrorCode::ConfigError, "pca.target_variance must lie in (0, 1]");
    kernel.validate();
    if (kernel.gamma < 0.0) throw Error(ErrorCode::ConfigError, "svm.gamma must be > 0 (or 0 for 1/dim)");
    if (!(svm_tol > 0.0)) throw Error(ErrorCode::ConfigError, "svm.tol must be > 0");
    protocol.validate();
  }
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw Error(ErrorCode::ConfigError, key + ": not a number: '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::ConfigError, key + ": expected true or false, got '" + v + "'");
}

}  // namespace detail

/// Applies `text` on top of the defaults in `cfg`.
inline void apply_config(PipelineConfig& cfg, const std::string& text, const std::string& what = "config") {
  using Setter = std::function<void(const std::string& key, const std::string& value)>;
  auto num = [](auto& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) {
      field = detail::parse_number<std::remove_reference_t<decltype(field)>>(k, v);
    };
  };
  auto flag = [](bool& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = detail::parse_bool(k, v); };
  };

  const std::map<std::string, Setter> setters = {
      {"alignment.ref_interocular_distance", num(cfg.ref_interocular_distance)},
      {"parts.pad", num(cfg.part_pad)},
      {"features.source",
       [&](const std::string& k, const std::string& v) {
         try {
           cfg.feature_source = parse_feature_source(v);
         } catch (const Error&) {
           throw Error(ErrorCode::ConfigError, k + ": expected stub_encoder, tensor_files, hog or ulbp, got '" + v + "'");
         }
       }},
      {"features.region",
       [&](const std::string& k, const std::string& v) {
         if (v == "parts") cfg.region = Region::Parts;
         else if (v == "face") cfg.region = Region::Face;
         else throw Error(ErrorCode::ConfigError, k + ": expected parts or face, got '" + v + "'");
       }},
      {"features.flip_augment", flag(cfg.flip_augment)},
      {"features.encoder_seed", num(cfg.encoder_seed)},
      {"hog.cell_size", num(cfg.hog.cell_size)},
      {"hog.block_cells", num(cfg.hog.block_cells)},
      {"hog.bins", num(cfg.hog.bins)},
      {"hog.clip", num(cfg.hog.clip)},
      {"ulbp.cell_size", num(cfg.ulbp.cell_size)},
      {"fusion.batch_size", num(cfg.train.batch_size)},
      {"fusion.lr_start", num(cfg.train.lr_start)},
      {"fusion.lr_end", num(cfg.train.lr_end)},
      {"fusion.epochs", num(cfg.train.epochs)},
      {"fusion.momentum", num(cfg.train.momentum)},
      {"fusion.weight_decay", num(cfg.train.weight_decay)},
      {"fusion.fc6", num(cfg.fc6)},
      {"fusion.fc7", num(cfg.fc7)},
      {"fusion.fc7_post_relu", flag(cfg.fc7_post_relu)},
      {"fusion.val_fraction", num(cfg.val_fraction)},
      {"pca.target_variance", num(cfg.pca_target)},
      {"svm.degree", num(cfg.kernel.degree)},
      {"svm.gamma", num(cfg.kernel.gamma)},
      {"svm.coef0", num(cfg.kernel.coef0)},
      {"svm.C", num(cfg.kernel.C)},
      {"svm.tol", num(cfg.svm_tol)},
      {"protocol.n_subjects_eval", num(cfg.protocol.n_subjects_eval)},
      {"protocol.n_tests", num(cfg.protocol.n_tests)},
      {"protocol.n_folds", num(cfg.protocol.n_folds)},
      {"protocol.eval_fraction", num(cfg.protocol.eval_fraction)},
      {"protocol.intensities",
       [&](const std::string& k, const std::string& v) {
         cfg.protocol.intensities.clear();
         std::istringstream in(v);
         std::string tok;
         while (std::getline(in, tok, ',')) {
           cfg.protocol.intensities.push_back(detail::parse_number<int>(k, std::string(trim(tok))));
         }
       }},
      {"protocol.seed",
       [&](const std::string& k, const std::string& v) { cfg.set_seed(detail::parse_number<std::uint64_t>(k, v)); }},
  };

  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body(trim(line));
    if (body.empty()) continue;
    const std::string where = what + ":" + std::to_string(line_no);
    if (body.front() == '[') {
      if (body.back() != ']') throw Error(ErrorCode::ConfigError, where + ": malformed section header");
      section = std::string(trim(std::string_view(body).substr(1, body.size() - 2)));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, where + ": expected key = value");
    const std::string key = section + "." + std::string(trim(std::string_view(body).substr(0, eq)));
    const std::string value(trim(std::string_view(body).substr(eq + 1)));
    const auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorCode::ConfigError, where + ": unknown key '" + key + "'");
    it->second(where + ": " + key, value);
  }
  cfg.validate();
}

inline PipelineConfig parse_config(const std::string& text, const std::string& what = "config") {
  PipelineConfig cfg;
  cfg.set_seed(cfg.seed());
  apply_config(cfg, text, what);
  return cfg;
}

inline PipelineConfig default_config() { return parse_config(""); }

inline PipelineConfig read_config(const fs::path& path) { return parse_config(read_file(path), path.string()); }

inline std::string format_config(const PipelineConfig& c) {
  // shortest text that reads back to the same double
  auto r = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  std::ostringstream o;
  o << "[alignment]\nref_interocular_distance = " << r(c.ref_interocular_distance) << "\n\n";
  o << "[parts]\npad = " << r(c.part_pad) << "\n\n";
  o << "[features]\nsource = " << feature_source_name(c.feature_source)
    << "\nregion = " << (c.region == Region::Parts ? "parts" : "face")
    << "\nflip_augment = " << (c.flip_augment ? "true" : "false") << "\nencoder_seed = " << c.encoder_seed << "\n\n";
  o << "[hog]\ncell_size = " << c.hog.cell_size << "\nblock_cells = " << c.hog.block_cells << "\nbins = " << c.hog.bins
    << "\nclip = " << r(c.hog.clip) << "\n\n";
  o << "[ulbp]\ncell_size = " << c.ulbp.cell_size << "\n\n";
  o << "[fusion]\nbatch_size = " << c.train.batch_size << "\nlr_start = " << r(c.train.lr_start)
    << "\nlr_end = " << r(c.train.lr_end) << "\nepochs = " << c.train.epochs << "\nmomentum = " << r(c.train.momentum)
    << "\nweight_decay = " << r(c.train.weight_decay) << "\nfc6 = " << c.fc6 << "\nfc7 = " << c.fc7
    << "\nfc7_post_relu = " << (c.fc7_post_relu ? "true" : "false") << "\nval_fraction = " << r(c.val_fraction) << "\n\n";
  o << "[pca]\ntarget_variance = " << r(c.pca_target) << "\n\n";
  o << "[svm]\ndegree = " << c.kernel.degree << "\ngamma = " << r(c.kernel.gamma) << "\ncoef0 = " << r(c.kernel.coef0)
    << "\nC = " << r(c.kernel.C) << "\ntol = " << r(c.svm_tol) << "\n\n";
  o << "[protocol]\nn_subjects_eval = " << c.protocol.n_subjects_eval << "\nintensities = ";
  for (std::size_t i = 0; i < c.protocol.intensities.size(); ++i) o << (i ? "," : "") << c.protocol.intensities[i];
  o << "\nn_tests = " << c.protocol.n_tests << "\nn_folds = " << c.protocol.n_folds
    << "\neval_fraction = " << r(c.protocol.eval_fraction) << "\nseed = " << c.protocol.seed << "\n";
  return o.str();
}

}  // namespace fer
