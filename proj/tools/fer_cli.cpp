// fer: staged facial expression recognition pipeline.
//
// Exit status: 0 success, 1 some samples failed (see the stage's errors.log),
// 2 the command itself failed.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "fer/fer.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string manifest;
  std::optional<std::string> feature_source;
  std::optional<std::string> region;
};

void add_common(CLI::App* cmd, Common& c, bool needs_manifest = true) {
  cmd->add_option("--config", c.config, "pipeline config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed (overrides protocol.seed)");
  cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  if (needs_manifest) cmd->add_option("--manifest", c.manifest, "dataset manifest CSV")->required();
}

fer::StageOptions stage_options(const Common& c) {
  fer::StageOptions opt;
  opt.config = c.config.empty() ? fer::default_config() : fer::read_config(c.config);
  if (c.seed) opt.config.set_seed(*c.seed);
  if (c.feature_source) opt.config.feature_source = fer::parse_feature_source(*c.feature_source);
  if (c.region) {
    if (*c.region == "parts") opt.config.region = fer::Region::Parts;
    else if (*c.region == "face") opt.config.region = fer::Region::Face;
    else throw fer::Error(fer::ErrorCode::ConfigError, "--region must be parts or face");
  }
  opt.config.validate();
  opt.jobs = c.jobs;
  return opt;
}

int finish(const std::string& stage, const fer::StageResult& r) {
  for (const auto& e : r.errors) std::cerr << stage << ": " << e << '\n';
  std::cerr << stage << ": " << r.processed << " processed, " << r.errors.size() << " failed\n";
  return r.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Facial expression recognition from texture and depth maps"};
  app.require_subcommand(1);
  Common c;
  std::string in_dir, out_dir, models_dir, pca_dir;
  std::size_t n_subjects = 10;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with ground truth");
  synth->add_option("--out", out_dir)->required();
  synth->add_option("--subjects", n_subjects, "number of subjects")->check(CLI::Range(2, 100000));
  add_common(synth, c, false);

  auto* ref = app.add_subcommand("ref-distance", "print the dataset's mean inter-ocular distance");
  add_common(ref, c);

  auto* align = app.add_subcommand("align", "rotate and scale faces upright to the reference distance");
  align->add_option("--out", out_dir)->required();
  add_common(align, c);

  auto* parts = app.add_subcommand("parts", "crop facial parts and the whole face to 64x64");
  parts->add_option("--in", in_dir, "align output")->required();
  parts->add_option("--out", out_dir)->required();
  add_common(parts, c);

  auto* features = app.add_subcommand("features", "per-part feature maps or descriptors");
  features->add_option("--in", in_dir, "parts output (unused for tensor_files)");
  features->add_option("--out", out_dir)->required();
  features->add_option("--feature-source", c.feature_source, "stub_encoder, tensor_files, hog or ulbp");
  add_common(features, c);

  auto* train = app.add_subcommand("train-fusion", "fine-tune the per-modality fusion nets");
  train->add_option("--in", in_dir, "features output")->required();
  train->add_option("--out", out_dir)->required();
  train->add_option("--region", c.region, "parts or face");
  add_common(train, c);

  auto* extract = app.add_subcommand("extract", "fused per-sample vectors");
  extract->add_option("--in", in_dir, "features output")->required();
  extract->add_option("--models", models_dir, "train-fusion output");
  extract->add_option("--out", out_dir)->required();
  extract->add_option("--region", c.region, "parts or face");
  add_common(extract, c);

  auto* pca = app.add_subcommand("pca", "fit PCA on the evaluation subjects' vectors");
  pca->add_option("--in", in_dir, "extract output")->required();
  pca->add_option("--out", out_dir)->required();
  add_common(pca, c);

  auto* svm = app.add_subcommand("svm", "fit the multi-class SVM on PCA-reduced vectors");
  svm->add_option("--in", in_dir, "extract output")->required();
  svm->add_option("--pca", pca_dir, "pca output")->required();
  svm->add_option("--out", out_dir)->required();
  add_common(svm, c);

  auto* evaluate = app.add_subcommand("evaluate", "subject-independent cross-validation report");
  evaluate->add_option("--in", in_dir, "extract output")->required();
  evaluate->add_option("--out", out_dir)->required();
  add_common(evaluate, c);

  auto* run = app.add_subcommand("run", "every stage from align to evaluate");
  run->add_option("--work", out_dir, "directory for all stage outputs")->required();
  run->add_option("--feature-source", c.feature_source, "stub_encoder, tensor_files, hog or ulbp");
  run->add_option("--region", c.region, "parts or face");
  add_common(run, c);

  CLI11_PARSE(app, argc, argv);

  try {
    const fer::StageOptions opt = stage_options(c);
    if (synth->parsed()) {
      fer::SynthOptions so;
      so.n_subjects = n_subjects;
      so.seed = opt.config.seed();
      so.jobs = opt.jobs;
      const auto records = fer::synth_dataset(out_dir, so);
      std::cerr << "synth: " << records.size() << " samples written to " << out_dir << '\n';
      return 0;
    }
    const auto records = fer::read_manifest(c.manifest);
    if (ref->parsed()) {
      std::cout.precision(17);
      std::cout << fer::reference_distance(records) << '\n';
      return 0;
    }
    if (align->parsed()) return finish("align", fer::cmd_align(records, out_dir, opt));
    if (parts->parsed()) return finish("parts", fer::cmd_parts(records, in_dir, out_dir, opt));
    if (features->parsed()) return finish("features", fer::cmd_features(records, in_dir, out_dir, opt));
    if (train->parsed()) return finish("train-fusion", fer::cmd_train_fusion(records, in_dir, out_dir, opt));
    if (extract->parsed()) return finish("extract", fer::cmd_extract(records, in_dir, models_dir, out_dir, opt));
    if (pca->parsed()) return finish("pca", fer::cmd_pca(records, in_dir, out_dir, opt));
    if (svm->parsed()) return finish("svm", fer::cmd_svm(records, in_dir, pca_dir, out_dir, opt));
    if (evaluate->parsed()) {
      fer::EvalReport report;
      const int status = finish("evaluate", fer::cmd_evaluate(records, in_dir, out_dir, opt, &report));
      std::cout << fer::report_to_text(report);
      return status;
    }
    if (run->parsed()) {
      std::vector<std::string> errors;
      const auto report = fer::run_chain(records, fer::ChainDirs::under(out_dir), opt, &errors);
      for (const auto& e : errors) std::cerr << "run: " << e << '\n';
      std::cout << fer::report_to_text(report);
      return errors.empty() ? 0 : 1;
    }
  } catch (const fer::Error& e) {
    std::cerr << "error [" << fer::to_string(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
