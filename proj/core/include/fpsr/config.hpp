#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "fpsr/losses.hpp"
#include "fpsr/models.hpp"

namespace fpsr {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// `section.key` -> raw value.
using ConfigMap = std::map<std::string, std::string>;

/// Parses `key = value` lines grouped under `[section]` headers. Keys outside
/// any section belong to `run`. `#` and `;` start comments.
ConfigMap parse_config_text(const std::string& text, const std::string& origin = "<config>");
ConfigMap read_config_file(const std::filesystem::path& path);

/// Resolves `eq8`, `eq10:ar=<alpha_r>:ap=<alpha_p>`, or six comma-separated reals.
losses::LossWeights parse_weights(const std::string& spec);

struct PretrainSettings {
  std::int64_t steps = 1000000;
  double lr = 1e-4;
  std::int64_t halving = 200000;
  int batch = 16;
  int lr_patch = 48;
};

struct PredictorSettings {
  double stage1_lr = 1e-3;
  double stage2_lr = 1e-5;
  int stage1_batch = 128;
  int stage2_batch = 32;
  double eps = 1e-7;
  /// Explicit epoch counts; 0 means the full-schedule count for the predictor kind
  /// divided by scale_factor.
  int stage1_epochs = 0;
  int stage2_epochs = 0;
  double val_fraction = 1.0 / 6.0;
};

struct PerceptualSettings {
  std::int64_t steps = 400000;
  double gen_lr = 1e-5;
  double disc_lr = 2e-5;
  double eps = 1e-8;
  int patches = 2;
  bool multipass = true;
  std::string weights = "eq8";
  double alpha_as = 0.8;
  double alpha_ss = 0.8;
  double s_max = 10.0;
  std::string pretrained;
  std::string aesthetic;
  std::string subjective;
};

/// Fully resolved settings of a run.
struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 1;
  std::int64_t scale_factor = 1;
  std::string output_dir = "run";
  std::int64_t checkpoint_every = 0;

  models::EusrConfig eusr;
  models::DiscriminatorConfig disc;
  models::PredictorConfig predictor;

  std::string train_source = "synthetic:1:16";
  int synth_size = 96;
  std::string aesthetic_source = "synthetic:11:600";
  std::string subjective_source = "synthetic:12:600";
  int scored_size = 48;
  std::string eval_source = "synthetic:21:4";

  PretrainSettings pretrain;
  PredictorSettings predict;
  PerceptualSettings perceptual;

  /// Small models and step counts for single-core runs.
  static RunConfig desk();
  /// Sizes and step counts of the published method.
  static RunConfig paper();

  /// Applies `profile` first, then every other key. Unknown keys are errors.
  static RunConfig from_map(const ConfigMap& values);
  void apply(const std::string& key, const std::string& value);
  void validate() const;

  losses::LossWeights weights() const { return parse_weights(perceptual.weights); }
  losses::ScoreLossParams aesthetic_params() const { return {perceptual.s_max, perceptual.alpha_as}; }
  losses::ScoreLossParams subjective_params() const { return {perceptual.s_max, perceptual.alpha_ss}; }

  std::int64_t pretrain_steps() const;
  std::int64_t pretrain_halving() const;
  std::int64_t perceptual_steps() const;
  /// Epochs of `stage` (1 or 2) for `kind` ("aesthetic" or "subjective").
  int predictor_epochs(const std::string& kind, int stage) const;

  /// Canonical text of every setting, re-readable by read_config_file.
  std::string to_text() const;
  /// Hash of the canonical text without the file locations.
  std::string digest() const;
};

}  // namespace fpsr
