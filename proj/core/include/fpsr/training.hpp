#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fpsr/checkpoint.hpp"
#include "fpsr/config.hpp"
#include "fpsr/dataset.hpp"
#include "fpsr/metrics.hpp"
#include "fpsr/models.hpp"
#include "fpsr/optim.hpp"
#include "fpsr/rng.hpp"

namespace fpsr {

/// One row of a training log: `step,l_r,l_g,l_as,l_ar,l_ss,l_sr,total,d_loss,lr`.
struct StepLog {
  std::int64_t step = 0;
  std::array<double, 6> parts{};
  double total = 0.0;
  double d_loss = 0.0;
  double lr = 0.0;
};

inline constexpr const char* kLogHeader = "step,l_r,l_g,l_as,l_ar,l_ss,l_sr,total,d_loss,lr";
std::string format_log_row(const StepLog& row);

/// Stacks patch pairs into N x 3 x h x w tensors.
struct TensorBatch {
  Tensor<float> lr;
  Tensor<float> hr;
};
TensorBatch stack_pairs(const std::vector<PatchPair>& pairs);

// ---- generator pretraining ---------------------------------------------

/// L1 pretraining where each step trains one uniformly drawn upscaling path.
class EusrPretrainer {
 public:
  EusrPretrainer(const RunConfig& config, std::vector<ImageRGB> data);

  /// Runs one step and returns its log row.
  StepLog step_once();
  /// Runs until `stop_at` (clamped to the configured total) or completion.
  void run(std::int64_t stop_at, std::ostream* log = nullptr);

  std::int64_t step() const { return step_; }
  std::int64_t total_steps() const { return schedule_.total_steps; }
  bool done() const { return step_ >= schedule_.total_steps; }
  const Schedule& schedule() const { return schedule_; }

  models::Eusr<float>& model() { return model_; }
  const models::Eusr<float>& model() const { return model_; }
  /// Draws per scale slot (x2, x4, x8) so far.
  const std::array<std::int64_t, 3>& scale_draws() const { return draws_; }

  Checkpoint checkpoint() const;
  /// Restores parameters, optimizer state, RNG streams and step.
  void resume(const Checkpoint& ckpt);

 private:
  RunConfig config_;
  std::vector<ImageRGB> data_;
  models::Eusr<float> model_;
  Adam<float> adam_;
  Schedule schedule_;
  RngStreams rng_;
  std::int64_t step_ = 0;
  std::array<std::int64_t, 3> draws_{};
};

/// Mean L1 of the x`scale` path over a fixed batch, without recording.
double probe_l1(const models::Eusr<float>& model, const TensorBatch& batch, int scale);

/// Mean PSNR (Y, 4 px crop) of x`scale` reconstructions of each image's
/// bicubic downscale, alongside the bicubic-upscale baseline.
struct UpscaleScore {
  double model_psnr = 0.0;
  double bicubic_psnr = 0.0;
};
UpscaleScore evaluate_upscaling(const models::Eusr<float>& model, const std::vector<ImageRGB>& hr_images,
                                int scale);

// ---- score predictors --------------------------------------------------

struct PredictorEval {
  double emd = 0.0;    // mean squared EMD
  double srocc = 0.0;  // Spearman correlation of predicted means vs labels
};

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

PredictorEval evaluate_predictor(const models::ScorePredictor<float>& model, const std::vector<ScoredImage>& data,
                                 int batch = 32);

struct PredictorStage {
  int epochs = 1;
  int batch = 32;
  double lr = 1e-3;
};

struct PredictorReport {
  PredictorEval before;
  PredictorEval after_stage1;
  PredictorEval after;
  bool backbone_unchanged_in_stage1 = false;
  std::int64_t steps = 0;
};

/// Two-stage training on the squared EMD: the head alone with the backbone
/// frozen, then every layer. Leaves the predictor frozen on return.
PredictorReport train_predictor(models::ScorePredictor<float>& model, const std::vector<ScoredImage>& train,
                                const std::vector<ScoredImage>& val, const PredictorStage& stage1,
                                const PredictorStage& stage2, double eps, Rng& shuffle_rng,
                                std::ostream* log = nullptr);

/// Deterministic split: the last ceil(fraction n) records validate.
void split_scored(const std::vector<ScoredImage>& all, double val_fraction, std::vector<ScoredImage>& train,
                  std::vector<ScoredImage>& val);

// ---- perceptual phase --------------------------------------------------

/// Adversarial and perceptual fine-tuning of a pretrained generator. Each step
/// updates the discriminator once on real and generated x4 patches, then the
/// generator once on the weighted sum of the six losses averaged over the
/// upscaled outputs.
class PerceptualTrainer {
 public:
  PerceptualTrainer(const RunConfig& config, models::Eusr<float> generator, std::vector<ImageRGB> data,
                    const models::ScorePredictor<float>* aesthetic, const models::ScorePredictor<float>* subjective,
                    losses::LossWeights weights, bool multipass);

  StepLog step_once();
  void run(std::int64_t stop_at, std::ostream* log = nullptr);

  std::int64_t step() const { return step_; }
  std::int64_t total_steps() const { return total_; }
  bool done() const { return step_ >= total_; }

  models::Eusr<float>& generator() { return gen_; }
  const models::Eusr<float>& generator() const { return gen_; }
  models::Discriminator<float>& discriminator() { return disc_; }
  const losses::LossWeights& weights() const { return weights_; }

  std::int64_t disc_updates() const { return disc_updates_; }
  std::int64_t gen_updates() const { return gen_updates_; }
  /// Order of updates so far, 'D' for discriminator and 'G' for generator.
  const std::string& update_trace() const { return trace_; }
  std::int64_t last_real_batch() const { return last_real_; }
  std::int64_t last_fake_batch() const { return last_fake_; }
  /// Range of discriminator probabilities seen on the last step.
  double last_d_min() const { return d_min_; }
  double last_d_max() const { return d_max_; }

  Checkpoint checkpoint() const;
  void resume(const Checkpoint& ckpt);

 private:
  RunConfig config_;
  std::vector<ImageRGB> data_;
  models::Eusr<float> gen_;
  models::Discriminator<float> disc_;
  const models::ScorePredictor<float>* aesthetic_;
  const models::ScorePredictor<float>* subjective_;
  losses::LossWeights weights_;
  bool multipass_;
  Adam<float> gen_adam_;
  Adam<float> disc_adam_;
  RngStreams rng_;
  std::int64_t step_ = 0;
  std::int64_t total_ = 0;
  std::int64_t disc_updates_ = 0;
  std::int64_t gen_updates_ = 0;
  std::int64_t last_real_ = 0;
  std::int64_t last_fake_ = 0;
  double d_min_ = 0.0;
  double d_max_ = 0.0;
  std::string trace_;
};

// ---- ablations ---------------------------------------------------------

struct AblationCell {
  std::string label;
  losses::LossWeights weights;
  bool multipass = true;
};

/// "eq10" (3 alpha_r x 2 alpha_p), "losses" (all and four exclusions) or
/// "multipass" (on and off, eq8 weights otherwise `base`).
std::vector<AblationCell> ablation_grid(const std::string& name, const losses::LossWeights& base);

struct AblationRow {
  AblationCell cell;
  bool ok = false;
  std::string error;
  metrics::QualityRecord mean;
  std::int64_t forwards_per_step = 0;
  std::array<double, 6> final_parts{};
};

/// Runs the perceptual phase per cell from the same pretrained generator and
/// evaluates x4 outputs of `eval_hr`'s bicubic downscales. Failures are
/// captured per row.
std::vector<AblationRow> run_ablation(const std::vector<AblationCell>& grid, const RunConfig& config,
                                      const models::Eusr<float>& pretrained, const std::vector<ImageRGB>& train,
                                      const std::vector<ImageRGB>& eval_hr,
                                      const models::ScorePredictor<float>* aesthetic,
                                      const models::ScorePredictor<float>* subjective,
                                      const metrics::PristineModel* pristine, std::ostream* progress = nullptr);

/// `cell,multipass,w_r,w_g,w_as,w_ar,w_ss,w_sr,status,psnr_db,ssim,niqe,forwards_per_step`.
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace fpsr
