#include "fpsr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fpsr/losses.hpp"
#include "fpsr/ops.hpp"
#include "fpsr/resample.hpp"

namespace fpsr {

namespace {

std::string real_text(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

std::string join_counts(const std::array<std::int64_t, 3>& a) {
  return std::to_string(a[0]) + " " + std::to_string(a[1]) + " " + std::to_string(a[2]);
}

std::array<std::int64_t, 3> parse_counts(const std::string& s) {
  std::array<std::int64_t, 3> out{};
  std::istringstream is(s);
  for (auto& v : out)
    if (!(is >> v)) throw CheckpointError("malformed counter list '" + s + "'");
  return out;
}

const std::string& meta_at(const Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.meta.find(key);
  if (it == ckpt.meta.end()) throw CheckpointError("checkpoint lacks '" + key + "'");
  return it->second;
}

void require_phase(const Checkpoint& ckpt, const std::string& phase) {
  const auto& got = meta_at(ckpt, "phase");
  if (got != phase) throw CheckpointError("checkpoint is from phase '" + got + "', expected '" + phase + "'");
}

// Largest top-left crop whose extents are multiples of `m`.
ImageRGB crop_to_multiple(const ImageRGB& image, int m) {
  const int h = image.height() / m * m, w = image.width() / m * m;
  if (h == 0 || w == 0) throw std::invalid_argument("image is smaller than the scale factor");
  if (h == image.height() && w == image.width()) return image;
  return image.crop(0, 0, h, w);
}

Tensor<float> mean_of(const std::vector<Tensor<float>>& parts) {
  Tensor<float> acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = ops::add(acc, parts[i]);
  if (parts.size() == 1) return acc;
  return ops::scale(acc, 1.0f / static_cast<float>(parts.size()));
}

double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

std::string format_log_row(const StepLog& row) {
  std::ostringstream os;
  os << row.step;
  for (double p : row.parts) os << ',' << real_text(p);
  os << ',' << real_text(row.total) << ',' << real_text(row.d_loss) << ',' << real_text(row.lr);
  return os.str();
}

TensorBatch stack_pairs(const std::vector<PatchPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("empty patch batch");
  std::vector<ImageRGB> lr, hr;
  for (const auto& p : pairs) {
    lr.push_back(p.lr);
    hr.push_back(p.hr);
  }
  return {images_to_tensor<float>(lr), images_to_tensor<float>(hr)};
}

// ---- pretraining ---------------------------------------------------------

EusrPretrainer::EusrPretrainer(const RunConfig& config, std::vector<ImageRGB> data)
    : config_(config),
      data_(std::move(data)),
      model_(config.eusr, derive_seed(config.seed, "init.eusr")),
      adam_(model_.parameters(), AdamOptions{0.9, 0.999, 1e-8}),
      schedule_{config.pretrain_steps(), config.pretrain.lr, config.pretrain_halving()},
      rng_(config.seed) {
  if (data_.empty()) throw std::invalid_argument("pretraining needs at least one image");
  const int need = config_.pretrain.lr_patch * models::kScales.back();
  for (const auto& im : data_) {
    if (im.height() < need || im.width() < need) {
      throw std::invalid_argument("pretraining image " + std::to_string(im.height()) + "x" +
                                  std::to_string(im.width()) + " is smaller than the " + std::to_string(need) +
                                  " px crop needed at x8");
    }
  }
  schedule_.validate();
}

StepLog EusrPretrainer::step_once() {
  if (done()) throw std::logic_error("pretraining already finished");
  const auto slot = static_cast<std::size_t>(rng_.stream("pretrain.scale").uniform_int(0, 2));
  const int scale = models::kScales[slot];
  ++draws_[slot];
  auto& crop = rng_.stream("pretrain.crop");
  std::vector<PatchPair> pairs;
  for (int b = 0; b < config_.pretrain.batch; ++b) {
    const auto idx = static_cast<std::size_t>(crop.uniform_int(0, static_cast<std::int64_t>(data_.size()) - 1));
    pairs.push_back(random_crop_pair(data_[idx], scale, config_.pretrain.lr_patch, crop));
  }
  const auto batch = stack_pairs(pairs);
  const auto sr = model_.forward(batch.lr, scale);
  const auto loss = losses::recon_l1(batch.hr, sr);
  StepLog row;
  row.parts[0] = loss.item();
  row.total = row.parts[0];
  row.lr = schedule_.lr(step_);
  backward(loss);
  adam_.step(row.lr, MissingGrad::Skip);
  adam_.clear_grads();
  row.step = ++step_;
  return row;
}

void EusrPretrainer::run(std::int64_t stop_at, std::ostream* log) {
  const auto end = std::min(stop_at, schedule_.total_steps);
  while (step_ < end) {
    const auto row = step_once();
    if (log) *log << format_log_row(row) << '\n';
  }
}

Checkpoint EusrPretrainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.config_digest = config_.digest();
  ckpt.step = step_;
  ckpt.rng = rng_.snapshot();
  ckpt.meta["phase"] = "pretrain";
  ckpt.meta["scale_draws"] = join_counts(draws_);
  store_parameters(ckpt, "gen/", model_.parameters());
  store_adam(ckpt, "adam.gen/", adam_);
  return ckpt;
}

void EusrPretrainer::resume(const Checkpoint& ckpt) {
  require_phase(ckpt, "pretrain");
  if (ckpt.config_digest != config_.digest()) {
    throw CheckpointError("checkpoint was produced by a different configuration");
  }
  restore_parameters(ckpt, "gen/", model_.parameters());
  restore_adam(ckpt, "adam.gen/", adam_);
  rng_.restore(ckpt.rng);
  draws_ = parse_counts(meta_at(ckpt, "scale_draws"));
  step_ = ckpt.step;
}

double probe_l1(const models::Eusr<float>& model, const TensorBatch& batch, int scale) {
  NoGradGuard guard;
  return static_cast<double>(losses::recon_l1(batch.hr, model.forward(batch.lr, scale)).item());
}

UpscaleScore evaluate_upscaling(const models::Eusr<float>& model, const std::vector<ImageRGB>& hr_images,
                                int scale) {
  if (hr_images.empty()) throw std::invalid_argument("no images to evaluate");
  NoGradGuard guard;
  UpscaleScore score;
  for (const auto& original : hr_images) {
    const ImageRGB hr = crop_to_multiple(original, scale);
    const ImageRGB lr = bicubic_resize(hr, Ratio{1, scale});
    const ImageRGB sr = tensor_to_image(model.forward(image_to_tensor<float>(lr), scale));
    score.model_psnr += metrics::psnr_y(hr, sr);
    score.bicubic_psnr += metrics::psnr_y(hr, bicubic_resize(lr, Ratio{scale, 1}));
  }
  score.model_psnr /= static_cast<double>(hr_images.size());
  score.bicubic_psnr /= static_cast<double>(hr_images.size());
  return score;
}

// ---- predictors ------------------------------------------------------------

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

PredictorEval evaluate_predictor(const models::ScorePredictor<float>& model, const std::vector<ScoredImage>& data,
                                 int batch) {
  if (data.empty()) throw std::invalid_argument("no records to evaluate");
  NoGradGuard guard;
  std::vector<double> predicted, labels;
  double emd_total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch));
    std::vector<ImageRGB> images;
    for (std::size_t i = start; i < end; ++i) images.push_back(data[i].image);
    const auto out = model.forward(images_to_tensor<float>(images));
    const auto dists = model.distributions(out);
    for (std::size_t i = start; i < end; ++i) {
      emd_total += losses::emd_sq(data[i].score_dist, dists[i - start]);
      predicted.push_back(static_cast<double>(out.mean_scores.at(static_cast<std::int64_t>(i - start))));
      labels.push_back(data[i].label_mean);
    }
  }
  return {emd_total / static_cast<double>(data.size()), spearman(predicted, labels)};
}

namespace {

Tensor<float> score_targets(const std::vector<ScoredImage>& data, const std::vector<std::size_t>& idx) {
  std::vector<float> values;
  for (auto i : idx)
    for (double p : data[i].score_dist.probabilities()) values.push_back(static_cast<float>(p));
  return Tensor<float>({static_cast<std::int64_t>(idx.size()), kScoreBins}, std::move(values));
}

std::int64_t run_predictor_stage(models::ScorePredictor<float>& model, const models::ParamList<float>& params,
                                 const std::vector<ScoredImage>& train, const std::vector<ScoredImage>& val,
                                 const PredictorStage& stage, double eps, Rng& rng, int stage_no,
                                 std::ostream* log) {
  Adam<float> adam(params, AdamOptions{0.9, 0.999, eps});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t steps = 0;
  for (int epoch = 0; epoch < stage.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(stage.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(stage.batch));
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<ImageRGB> images;
      for (auto i : idx) images.push_back(train[i].image);
      const auto out = model.forward(images_to_tensor<float>(images));
      const auto loss = losses::emd_sq(score_targets(train, idx), out.probs);
      epoch_loss += static_cast<double>(loss.item()) * static_cast<double>(idx.size());
      seen += idx.size();
      backward(loss);
      adam.step(stage.lr);
      adam.clear_grads();
      ++steps;
    }
    if (log) {
      const auto ev = evaluate_predictor(model, val);
      *log << stage_no << ',' << epoch + 1 << ',' << real_text(epoch_loss / static_cast<double>(seen)) << ','
           << real_text(ev.emd) << ',' << real_text(ev.srocc) << '\n';
    }
  }
  return steps;
}

}  // namespace

PredictorReport train_predictor(models::ScorePredictor<float>& model, const std::vector<ScoredImage>& train,
                                const std::vector<ScoredImage>& val, const PredictorStage& stage1,
                                const PredictorStage& stage2, double eps, Rng& shuffle_rng, std::ostream* log) {
  if (train.empty() || val.empty()) throw std::invalid_argument("predictor training needs non-empty train and validation splits");
  if (stage1.batch < 1 || stage2.batch < 1 || stage1.epochs < 0 || stage2.epochs < 0) {
    throw std::invalid_argument("invalid predictor stage settings");
  }
  if (log) *log << "stage,epoch,train_emd,val_emd,val_srocc\n";
  PredictorReport report;
  report.before = evaluate_predictor(model, val);

  model.set_trainable(false);
  auto head = model.head_parameters();
  for (auto& p : head) p.tensor.set_requires_grad(true);
  std::vector<std::vector<float>> backbone_before;
  for (const auto& p : model.backbone_parameters()) {
    backbone_before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  }
  report.steps += run_predictor_stage(model, head, train, val, stage1, eps, shuffle_rng, 1, log);
  report.backbone_unchanged_in_stage1 = true;
  {
    const auto backbone = model.backbone_parameters();
    for (std::size_t i = 0; i < backbone.size(); ++i) {
      const auto d = backbone[i].tensor.data();
      if (!std::equal(d.begin(), d.end(), backbone_before[i].begin(), backbone_before[i].end())) {
        report.backbone_unchanged_in_stage1 = false;
      }
    }
  }
  report.after_stage1 = evaluate_predictor(model, val);

  model.set_trainable(true);
  report.steps += run_predictor_stage(model, model.parameters(), train, val, stage2, eps, shuffle_rng, 2, log);
  model.set_trainable(false);
  report.after = evaluate_predictor(model, val);
  return report;
}

void split_scored(const std::vector<ScoredImage>& all, double val_fraction, std::vector<ScoredImage>& train,
                  std::vector<ScoredImage>& val) {
  if (!(val_fraction > 0 && val_fraction < 1)) throw std::invalid_argument("validation fraction must lie in (0,1)");
  const auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(all.size())));
  if (all.size() < 2 || n_val >= all.size()) throw std::invalid_argument("scored dataset too small to split");
  train.assign(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_val));
  val.assign(all.end() - static_cast<std::ptrdiff_t>(n_val), all.end());
}

// ---- perceptual phase ------------------------------------------------------

PerceptualTrainer::PerceptualTrainer(const RunConfig& config, models::Eusr<float> generator,
                                     std::vector<ImageRGB> data, const models::ScorePredictor<float>* aesthetic,
                                     const models::ScorePredictor<float>* subjective, losses::LossWeights weights,
                                     bool multipass)
    : config_(config),
      data_(std::move(data)),
      gen_(std::move(generator)),
      disc_(config.disc, derive_seed(config.seed, "init.disc")),
      aesthetic_(aesthetic),
      subjective_(subjective),
      weights_(weights),
      multipass_(multipass),
      gen_adam_(gen_.parameters(), AdamOptions{0.9, 0.999, config.perceptual.eps}),
      disc_adam_(disc_.parameters(), AdamOptions{0.9, 0.999, config.perceptual.eps}),
      rng_(config.seed),
      total_(config.perceptual_steps()) {
  weights_.validate();
  if (data_.empty()) throw std::invalid_argument("perceptual training needs at least one image");
  auto guard = [](const models::ScorePredictor<float>* p, bool used, const char* which) {
    if (!used) return;
    if (!p) throw std::invalid_argument(std::string(which) + " predictor is required by the loss weights");
    if (!p->is_frozen()) throw std::logic_error(std::string(which) + " predictor must be frozen before the perceptual phase");
  };
  guard(aesthetic_, weights_.uses_aesthetic(), "aesthetic");
  guard(subjective_, weights_.uses_subjective(), "subjective");
  const int hr = config_.disc.input_size;
  for (const auto& im : data_) {
    if (im.height() < hr || im.width() < hr) {
      throw std::invalid_argument("training image smaller than the " + std::to_string(hr) + " px HR patch");
    }
  }
}

StepLog PerceptualTrainer::step_once() {
  if (done()) throw std::logic_error("perceptual phase already finished");
  auto& crop = rng_.stream("perceptual.crop");
  const int lr_patch = config_.disc.input_size / 4;
  std::vector<PatchPair> pairs;
  for (int b = 0; b < config_.perceptual.patches; ++b) {
    const auto idx = static_cast<std::size_t>(crop.uniform_int(0, static_cast<std::int64_t>(data_.size()) - 1));
    pairs.push_back(random_crop_pair(data_[idx], 4, lr_patch, crop));
  }
  const auto batch = stack_pairs(pairs);
  const auto fakes = models::multipass_x4(gen_, batch.lr, multipass_);

  // Discriminator first, on detached fakes.
  std::vector<Tensor<float>> detached;
  for (const auto& f : fakes) detached.push_back(f.detach());
  const auto fake_all = ops::concat_batch(detached);
  const auto real_logits = disc_.logits(batch.hr);
  const auto fake_logits = disc_.logits(fake_all);
  const auto d_loss = losses::disc_loss_logits(real_logits, fake_logits);
  d_min_ = 1.0;
  d_max_ = 0.0;
  for (const auto* t : {&real_logits, &fake_logits}) {
    for (float z : t->data()) {
      const double p = logistic(static_cast<double>(z));
      d_min_ = std::min(d_min_, p);
      d_max_ = std::max(d_max_, p);
    }
  }
  last_real_ = real_logits.dim(0);
  last_fake_ = fake_logits.dim(0);
  StepLog row;
  row.d_loss = d_loss.item();
  backward(d_loss);
  disc_adam_.step(config_.perceptual.disc_lr);
  disc_adam_.clear_grads();
  ++disc_updates_;
  trace_ += 'D';

  // Generator, every part averaged over the upscaled outputs.
  std::array<std::vector<Tensor<float>>, 6> per;
  const bool use_a = weights_.uses_aesthetic(), use_s = weights_.uses_subjective();
  std::optional<models::PredictorOutput<float>> a_gt, s_gt;
  {
    NoGradGuard no_grad;
    if (use_a) a_gt = aesthetic_->forward(batch.hr);
    if (use_s) s_gt = subjective_->forward(batch.hr);
  }
  const auto a_params = config_.aesthetic_params();
  const auto s_params = config_.subjective_params();
  for (const auto& f : fakes) {
    per[0].push_back(losses::recon_l1(batch.hr, f));
    per[1].push_back(losses::adversarial_gen_logits(disc_.logits(f)));
    if (use_a) {
      const auto out = aesthetic_->forward(f);
      per[2].push_back(losses::score_loss(a_gt->mean_scores, out.mean_scores, a_params));
      per[3].push_back(losses::repr_loss(a_gt->repr, out.repr));
    }
    if (use_s) {
      const auto out = subjective_->forward(f);
      per[4].push_back(losses::score_loss(s_gt->mean_scores, out.mean_scores, s_params));
      per[5].push_back(losses::repr_loss(s_gt->repr, out.repr));
    }
  }
  std::array<Tensor<float>, 6> parts;
  for (std::size_t i = 0; i < 6; ++i) {
    if (!per[i].empty()) {
      parts[i] = mean_of(per[i]);
      row.parts[i] = parts[i].item();
    }
  }
  const auto total = losses::total_gen_loss(parts, weights_);
  row.total = total.item();
  row.lr = config_.perceptual.gen_lr;
  backward(total);
  gen_adam_.step(config_.perceptual.gen_lr, MissingGrad::Skip);
  gen_adam_.clear_grads();
  disc_adam_.clear_grads();
  ++gen_updates_;
  trace_ += 'G';
  row.step = ++step_;
  return row;
}

void PerceptualTrainer::run(std::int64_t stop_at, std::ostream* log) {
  const auto end = std::min(stop_at, total_);
  while (step_ < end) {
    const auto row = step_once();
    if (log) *log << format_log_row(row) << '\n';
  }
}

Checkpoint PerceptualTrainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.config_digest = config_.digest();
  ckpt.step = step_;
  ckpt.rng = rng_.snapshot();
  ckpt.meta["phase"] = "perceptual";
  ckpt.meta["weights"] = weights_.to_string();
  ckpt.meta["multipass"] = multipass_ ? "1" : "0";
  store_parameters(ckpt, "gen/", gen_.parameters());
  store_parameters(ckpt, "disc/", disc_.parameters());
  store_adam(ckpt, "adam.gen/", gen_adam_);
  store_adam(ckpt, "adam.disc/", disc_adam_);
  return ckpt;
}

void PerceptualTrainer::resume(const Checkpoint& ckpt) {
  require_phase(ckpt, "perceptual");
  if (ckpt.config_digest != config_.digest()) {
    throw CheckpointError("checkpoint was produced by a different configuration");
  }
  if (meta_at(ckpt, "weights") != weights_.to_string() || meta_at(ckpt, "multipass") != (multipass_ ? "1" : "0")) {
    throw CheckpointError("checkpoint was produced with different loss weights or multi-pass setting");
  }
  restore_parameters(ckpt, "gen/", gen_.parameters());
  restore_parameters(ckpt, "disc/", disc_.parameters());
  restore_adam(ckpt, "adam.gen/", gen_adam_);
  restore_adam(ckpt, "adam.disc/", disc_adam_);
  rng_.restore(ckpt.rng);
  step_ = ckpt.step;
}

// ---- ablations -------------------------------------------------------------

std::vector<AblationCell> ablation_grid(const std::string& name, const losses::LossWeights& base) {
  std::vector<AblationCell> cells;
  auto fmt = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  if (name == "eq10") {
    for (double ap : {0.0, 1.0})
      for (double ar : {0.5, 0.05, 0.005})
        cells.push_back({"ar=" + fmt(ar) + ":ap=" + fmt(ap), losses::LossWeights::eq10(ar, ap), true});
  } else if (name == "losses") {
    auto drop = [&](const std::string& label, std::initializer_list<double losses::LossWeights::*> members) {
      auto w = base;
      for (auto m : members) w.*m = 0.0;
      cells.push_back({label, w, true});
    };
    cells.push_back({"all", base, true});
    drop("-l_r", {&losses::LossWeights::w_r});
    drop("-l_g", {&losses::LossWeights::w_g});
    drop("-l_as,l_ar", {&losses::LossWeights::w_as, &losses::LossWeights::w_ar});
    drop("-l_ss,l_sr", {&losses::LossWeights::w_ss, &losses::LossWeights::w_sr});
  } else if (name == "multipass") {
    cells.push_back({"multipass", base, true});
    cells.push_back({"single-pass", base, false});
  } else {
    throw ConfigError("unknown ablation grid '" + name + "' (expected eq10, losses or multipass)");
  }
  return cells;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationCell>& grid, const RunConfig& config,
                                      const models::Eusr<float>& pretrained, const std::vector<ImageRGB>& train,
                                      const std::vector<ImageRGB>& eval_hr,
                                      const models::ScorePredictor<float>* aesthetic,
                                      const models::ScorePredictor<float>* subjective,
                                      const metrics::PristineModel* pristine, std::ostream* progress) {
  std::vector<AblationRow> rows;
  for (const auto& cell : grid) {
    AblationRow row;
    row.cell = cell;
    try {
      models::Eusr<float> gen(config.eusr, derive_seed(config.seed, "init.eusr"));
      models::copy_parameters(pretrained.parameters(), gen.parameters());
      PerceptualTrainer trainer(config, std::move(gen), train, aesthetic, subjective, cell.weights, cell.multipass);
      trainer.generator().reset_forward_count();
      StepLog last;
      while (!trainer.done()) last = trainer.step_once();
      row.forwards_per_step =
          static_cast<std::int64_t>(trainer.generator().forward_count()) / std::max<std::int64_t>(1, trainer.step());
      row.final_parts = last.parts;

      metrics::QualityReport report;
      NoGradGuard no_grad;
      for (std::size_t i = 0; i < eval_hr.size(); ++i) {
        const ImageRGB hr = crop_to_multiple(eval_hr[i], 4);
        const ImageRGB lr = bicubic_resize(hr, Ratio{1, 4});
        const ImageRGB sr =
            tensor_to_image(models::upscale_x4_path(trainer.generator(), image_to_tensor<float>(lr), "x4"));
        metrics::QualityRecord rec;
        rec.name = "eval" + std::to_string(i);
        rec.psnr_db = metrics::psnr_y(hr, sr);
        rec.ssim = metrics::ssim_y(hr, sr);
        if (pristine) {
          try {
            rec.niqe = metrics::niqe(sr, *pristine);
          } catch (const std::invalid_argument&) {
          }
        }
        report.records.push_back(rec);
      }
      metrics::finalize_report(report);
      row.mean = report.mean;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    if (progress) {
      *progress << "ablation cell " << cell.label << ": " << (row.ok ? "ok" : "failed: " + row.error) << '\n';
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "cell,multipass,w_r,w_g,w_as,w_ar,w_ss,w_sr,status,psnr_db,ssim,niqe,forwards_per_step\n";
  for (const auto& r : rows) {
    os << r.cell.label << ',' << (r.cell.multipass ? 1 : 0);
    for (double w : r.cell.weights.as_array()) os << ',' << real_text(w);
    if (r.ok) {
      os << ",ok," << metrics::format_metric(r.mean.psnr_db) << ',' << metrics::format_metric(r.mean.ssim) << ','
         << (r.mean.niqe ? metrics::format_metric(*r.mean.niqe) : "") << ',' << r.forwards_per_step << '\n';
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      os << ",failed: " << msg << ",,,," << '\n';
    }
  }
  return os.str();
}

}  // namespace fpsr
