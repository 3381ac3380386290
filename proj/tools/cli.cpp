#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "fpsr/checkpoint.hpp"
#include "fpsr/config.hpp"
#include "fpsr/dataset.hpp"
#include "fpsr/metrics.hpp"
#include "fpsr/models.hpp"
#include "fpsr/training.hpp"

namespace fpsr::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> scale_factor;
  std::string profile;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_file, "Config file (key = value with [section] headers)");
  sub->add_option("--set", c.sets, "Override one setting, section.key=value (repeatable)");
  sub->add_option("--seed", c.seed, "Master seed");
  sub->add_option("--scale-factor", c.scale_factor, "Divisor applied to step and epoch counts");
  sub->add_option("--profile", c.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  sub->add_option("--out", c.out, "Output directory");
}

RunConfig resolve(const Common& c, const ConfigMap& extra = {}) {
  ConfigMap values;
  if (!c.config_file.empty()) values = read_config_file(c.config_file);
  if (!c.profile.empty()) values["run.profile"] = c.profile;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects section.key=value, got '" + s + "'");
    std::string key = s.substr(0, eq);
    if (key.find('.') == std::string::npos) key = "run." + key;
    values[key] = s.substr(eq + 1);
  }
  if (c.seed) values["run.seed"] = std::to_string(*c.seed);
  if (c.scale_factor) values["run.scale_factor"] = std::to_string(*c.scale_factor);
  if (!c.out.empty()) values["run.output_dir"] = c.out;
  for (const auto& [k, v] : extra) values[k] = v;
  return RunConfig::from_map(values);
}

fs::path prepare_output(const RunConfig& cfg, const std::string& command) {
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  std::ofstream out(dir / (command + ".run.cfg"));
  if (!out) throw std::runtime_error("cannot write to output directory '" + dir.string() + "'");
  out << cfg.to_text();
  return dir;
}

std::ofstream open_log(const fs::path& path, bool append, const char* header) {
  const bool fresh = !append || !fs::exists(path);
  std::ofstream log(path, fresh ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot write log '" + path.string() + "'");
  if (fresh) log << header << '\n';
  return log;
}

void require_meta(const Checkpoint& ckpt, const std::string& key, const std::string& want, const std::string& path) {
  auto it = ckpt.meta.find(key);
  if (it == ckpt.meta.end() || it->second != want) {
    throw CheckpointError("'" + path + "' is not a " + want + " checkpoint");
  }
}

models::Eusr<float> load_generator(const RunConfig& cfg, const std::string& path, bool pretrain_only) {
  if (path.empty()) throw ConfigError("a generator checkpoint is required (perceptual.pretrained or --checkpoint)");
  const auto ckpt = load_checkpoint(path);
  if (pretrain_only) require_meta(ckpt, "phase", "pretrain", path);
  models::Eusr<float> gen(cfg.eusr, derive_seed(cfg.seed, "init.eusr"));
  restore_parameters(ckpt, "gen/", gen.parameters());
  return gen;
}

models::ScorePredictor<float> load_predictor(const RunConfig& cfg, const std::string& path, const std::string& kind) {
  if (path.empty()) throw ConfigError("the " + kind + " predictor checkpoint is required (perceptual." + kind + ")");
  const auto ckpt = load_checkpoint(path);
  require_meta(ckpt, "phase", "predictor", path);
  require_meta(ckpt, "kind", kind, path);
  models::ScorePredictor<float> pred(cfg.predictor, derive_seed(cfg.seed, "init.predictor." + kind));
  restore_parameters(ckpt, "pred/", pred.parameters());
  pred.set_trainable(false);
  return pred;
}

std::int64_t stop_point(const std::optional<std::int64_t>& stop_after, std::int64_t current) {
  if (!stop_after) return std::numeric_limits<std::int64_t>::max();
  if (*stop_after < 0) throw ConfigError("--stop-after must be >= 0");
  return current + *stop_after;
}

template <typename Trainer>
void run_with_checkpoints(Trainer& trainer, const RunConfig& cfg, std::int64_t stop, std::ostream& log,
                          const fs::path& dir, const std::string& stem, std::ostream& err) {
  const auto every = cfg.checkpoint_every;
  while (!trainer.done() && trainer.step() < stop) {
    const auto row = trainer.step_once();
    log << format_log_row(row) << '\n';
    if (every > 0 && row.step % every == 0) {
      const auto path = dir / (stem + "_step" + std::to_string(row.step) + ".ckpt");
      save_checkpoint(path, trainer.checkpoint());
      err << stem << ": step " << row.step << "/" << trainer.total_steps() << " loss " << row.total << '\n';
    }
  }
}

int cmd_pretrain(const Common& c, const std::string& resume, const std::optional<std::int64_t>& stop_after,
                 std::ostream& err) {
  const auto cfg = resolve(c);
  const auto dir = prepare_output(cfg, "pretrain");
  EusrPretrainer trainer(cfg, load_image_source(cfg.train_source, cfg.synth_size));
  if (!resume.empty()) trainer.resume(load_checkpoint(resume, cfg.digest()));
  auto log = open_log(dir / "pretrain_log.csv", !resume.empty(), kLogHeader);
  err << "pretrain: " << trainer.total_steps() << " steps from step " << trainer.step() << '\n';
  run_with_checkpoints(trainer, cfg, stop_point(stop_after, trainer.step()), log, dir, "pretrain", err);
  save_checkpoint(dir / "pretrain.ckpt", trainer.checkpoint());
  const auto& d = trainer.scale_draws();
  err << "pretrain: stopped at step " << trainer.step() << " (x2/x4/x8 draws " << d[0] << "/" << d[1] << "/" << d[2]
      << "), checkpoint " << (dir / "pretrain.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_train_predictor(const Common& c, const std::string& kind, std::ostream& err) {
  const auto cfg = resolve(c);
  const auto dir = prepare_output(cfg, "train-predictor-" + kind);
  const std::string& source = kind == "aesthetic" ? cfg.aesthetic_source : cfg.subjective_source;
  ScoredSynthOptions opts;
  opts.size = cfg.scored_size;
  const auto all = load_scored_source(source, opts);
  std::vector<ScoredImage> train, val;
  split_scored(all, cfg.predict.val_fraction, train, val);
  models::ScorePredictor<float> pred(cfg.predictor, derive_seed(cfg.seed, "init.predictor." + kind));
  const PredictorStage s1{cfg.predictor_epochs(kind, 1), cfg.predict.stage1_batch, cfg.predict.stage1_lr};
  const PredictorStage s2{cfg.predictor_epochs(kind, 2), cfg.predict.stage2_batch, cfg.predict.stage2_lr};
  Rng shuffle(derive_seed(cfg.seed, "predictor.shuffle." + kind));
  std::ofstream log(dir / (kind + "_log.csv"));
  err << "train-predictor " << kind << ": " << train.size() << " train / " << val.size() << " validation, "
      << s1.epochs << "+" << s2.epochs << " epochs\n";
  const auto report = train_predictor(pred, train, val, s1, s2, cfg.predict.eps, shuffle, &log);
  if (!report.backbone_unchanged_in_stage1) throw std::logic_error("backbone changed while frozen");

  Checkpoint ckpt;
  ckpt.config_digest = cfg.digest();
  ckpt.step = report.steps;
  ckpt.meta["phase"] = "predictor";
  ckpt.meta["kind"] = kind;
  ckpt.meta["val_emd"] = metrics::format_metric(report.after.emd);
  ckpt.meta["val_srocc"] = metrics::format_metric(report.after.srocc);
  store_parameters(ckpt, "pred/", pred.parameters());
  save_checkpoint(dir / (kind + ".ckpt"), ckpt);
  err << "train-predictor " << kind << ": validation EMD " << report.before.emd << " -> " << report.after.emd
      << ", SROCC " << report.before.srocc << " -> " << report.after.srocc << '\n';
  return kExitOk;
}

ConfigMap perceptual_overrides(const std::string& pretrained, const std::string& aesthetic,
                               const std::string& subjective, const std::string& weights) {
  ConfigMap m;
  if (!pretrained.empty()) m["perceptual.pretrained"] = pretrained;
  if (!aesthetic.empty()) m["perceptual.aesthetic"] = aesthetic;
  if (!subjective.empty()) m["perceptual.subjective"] = subjective;
  if (!weights.empty()) m["perceptual.weights"] = weights;
  return m;
}

int cmd_train_perceptual(const Common& c, const ConfigMap& extra, const std::string& resume,
                         const std::optional<std::int64_t>& stop_after, std::ostream& err) {
  const auto cfg = resolve(c, extra);
  const auto dir = prepare_output(cfg, "train-perceptual");
  auto gen = load_generator(cfg, cfg.perceptual.pretrained, true);
  const auto aesthetic = load_predictor(cfg, cfg.perceptual.aesthetic, "aesthetic");
  const auto subjective = load_predictor(cfg, cfg.perceptual.subjective, "subjective");
  PerceptualTrainer trainer(cfg, std::move(gen), load_image_source(cfg.train_source, cfg.synth_size), &aesthetic,
                            &subjective, cfg.weights(), cfg.perceptual.multipass);
  if (!resume.empty()) trainer.resume(load_checkpoint(resume, cfg.digest()));
  auto log = open_log(dir / "perceptual_log.csv", !resume.empty(), kLogHeader);
  err << "train-perceptual: weights " << cfg.weights().to_string() << ", " << trainer.total_steps() << " steps\n";
  run_with_checkpoints(trainer, cfg, stop_point(stop_after, trainer.step()), log, dir, "perceptual", err);
  save_checkpoint(dir / "perceptual.ckpt", trainer.checkpoint());
  err << "train-perceptual: stopped at step " << trainer.step() << ", checkpoint "
      << (dir / "perceptual.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_upscale(const Common& c, const std::string& input, const std::string& path, const std::string& checkpoint,
                const std::string& output, std::ostream& err) {
  const auto cfg = resolve(c);
  const auto gen = load_generator(cfg, checkpoint, false);
  const auto image = load_image(input);
  ImageRGB result;
  {
    NoGradGuard guard;
    result = tensor_to_image(models::upscale_x4_path(gen, image_to_tensor<float>(image), path));
  }
  fs::path target;
  if (!output.empty()) {
    target = output;
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
  } else {
    const auto dir = prepare_output(cfg, "upscale");
    target = dir / (fs::path(input).stem().string() + "_" + path + ".png");
  }
  save_image(result, target);
  err << "upscale: " << image.height() << "x" << image.width() << " -> " << result.height() << "x"
      << result.width() << " via " << path << ", wrote " << target.string() << '\n';
  return kExitOk;
}

int cmd_evaluate(const Common& c, const std::string& gt, const std::string& sr, const std::string& scores_file,
                 const std::string& pristine_file, const std::string& report_file, std::ostream& err) {
  const auto cfg = resolve(c);
  std::optional<metrics::PristineModel> pristine;
  if (!pristine_file.empty()) pristine = metrics::PristineModel::load(pristine_file);
  std::optional<std::map<std::string, double>> scores;
  if (!scores_file.empty()) scores = metrics::read_sr_scores(scores_file);
  const auto report =
      metrics::quality_report(gt, sr, pristine ? &*pristine : nullptr, scores ? &*scores : nullptr);
  fs::path target = report_file;
  if (target.empty()) target = prepare_output(cfg, "evaluate") / "report.csv";
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  report.write_csv(target);
  for (const auto& name : report.unmatched) err << "evaluate: unmatched file " << name << '\n';
  for (const auto& w : report.warnings) err << "evaluate: warning: " << w << '\n';
  err << "evaluate: " << report.records.size() << " images, mean PSNR " << metrics::format_metric(report.mean.psnr_db)
      << " dB, SSIM " << report.mean.ssim << ", wrote " << target.string() << '\n';
  return kExitOk;
}

int cmd_fit_pristine(const Common& c, const std::string& images, int patch, double threshold,
                     const std::string& output, std::ostream& err) {
  const auto cfg = resolve(c);
  const auto corpus = load_image_source(images.empty() ? cfg.train_source : images, cfg.synth_size);
  const auto model = metrics::fit_pristine(corpus, patch, threshold);
  fs::path target = output;
  if (target.empty()) target = prepare_output(cfg, "fit-pristine") / "pristine.txt";
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  model.save(target);
  if (model.used_fallback) err << "fit-pristine: warning: no patch passed the sharpness threshold; used all patches\n";
  err << "fit-pristine: " << corpus.size() << " images, patch " << patch << ", wrote " << target.string() << '\n';
  return kExitOk;
}

int cmd_ablate(const Common& c, const ConfigMap& extra, const std::string& grid_name, const std::string& pristine_file,
               std::ostream& err) {
  const auto cfg = resolve(c, extra);
  const auto grid = ablation_grid(grid_name, cfg.weights());
  const auto dir = prepare_output(cfg, "ablate-" + grid_name);
  const auto gen = load_generator(cfg, cfg.perceptual.pretrained, true);
  const auto aesthetic = load_predictor(cfg, cfg.perceptual.aesthetic, "aesthetic");
  const auto subjective = load_predictor(cfg, cfg.perceptual.subjective, "subjective");
  std::optional<metrics::PristineModel> pristine;
  if (!pristine_file.empty()) pristine = metrics::PristineModel::load(pristine_file);
  const auto train = load_image_source(cfg.train_source, cfg.synth_size);
  const auto eval = load_image_source(cfg.eval_source, cfg.synth_size);
  const auto rows = run_ablation(grid, cfg, gen, train, eval, &aesthetic, &subjective,
                                 pristine ? &*pristine : nullptr, &err);
  const auto target = dir / ("ablation_" + grid_name + ".csv");
  std::ofstream out(target);
  if (!out) throw std::runtime_error("cannot write '" + target.string() + "'");
  out << ablation_csv(rows);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok ? 0 : 1;
  err << "ablate: " << rows.size() << " cells (" << failed << " failed), wrote " << target.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& err) {
  CLI::App app{"Perceptual super-resolution training and evaluation", "fpsr"};
  app.require_subcommand(1);

  Common common;
  std::string resume;
  std::optional<std::int64_t> stop_after;
  std::string kind, input, path, checkpoint, output, gt, sr, scores, pristine, report, images, grid;
  std::string pretrained, aesthetic, subjective, weights;
  int patch = 96;
  double threshold = 0.75;

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain the generator with the L1 loss");
  add_common(pretrain, common);
  pretrain->add_option("--resume", resume, "Checkpoint to continue from");
  pretrain->add_option("--stop-after", stop_after, "Stop after this many steps in this invocation");

  auto* train_pred = app.add_subcommand("train-predictor", "Train an aesthetic or subjective score predictor");
  add_common(train_pred, common);
  train_pred->add_option("--kind", kind, "aesthetic or subjective")
      ->required()
      ->check(CLI::IsMember({"aesthetic", "subjective"}));

  auto* perceptual = app.add_subcommand("train-perceptual", "Fine-tune the generator with the perceptual losses");
  add_common(perceptual, common);
  perceptual->add_option("--pretrained", pretrained, "Pretrained generator checkpoint");
  perceptual->add_option("--aesthetic", aesthetic, "Aesthetic predictor checkpoint");
  perceptual->add_option("--subjective", subjective, "Subjective predictor checkpoint");
  perceptual->add_option("--weights", weights, "eq8, eq10:ar=<a>:ap=<p>, or six comma-separated reals");
  perceptual->add_option("--resume", resume, "Checkpoint to continue from");
  perceptual->add_option("--stop-after", stop_after, "Stop after this many steps in this invocation");

  auto* upscale = app.add_subcommand("upscale", "Upscale one image by 4 through a chosen path");
  add_common(upscale, common);
  upscale->add_option("--in", input, "Input PNG")->required();
  upscale->add_option("--path", path, "x4, x2x2 or x8down")->required()->check(CLI::IsMember({"x4", "x2x2", "x8down"}));
  upscale->add_option("--checkpoint", checkpoint, "Generator checkpoint")->required();
  upscale->add_option("--output", output, "Output PNG (default: <out>/<name>_<path>.png)");

  auto* evaluate = app.add_subcommand("evaluate", "Compute PSNR, SSIM, NIQE and PI for matched images");
  add_common(evaluate, common);
  evaluate->add_option("--gt", gt, "Ground-truth directory")->required();
  evaluate->add_option("--sr", sr, "Upscaled directory")->required();
  evaluate->add_option("--sr-scores", scores, "name,score file");
  evaluate->add_option("--pristine", pristine, "Pristine model from fit-pristine");
  evaluate->add_option("--report", report, "Report path (default: <out>/report.csv)");

  auto* fit = app.add_subcommand("fit-pristine", "Fit the NIQE pristine model on a corpus");
  add_common(fit, common);
  fit->add_option("--images", images, "Directory, manifest or synthetic:<seed>:<count> (default: data.train_source)");
  fit->add_option("--patch", patch, "Patch size")->check(CLI::Range(8, 4096));
  fit->add_option("--threshold", threshold, "Sharpness threshold")->check(CLI::Range(0.0, 1.0));
  fit->add_option("--output", output, "Model path (default: <out>/pristine.txt)");

  auto* ablate = app.add_subcommand("ablate", "Run a grid of perceptual-phase variants");
  add_common(ablate, common);
  ablate->add_option("--grid", grid, "eq10, losses or multipass")->required();
  ablate->add_option("--pretrained", pretrained, "Pretrained generator checkpoint");
  ablate->add_option("--aesthetic", aesthetic, "Aesthetic predictor checkpoint");
  ablate->add_option("--subjective", subjective, "Subjective predictor checkpoint");
  ablate->add_option("--weights", weights, "Base weights for the losses and multipass grids");
  ablate->add_option("--pristine", pristine, "Pristine model for the NIQE column");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out, diag;
    const int code = app.exit(e, out, diag);
    err << out.str() << diag.str();
    if (code == 0) return kExitOk;
    if (diag.str().find("Usage") == std::string::npos) err << app.help();
    return kExitConfig;
  }

  try {
    const auto extra = perceptual_overrides(pretrained, aesthetic, subjective, weights);
    if (pretrain->parsed()) return cmd_pretrain(common, resume, stop_after, err);
    if (train_pred->parsed()) return cmd_train_predictor(common, kind, err);
    if (perceptual->parsed()) return cmd_train_perceptual(common, extra, resume, stop_after, err);
    if (upscale->parsed()) return cmd_upscale(common, input, path, checkpoint, output, err);
    if (evaluate->parsed()) return cmd_evaluate(common, gt, sr, scores, pristine, report, err);
    if (fit->parsed()) return cmd_fit_pristine(common, images, patch, threshold, output, err);
    if (ablate->parsed()) return cmd_ablate(common, extra, grid, pristine, err);
  } catch (const ConfigError& e) {
    err << "fpsr: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "fpsr: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace fpsr::cli
