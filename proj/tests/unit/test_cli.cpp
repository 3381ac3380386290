#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "fpsr/checkpoint.hpp"
#include "fpsr/dataset.hpp"
#include "fpsr/image.hpp"

namespace fs = std::filesystem;
using fpsr::cli::kExitConfig;
using fpsr::cli::kExitOk;
using fpsr::cli::kExitRuntime;

namespace {

constexpr const char* kTinyConfig = R"([run]
scale_factor = 1

[model]
channels = 4
shared_blocks = 1
disc_width = 4
disc_input = 32
disc_hidden = 16
pred_stem = 4
pred_repr = 8

[data]
train_source = synthetic:1:2
synth_size = 64
aesthetic_source = synthetic:11:24
subjective_source = synthetic:12:24
scored_size = 16
eval_source = synthetic:21:2

[pretrain]
steps = 4
batch = 1
lr_patch = 8

[predictor]
stage1_epochs = 1
stage2_epochs = 1
stage1_batch = 8
stage2_batch = 8
val_fraction = 0.25

[perceptual]
steps = 2
)";

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "fpsr_cli_tests";
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.cfg") << kTinyConfig;
  }

  int run(std::vector<std::string> args) {
    log_.str("");
    return fpsr::cli::run(args, log_);
  }

  int run_tiny(std::vector<std::string> args, const std::string& out) {
    args.insert(args.end(), {"--config", (root_ / "tiny.cfg").string(), "--out", (root_ / out).string()});
    return run(std::move(args));
  }

  static fs::path root_;
  std::ostringstream log_;
};

fs::path CliTest::root_;

}  // namespace

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run({}), kExitConfig);
  EXPECT_EQ(run({"frobnicate"}), kExitConfig);
  EXPECT_EQ(run({"pretrain", "--no-such-flag"}), kExitConfig);
  EXPECT_EQ(run({"upscale", "--in", "a.png", "--path", "x3", "--checkpoint", "c"}), kExitConfig);
  EXPECT_EQ(run({"--help"}), kExitOk);
}

TEST_F(CliTest, ConfigErrorsExitWithTwo) {
  EXPECT_EQ(run_tiny({"pretrain", "--set", "model.channels=2"}, "bad1"), kExitConfig);
  EXPECT_EQ(run_tiny({"pretrain", "--set", "model.nonsense=1"}, "bad2"), kExitConfig);
  EXPECT_EQ(run({"pretrain", "--config", (root_ / "missing.cfg").string()}), kExitConfig);
  EXPECT_EQ(run_tiny({"train-perceptual", "--weights", "eq8"}, "bad3"), kExitConfig);
  EXPECT_NE(log_.str().find("configuration error"), std::string::npos);
}

TEST_F(CliTest, RuntimeFailuresExitWithThree) {
  EXPECT_EQ(run_tiny({"upscale", "--in", (root_ / "none.png").string(), "--path", "x4", "--checkpoint",
                      (root_ / "none.ckpt").string()},
                     "rt"),
            kExitRuntime);
  EXPECT_EQ(run_tiny({"evaluate", "--gt", (root_ / "no_gt").string(), "--sr", (root_ / "no_sr").string()}, "rt"),
            kExitRuntime);
}

TEST_F(CliTest, PipelineEndToEnd) {
  ASSERT_EQ(run_tiny({"pretrain"}, "pre"), kExitOk) << log_.str();
  const auto ckpt = root_ / "pre" / "pretrain.ckpt";
  ASSERT_TRUE(fs::exists(ckpt));
  EXPECT_EQ(lines_of(root_ / "pre" / "pretrain_log.csv").size(), 5u);

  // The resolved config next to the outputs reproduces the run.
  ASSERT_TRUE(fs::exists(root_ / "pre" / "pretrain.run.cfg"));
  ASSERT_EQ(run({"pretrain", "--config", (root_ / "pre" / "pretrain.run.cfg").string(), "--out",
                 (root_ / "pre_again").string()}),
            kExitOk)
      << log_.str();
  EXPECT_TRUE(fpsr::same_file_bytes(ckpt, root_ / "pre_again" / "pretrain.ckpt"));

  // Upscale a 48x48 image through two x2 passes.
  fs::create_directories(root_ / "gt");
  const auto image = fpsr::synth_sr_dataset(3, 1, 48)[0];
  fpsr::save_image(image, root_ / "gt" / "img.png");
  ASSERT_EQ(run_tiny({"upscale", "--in", (root_ / "gt" / "img.png").string(), "--path", "x2x2", "--checkpoint",
                      ckpt.string(), "--output", (root_ / "up" / "img.png").string()},
                     "up"),
            kExitOk)
      << log_.str();
  const auto up = fpsr::load_image(root_ / "up" / "img.png");
  EXPECT_EQ(up.height(), 192);
  EXPECT_EQ(up.width(), 192);

  // Identical directories evaluate to SSIM 1.
  ASSERT_EQ(run_tiny({"evaluate", "--gt", (root_ / "gt").string(), "--sr", (root_ / "gt").string(), "--report",
                      (root_ / "eval" / "report.csv").string()},
                     "eval"),
            kExitOk)
      << log_.str();
  const auto report = lines_of(root_ / "eval" / "report.csv");
  ASSERT_EQ(report.size(), 3u);
  EXPECT_EQ(report[0], "name,psnr_db,ssim,niqe,sr_score,pi");
  std::vector<std::string> fields;
  std::stringstream row(report[1]);
  for (std::string f; std::getline(row, f, ',');) fields.push_back(f);
  ASSERT_GE(fields.size(), 3u);
  EXPECT_EQ(fields[0], "img.png");
  EXPECT_DOUBLE_EQ(std::stod(fields[2]), 1.0);

  // Predictors, then the perceptual phase and an ablation grid.
  ASSERT_EQ(run_tiny({"train-predictor", "--kind", "aesthetic"}, "pred"), kExitOk) << log_.str();
  ASSERT_EQ(run_tiny({"train-predictor", "--kind", "subjective"}, "pred"), kExitOk) << log_.str();
  const auto a = (root_ / "pred" / "aesthetic.ckpt").string();
  const auto s = (root_ / "pred" / "subjective.ckpt").string();
  ASSERT_EQ(run_tiny({"train-perceptual", "--pretrained", ckpt.string(), "--aesthetic", a, "--subjective", s},
                     "perc"),
            kExitOk)
      << log_.str();
  EXPECT_EQ(lines_of(root_ / "perc" / "perceptual_log.csv").size(), 3u);
  // A predictor checkpoint is not a generator.
  EXPECT_EQ(run_tiny({"train-perceptual", "--pretrained", a, "--aesthetic", a, "--subjective", s}, "perc_bad"),
            kExitRuntime);

  ASSERT_EQ(run_tiny({"ablate", "--grid", "eq10", "--pretrained", ckpt.string(), "--aesthetic", a, "--subjective",
                      s},
                     "abl"),
            kExitOk)
      << log_.str();
  const auto rows = lines_of(root_ / "abl" / "ablation_eq10.csv");
  ASSERT_EQ(rows.size(), 7u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NE(rows[i].find(",ok,"), std::string::npos) << rows[i];
}

TEST_F(CliTest, ResumeMatchesUninterruptedRun) {
  ASSERT_EQ(run_tiny({"pretrain"}, "full"), kExitOk) << log_.str();
  ASSERT_EQ(run_tiny({"pretrain", "--stop-after", "2"}, "half"), kExitOk) << log_.str();
  ASSERT_EQ(run_tiny({"pretrain", "--resume", (root_ / "half" / "pretrain.ckpt").string()}, "half"), kExitOk)
      << log_.str();
  EXPECT_TRUE(fpsr::same_file_bytes(root_ / "full" / "pretrain.ckpt", root_ / "half" / "pretrain.ckpt"));
  EXPECT_EQ(lines_of(root_ / "full" / "pretrain_log.csv"), lines_of(root_ / "half" / "pretrain_log.csv"));
}
