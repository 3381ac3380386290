#include <gtest/gtest.h>

#include <sstream>

#include "fpsr/training.hpp"

using namespace fpsr;

namespace {

RunConfig tiny_config() {
  auto c = RunConfig::desk();
  c.scale_factor = 1;
  c.eusr = {4, 1, 1, 1.0};
  c.disc = {4, 32, 16, 0.2};
  c.predictor = {4, 8, 16};
  c.synth_size = 64;
  c.pretrain.batch = 1;
  c.pretrain.lr_patch = 8;
  c.pretrain.steps = 20;
  c.pretrain.halving = 0;
  c.perceptual.steps = 3;
  c.perceptual.patches = 2;
  return c;
}

models::ScorePredictor<float> frozen_predictor(const RunConfig& c, std::uint64_t seed) {
  models::ScorePredictor<float> p(c.predictor, seed);
  p.set_trainable(false);
  return p;
}

bool same_values(const models::ParamList<float>& a, const models::ParamList<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i].tensor.data(), y = b[i].tensor.data();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

std::vector<std::vector<float>> snapshot(const models::ParamList<float>& ps) {
  std::vector<std::vector<float>> out;
  for (const auto& p : ps) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

}  // namespace

TEST(Pretrainer, ScalePathsAreDrawnUniformly) {
  auto c = tiny_config();
  c.pretrain.steps = 3000;
  EusrPretrainer trainer(c, synth_sr_dataset(5, 2, 64));
  trainer.run(3000);
  EXPECT_TRUE(trainer.done());
  for (auto n : trainer.scale_draws()) {
    EXPECT_GT(n, 1000 - 90);
    EXPECT_LT(n, 1000 + 90);
  }
}

TEST(Pretrainer, ShortRunLowersProbeLoss) {
  auto c = tiny_config();
  c.pretrain.steps = 150;
  c.pretrain.batch = 4;
  const auto images = synth_sr_dataset(8, 4, 64);
  Rng r(3);
  std::vector<PatchPair> pairs;
  for (int i = 0; i < 8; ++i) pairs.push_back(random_crop_pair(images[i % 4], 2, 8, r));
  const auto probe = stack_pairs(pairs);
  EusrPretrainer trainer(c, images);
  const double before = probe_l1(trainer.model(), probe, 2);
  trainer.run(150);
  EXPECT_LT(probe_l1(trainer.model(), probe, 2), before);
}

TEST(Pretrainer, SameSeedSameParameters) {
  const auto c = tiny_config();
  const auto images = synth_sr_dataset(9, 2, 64);
  EusrPretrainer a(c, images), b(c, images);
  a.run(10);
  b.run(10);
  EXPECT_TRUE(same_values(a.model().parameters(), b.model().parameters()));
  auto other = c;
  other.seed = 2;
  EusrPretrainer d(other, images);
  d.run(10);
  EXPECT_FALSE(same_values(a.model().parameters(), d.model().parameters()));
}

TEST(Pretrainer, LogRowsAndCompletion) {
  const auto c = tiny_config();
  EusrPretrainer trainer(c, synth_sr_dataset(1, 1, 64));
  std::ostringstream log;
  trainer.run(3, &log);
  EXPECT_EQ(trainer.step(), 3);
  std::istringstream lines(log.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9);
    EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(n));
  }
  EXPECT_EQ(n, 3);
  trainer.run(1000);
  EXPECT_EQ(trainer.step(), 20);
  EXPECT_THROW(trainer.step_once(), std::logic_error);
}

TEST(Pretrainer, RejectsSmallImages) {
  const auto c = tiny_config();
  EXPECT_THROW(EusrPretrainer(c, synth_sr_dataset(1, 1, 48)), std::invalid_argument);
  EXPECT_THROW(EusrPretrainer(c, {}), std::invalid_argument);
}

TEST(Training, FormatLogRow) {
  StepLog row;
  row.step = 7;
  row.parts = {0.5, 0.25, 0, 0, 0, 0};
  row.total = 0.75;
  row.d_loss = 1.5;
  row.lr = 1e-4;
  EXPECT_EQ(format_log_row(row), "7,0.5,0.25,0,0,0,0,0.75,1.5,0.0001");
}

TEST(Training, Spearman) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {5, 6, 7, 8, 7}), 0.8207826816681233, 1e-12);
  EXPECT_THROW(spearman({1, 2}, {1}), std::invalid_argument);
}

TEST(Training, SplitScored) {
  const auto all = synth_scored_dataset(4, 12, {16, 2.0, 0.08, 1.0});
  std::vector<ScoredImage> train, val;
  split_scored(all, 1.0 / 6.0, train, val);
  EXPECT_EQ(train.size(), 10u);
  EXPECT_EQ(val.size(), 2u);
  EXPECT_EQ(val[0].label_mean, all[10].label_mean);
  EXPECT_THROW(split_scored(all, 0.0, train, val), std::invalid_argument);
  EXPECT_THROW(split_scored({all[0]}, 0.5, train, val), std::invalid_argument);
}

TEST(PredictorTraining, FirstStageKeepsBackboneAndReturnsFrozen) {
  const auto c = tiny_config();
  const auto data = synth_scored_dataset(6, 24, {16, 2.0, 0.08, 1.0});
  std::vector<ScoredImage> train, val;
  split_scored(data, 0.25, train, val);
  models::ScorePredictor<float> p(c.predictor, 10);
  const auto backbone_before = snapshot(p.backbone_parameters());
  const auto head_before = snapshot(p.head_parameters());
  Rng shuffle(1);
  const auto report = train_predictor(p, train, val, {1, 6, 1e-2}, {1, 6, 1e-3}, 1e-7, shuffle);
  EXPECT_TRUE(report.backbone_unchanged_in_stage1);
  EXPECT_TRUE(p.is_frozen());
  EXPECT_NE(snapshot(p.backbone_parameters()), backbone_before);
  EXPECT_NE(snapshot(p.head_parameters()), head_before);
  EXPECT_EQ(report.steps, 6);

  models::ScorePredictor<float> q(c.predictor, 10);
  EXPECT_THROW(train_predictor(q, train, {}, {1, 6, 1e-2}, {1, 6, 1e-3}, 1e-7, shuffle), std::invalid_argument);
}

class PerceptualTest : public ::testing::Test {
 protected:
  RunConfig config = tiny_config();
  std::vector<ImageRGB> images = synth_sr_dataset(3, 2, 32);
  models::ScorePredictor<float> aesthetic = frozen_predictor(config, 21);
  models::ScorePredictor<float> subjective = frozen_predictor(config, 22);

  models::Eusr<float> generator() const { return models::Eusr<float>(config.eusr, 5); }
};

TEST_F(PerceptualTest, UpdateOrderAndBatchSizes) {
  PerceptualTrainer t(config, generator(), images, &aesthetic, &subjective, losses::LossWeights::eq8(), true);
  t.step_once();
  EXPECT_EQ(t.update_trace(), "DG");
  EXPECT_EQ(t.last_real_batch(), 2);
  EXPECT_EQ(t.last_fake_batch(), 6);
  EXPECT_GT(t.last_d_min(), 0.0);
  EXPECT_LT(t.last_d_max(), 1.0);
  t.run(100);
  EXPECT_EQ(t.update_trace(), "DGDGDG");
  EXPECT_EQ(t.disc_updates(), 3);
  EXPECT_EQ(t.gen_updates(), 3);
}

TEST_F(PerceptualTest, MultipassForwardCounts) {
  PerceptualTrainer on(config, generator(), images, &aesthetic, &subjective, losses::LossWeights::eq8(), true);
  on.generator().reset_forward_count();
  on.step_once();
  EXPECT_EQ(on.generator().forward_count(), 4u);
  PerceptualTrainer off(config, generator(), images, &aesthetic, &subjective, losses::LossWeights::eq8(), false);
  off.generator().reset_forward_count();
  off.step_once();
  EXPECT_EQ(off.generator().forward_count(), 1u);
  EXPECT_EQ(off.last_fake_batch(), 2);
}

TEST_F(PerceptualTest, ZeroPerceptualGateSkipsPredictors) {
  aesthetic.reset_forward_count();
  subjective.reset_forward_count();
  PerceptualTrainer t(config, generator(), images, &aesthetic, &subjective, losses::LossWeights::eq10(0.05, 0.0), true);
  t.run(2);
  EXPECT_EQ(aesthetic.forward_count(), 0u);
  EXPECT_EQ(subjective.forward_count(), 0u);
  EXPECT_NO_THROW(PerceptualTrainer(config, generator(), images, nullptr, nullptr,
                                    losses::LossWeights::eq10(0.05, 0.0), true));
}

TEST_F(PerceptualTest, PredictorsStayUntouched) {
  const auto a_before = snapshot(aesthetic.parameters());
  PerceptualTrainer t(config, generator(), images, &aesthetic, &subjective, losses::LossWeights::eq8(), true);
  t.run(2);
  EXPECT_EQ(snapshot(aesthetic.parameters()), a_before);
  EXPECT_GT(aesthetic.forward_count(), 0u);
}

TEST_F(PerceptualTest, GuardsOnPredictors) {
  models::ScorePredictor<float> open(config.predictor, 30);
  EXPECT_THROW(PerceptualTrainer(config, generator(), images, &open, &subjective, losses::LossWeights::eq8(), true),
               std::logic_error);
  EXPECT_THROW(PerceptualTrainer(config, generator(), images, nullptr, &subjective, losses::LossWeights::eq8(), true),
               std::invalid_argument);
  EXPECT_THROW(PerceptualTrainer(config, generator(), synth_sr_dataset(1, 1, 24), &aesthetic, &subjective,
                                 losses::LossWeights::eq8(), true),
               std::invalid_argument);
}

TEST(Ablation, GridSizes) {
  const auto base = losses::LossWeights::eq8();
  const auto eq10 = ablation_grid("eq10", base);
  ASSERT_EQ(eq10.size(), 6u);
  EXPECT_EQ(eq10[0].weights.w_as, 0.0);
  EXPECT_EQ(eq10[5].weights.w_r, 0.005);
  const auto drops = ablation_grid("losses", base);
  ASSERT_EQ(drops.size(), 5u);
  EXPECT_EQ(drops[1].weights.w_r, 0.0);
  EXPECT_EQ(drops[3].weights.w_as, 0.0);
  EXPECT_EQ(drops[3].weights.w_ar, 0.0);
  EXPECT_EQ(drops[3].weights.w_ss, base.w_ss);
  const auto mp = ablation_grid("multipass", base);
  ASSERT_EQ(mp.size(), 2u);
  EXPECT_TRUE(mp[0].multipass);
  EXPECT_FALSE(mp[1].multipass);
  EXPECT_THROW(ablation_grid("other", base), ConfigError);
}
