#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace dans;
using namespace dans::testing;

namespace {

KnowledgeGraph tiny_graph() {
  std::vector<Triple> train = {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}, {3, 0, 4}, {4, 0, 5},
                               {5, 1, 6}, {6, 1, 7}, {7, 1, 0}, {0, 1, 2}, {2, 1, 4}};
  return make_graph(8, 2, train, {{1, 1, 3}, {4, 0, 6}}, {{6, 0, 7}});
}

TrainConfig tiny_config(int epochs) {
  TrainConfig c;
  c.seed = 11;
  c.dim = 8;
  c.pretrain.dim = 8;
  c.pretrain.epochs = 5;
  c.pretrain.batch_size = 8;
  c.pretrain.negatives = 2;
  c.types_k = 2;
  c.dam.hidden = 4;
  c.dam.steps = 20;
  c.schedule.T = 20;
  c.denoiser_hidden = 16;
  c.time_dim = 8;
  c.batch_size = 4;
  c.n_rand = 2;
  c.epochs = epochs;
  c.eval_every = 1;
  c.checkpoint_every = 1;
  c.patience = 0;
  c.quiet = true;
  return c;
}

struct TrainRun {
  TrainResult result;
  Model model;
};

TrainRun train(const KnowledgeGraph& kg, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  std::ostringstream log;
  TrainRun r{{}, prepare_model(kg, cfg, log)};
  Trainer trainer(kg, r.model, cfg);
  r.result = trainer.run(hooks, log);
  return r;
}

}  // namespace

TEST(Trainer, SingleEpochSmokeRun) {
  KnowledgeGraph kg = tiny_graph();
  auto dir = scratch_dir("trainer_smoke");
  TrainHooks hooks;
  hooks.output_dir = dir;
  TrainRun r = train(kg, tiny_config(1), hooks);
  ASSERT_EQ(r.result.epochs.size(), 1u);
  EXPECT_EQ(r.result.epochs[0].epoch, 1);
  EXPECT_TRUE(std::isfinite(r.result.epochs[0].total));
  std::ostringstream csv;
  write_epoch_csv(r.result.epochs, csv);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);

  Model loaded = Model::from_checkpoint(load_checkpoint(dir / "final.ckpt"));
  EXPECT_TRUE(loaded.scorer.entities.value == r.model.scorer.entities.value);
  EXPECT_TRUE(loaded.scorer.relations.value == r.model.scorer.relations.value);
  EXPECT_EQ(loaded.zeta, r.model.zeta);
  EXPECT_TRUE(loaded.types.centroids == r.model.types.centroids);
  ASSERT_TRUE(loaded.has_denoiser());
  Rng rng(1);
  Matrix x = random_matrix(3, 8, rng), type = random_matrix(3, 8, rng), cond = random_matrix(3, 8, rng);
  std::vector<int> ts = {1, 7, 20};
  EXPECT_TRUE(loaded.denoiser.predict_noise(x, ts, type, cond) == r.model.denoiser.predict_noise(x, ts, type, cond));
}

TEST(Trainer, FixedSeedReproducesValidMrr) {
  KnowledgeGraph kg = tiny_graph();
  TrainConfig cfg = tiny_config(4);
  TrainRun a = train(kg, cfg), b = train(kg, cfg);
  ASSERT_FALSE(a.result.valid.empty());
  EXPECT_EQ(a.result.valid.back().metrics.mrr, b.result.valid.back().metrics.mrr);
  EXPECT_TRUE(a.model.scorer.entities.value == b.model.scorer.entities.value);
  EXPECT_EQ(a.result.epochs.back().total, b.result.epochs.back().total);
}

TEST(Trainer, StaticMixAblationKeepsUniformWeightsAndBaseMargin) {
  KnowledgeGraph kg = tiny_graph();
  TrainConfig cfg = ablation_variant(tiny_config(5), Ablation::kDtmOff);
  TrainRun r = train(kg, cfg);
  ASSERT_EQ(r.result.epochs.size(), 5u);
  for (const auto& row : r.result.epochs)
    for (int k = 0; k < kNumBands; ++k) {
      EXPECT_DOUBLE_EQ(row.weights[k], 0.25);
      EXPECT_DOUBLE_EQ(row.margins[k], cfg.curriculum.gamma_base);
    }
}

TEST(Trainer, CurriculumAdvancesInFullRun) {
  KnowledgeGraph kg = tiny_graph();
  TrainConfig cfg = tiny_config(4);
  TrainRun r = train(kg, cfg);
  ASSERT_EQ(r.result.epochs.size(), 4u);
  CurriculumConfig cc = cfg.curriculum;
  cc.max_epochs = 4;
  for (const auto& row : r.result.epochs) {
    auto expected = CurriculumState::at(row.epoch, cc);
    EXPECT_DOUBLE_EQ(row.tau, expected.tau);
    for (int k = 0; k < kNumBands; ++k) EXPECT_DOUBLE_EQ(row.weights[k], expected.weights[k]);
  }
  EXPECT_GT(r.result.epochs.back().weights[0], r.result.epochs.front().weights[0]);
}

TEST(Trainer, DifficultyAndTypesStayFrozen) {
  KnowledgeGraph kg = tiny_graph();
  TrainConfig cfg = tiny_config(3);
  std::ostringstream log;
  Model m = prepare_model(kg, cfg, log);
  const Model before = m;
  Trainer trainer(kg, m, cfg);
  for (int i = 0; i < 3; ++i) trainer.run_epoch();
  EXPECT_EQ(m.zeta, before.zeta);
  EXPECT_TRUE(m.types.centroids == before.types.centroids);
  auto pa = m.dam.parameters();
  auto pb = const_cast<Model&>(before).dam.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(pa[i]->value == pb[i]->value);
  EXPECT_FALSE(m.scorer.entities.value == before.scorer.entities.value);
}

TEST(Trainer, AblationVariantsChangeOneSwitch) {
  TrainConfig base = tiny_config(1);
  EXPECT_FALSE(ablation_variant(base, Ablation::kDfsOff).ans_options().difficulty_aware);
  EXPECT_TRUE(ablation_variant(base, Ablation::kNone).ans_options().difficulty_aware);
  EXPECT_FALSE(ablation_variant(base, Ablation::kCcdOff).denoiser_config().conditional);
  EXPECT_TRUE(ablation_variant(base, Ablation::kDfsOff).denoiser_config().conditional);
  EXPECT_TRUE(ablation_variant(base, Ablation::kUniform).uniform_only);
  EXPECT_THROW(parse_ablation("everything"), ConfigError);
}

TEST(Trainer, UniformBaselineSkipsBands) {
  KnowledgeGraph kg = tiny_graph();
  TrainConfig cfg = ablation_variant(tiny_config(2), Ablation::kUniform);
  std::ostringstream log;
  Model m = prepare_base(kg, cfg, log);
  Trainer trainer(kg, m, cfg);
  EpochLog row = trainer.run_epoch();
  EXPECT_FALSE(m.has_denoiser());
  EXPECT_EQ(row.l_diff, 0.0);
  EXPECT_EQ(row.l_kgc1, 0.0);
  for (const auto& band : trainer.band_cache()) EXPECT_EQ(band.size(), 0);
}

TEST(Trainer, RequiresFittedDifficultyModel) {
  KnowledgeGraph kg = tiny_graph();
  Model empty;
  EXPECT_THROW(Trainer(kg, empty, tiny_config(1)), ConfigError);
}

TEST(Trainer, NumericalFailureRestoresAndHalvesRate) {
  KnowledgeGraph kg = tiny_graph();
  TrainConfig cfg = tiny_config(3);
  std::ostringstream log;
  Model m = prepare_model(kg, cfg, log);
  Trainer trainer(kg, m, cfg);
  bool injected = false;
  TrainHooks hooks;
  hooks.before_epoch = [&](int epoch, Model& model) {
    if (epoch == 2 && !injected) {
      injected = true;
      model.scorer.entities.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
    }
  };
  TrainResult res = trainer.run(hooks, log);
  EXPECT_EQ(res.restarts, 1);
  EXPECT_EQ(res.epochs.size(), 3u);
  EXPECT_DOUBLE_EQ(trainer.learning_rate(), 0.5 * cfg.lr);
  EXPECT_TRUE(m.scorer.entities.value.allFinite());
  EXPECT_NE(log.str().find("halved lr"), std::string::npos);
}

TEST(Trainer, RepeatedFailureAborts) {
  KnowledgeGraph kg = tiny_graph();
  TrainConfig cfg = tiny_config(3);
  cfg.max_restarts = 2;
  std::ostringstream log;
  Model m = prepare_model(kg, cfg, log);
  Trainer trainer(kg, m, cfg);
  TrainHooks hooks;
  hooks.before_epoch = [](int, Model& model) {
    model.scorer.entities.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  };
  EXPECT_THROW(trainer.run(hooks, log), NumericalError);
}

TEST(Trainer, EarlyStopAndBestRestore) {
  KnowledgeGraph kg = tiny_graph();
  TrainConfig cfg = tiny_config(30);
  cfg.patience = 2;
  TrainRun r = train(kg, cfg);
  if (r.result.early_stopped) {
    EXPECT_EQ(r.result.epochs.back().epoch, r.result.best_epoch + cfg.patience);
  }
  EXPECT_EQ(evaluate(kg, kg.valid, r.model.scorer).metrics.mrr, r.result.best_valid_mrr);
}
