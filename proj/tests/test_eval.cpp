#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "support.hpp"

using namespace dans;
using namespace dans::testing;

namespace {

KnowledgeGraph toy() {
  return make_graph(6, 2, {{0, 0, 1}, {0, 0, 2}, {1, 1, 3}, {2, 0, 4}, {4, 1, 5}, {3, 0, 0}},
                    {{5, 0, 1}}, {{0, 0, 3}, {2, 1, 5}, {4, 0, 0}});
}

}  // namespace

TEST(Rank, TrivialCases) {
  KnowledgeGraph kg = toy();
  TranslationalScorer s;
  s.norm = 1;
  s.entities.value = Matrix::Zero(6, 2);
  s.relations.value = Matrix::Zero(kg.num_relations, 2);
  // Everything tied: (|C| + 1) / 2 with |C| the filtered candidates.
  const int candidates = static_cast<int>(kg.num_entities - kg.tails.answers(0, 0).size() + 1);
  EXPECT_DOUBLE_EQ(filtered_rank(kg, s, 0, 0, 3), (candidates + 1) / 2.0);
  s.entities.value.setConstant(5.0);
  s.entities.value.row(3).setZero();
  s.relations.value.row(0).setConstant(-5.0);
  EXPECT_DOUBLE_EQ(filtered_rank(kg, s, 5, 0, 3), 1.0);
}

TEST(Rank, MatchesSortOracleOnToyGraph) {
  KnowledgeGraph kg = toy();
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    TranslationalScorer s(6, kg.num_relations, 3, 1 + trial % 2, rng);
    if (trial % 5 == 0) s.entities.value.row(2) = s.entities.value.row(4);  // force a tie
    for (const auto& t : kg.test) {
      EXPECT_DOUBLE_EQ(filtered_rank(kg, s, t.head, t.relation, t.tail),
                       sort_oracle(kg, s, t.head, t.relation, t.tail));
      const int inv = kg.inverse_of(t.relation);
      EXPECT_DOUBLE_EQ(filtered_rank(kg, s, t.tail, inv, t.head), sort_oracle(kg, s, t.tail, inv, t.head));
    }
  }
}

TEST(Metrics, Examples) {
  std::vector<double> ones = {1.0, 1.0, 1.0};
  Metrics a = metrics_from_ranks(ones);
  EXPECT_DOUBLE_EQ(a.mrr, 1.0);
  EXPECT_DOUBLE_EQ(a.hits1, 1.0);
  EXPECT_DOUBLE_EQ(a.hits10, 1.0);
  std::vector<double> two = {2.0};
  Metrics b = metrics_from_ranks(two);
  EXPECT_DOUBLE_EQ(b.mrr, 0.5);
  EXPECT_DOUBLE_EQ(b.hits1, 0.0);
  EXPECT_DOUBLE_EQ(b.hits10, 1.0);
  std::vector<double> tied = {1.5, 11.0};
  Metrics c = metrics_from_ranks(tied);
  EXPECT_DOUBLE_EQ(c.mrr, (1.0 / 1.5 + 1.0 / 11.0) / 2.0);
  EXPECT_DOUBLE_EQ(c.hits1, 0.0);
  EXPECT_DOUBLE_EQ(c.hits10, 0.5);
}

TEST(Evaluate, TwoQueriesPerTripleAndBounds) {
  KnowledgeGraph kg = toy();
  Rng rng(2);
  TranslationalScorer s(6, kg.num_relations, 4, 1, rng);
  EvalResult r = evaluate(kg, kg.test, s);
  ASSERT_EQ(r.ranks.size(), 2 * kg.test.size());
  EXPECT_GT(r.metrics.mrr, 0.0);
  EXPECT_LE(r.metrics.mrr, 1.0);
  EXPECT_LE(r.metrics.hits1, r.metrics.hits10);
  std::ostringstream csv;
  write_ranks_csv(r, csv);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(r.ranks.size() + 1));
  std::ostringstream flat;
  write_metrics(r.metrics, flat);
  EXPECT_NE(flat.str().find("mrr="), std::string::npos);
  EXPECT_NE(flat.str().find("hits10="), std::string::npos);
}

TEST(Evaluate, InvariantUnderSplitPermutation) {
  KnowledgeGraph kg = load_dataset(umls_dir(), true);
  Rng rng(3);
  TranslationalScorer s(kg.num_entities, kg.num_relations, 16, 1, rng);
  std::vector<Triple> shuffled = kg.test;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  Metrics a = evaluate(kg, kg.test, s).metrics, b = evaluate(kg, shuffled, s).metrics;
  EXPECT_NEAR(a.mrr, b.mrr, 1e-12);
  EXPECT_EQ(a.hits1, b.hits1);
  EXPECT_EQ(a.hits10, b.hits10);
}

TEST(Evaluate, RandomScorerIsWeak) {
  KnowledgeGraph kg = load_dataset(umls_dir(), true);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    TranslationalScorer s(kg.num_entities, kg.num_relations, 32, 1, rng);
    const double mrr = evaluate(kg, kg.test, s).metrics.mrr;
    EXPECT_LT(mrr, 0.1) << seed;
    total += mrr;
  }
  EXPECT_LT(total / 5.0, 0.05);
}

TEST(Hardness, ReportShapeAndDefinition) {
  Rng rng(4);
  TranslationalScorer s(10, 2, 3, 1, rng);
  std::vector<Triple> pos = {{0, 0, 1}, {2, 1, 3}, {4, 0, 5}};
  std::array<Matrix, kNumBands> bands;
  for (auto& b : bands) b = random_matrix(3, 3, rng);
  HardnessReport rep = hardness_report(pos, bands, s, 200);
  std::ostringstream csv;
  write_hardness_csv(rep, csv);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  const auto steps = band_timesteps(200);
  for (int k = 0; k < kNumBands; ++k) {
    EXPECT_EQ(rep.bands[k].band, k + 1);
    EXPECT_EQ(rep.bands[k].timestep, steps[k]);
    double l2 = 0.0, sc = 0.0;
    for (int i = 0; i < 3; ++i) {
      l2 += (bands[k].row(i) - s.entities.value.row(pos[i].tail)).norm();
      sc += (s.entities.value.row(pos[i].head) + s.relations.value.row(pos[i].relation) - bands[k].row(i))
                .lpNorm<1>();
    }
    EXPECT_NEAR(rep.bands[k].mean_l2, l2 / 3, 1e-12);
    EXPECT_NEAR(rep.bands[k].mean_score, sc / 3, 1e-12);
  }
}

TEST(Hardness, PermutationTestCalibration) {
  Rng rng(5);
  std::vector<double> a(200), b(200), shifted(200);
  for (int i = 0; i < 200; ++i) {
    a[i] = standard_normal(rng);
    b[i] = standard_normal(rng);
    shifted[i] = b[i] + 1.0;
  }
  EXPECT_LT(paired_permutation_pvalue(b, shifted, 2000, rng), 0.01);
  EXPECT_GT(paired_permutation_pvalue(shifted, b, 2000, rng), 0.5);
  EXPECT_GT(paired_permutation_pvalue(a, b, 2000, rng), 0.01);
}

TEST(Hardness, UntrainedDenoiserBandsAreIndistinguishable) {
  KnowledgeGraph kg = load_dataset(umls_dir(), true);
  Rng rng(6);
  TranslationalScorer s(kg.num_entities, kg.num_relations, 16, 1, rng);
  Matrix types = random_matrix(kg.num_entities, 16, rng);
  EmbeddingSpace sp{&s.entities.value, &s.relations.value, &types, embedding_scale(s.entities.value)};
  Denoiser den({16, 32, 16, true}, rng);
  std::vector<Triple> pos(kg.train.begin(), kg.train.begin() + 300);
  std::vector<std::uint64_t> ids(pos.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<double> zeta(kg.num_entities, 0.5);
  AnsOptions opt;
  opt.schedule.T = 200;
  auto bands = generate_band_matrices(den, pos, ids, sp, zeta, opt, 7, 0);
  HardnessReport rep = hardness_report(pos, bands, s, 200);
  EXPECT_GT(paired_permutation_pvalue(rep.l2[0], rep.l2[3], 2000, rng), 0.01);
}
