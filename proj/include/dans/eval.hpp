#pragma once
// Filtered link-prediction metrics and band hardness diagnostics.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <span>
#include <vector>

#include "dans/curriculum.hpp"
#include "dans/dam.hpp"
#include "dans/diffusion.hpp"
#include "dans/kg_store.hpp"
#include "dans/pretrain.hpp"

namespace dans {

// Mean-tie rank of `answer` for the query (entity, relation, ?) among the
// filtered candidates, by ascending distance.
inline double filtered_rank(const KnowledgeGraph& kg, const TranslationalScorer& scorer, int entity, int relation,
                            int answer) {
  return filtered_rank_from_scores(scorer.score_all_tails(entity, relation), answer,
                                   kg.tails.answers(entity, relation));
}

struct Metrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits10 = 0.0;
  std::size_t queries = 0;
};

struct QueryRank {
  std::size_t triple_index;
  bool head_query;  // (?, r, t) answered through the inverse relation
  Triple triple;
  double rank;
};

struct EvalResult {
  Metrics metrics;
  std::vector<QueryRank> ranks;
};

inline Metrics metrics_from_ranks(std::span<const double> ranks) {
  Metrics m;
  m.queries = ranks.size();
  if (ranks.empty()) return m;
  for (double r : ranks) {
    m.mrr += 1.0 / r;
    m.hits1 += r <= 1.0 ? 1.0 : 0.0;
    m.hits10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n, m.hits1 /= n, m.hits10 /= n;
  return m;
}

// Two queries per triple: (h, r, ?) and (?, r, t), the latter as
// (t, r^-1, ?) when inverse relations are present.
inline EvalResult evaluate(const KnowledgeGraph& kg, std::span<const Triple> split, const TranslationalScorer& scorer) {
  EvalResult res;
  res.ranks.reserve(2 * split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    const Triple& t = split[i];
    res.ranks.push_back({i, false, t, filtered_rank(kg, scorer, t.head, t.relation, t.tail)});
    double head_rank;
    if (kg.has_inverses) {
      head_rank = filtered_rank(kg, scorer, t.tail, kg.inverse_of(t.relation), t.head);
    } else {
      Eigen::VectorXd scores(kg.num_entities);
      for (int e = 0; e < kg.num_entities; ++e) scores(e) = scorer.score(e, t.relation, t.tail);
      head_rank = filtered_rank_from_scores(scores, t.head, kg.heads.answers(t.tail, t.relation));
    }
    res.ranks.push_back({i, true, t, head_rank});
  }
  std::vector<double> r;
  r.reserve(res.ranks.size());
  for (const auto& q : res.ranks) r.push_back(q.rank);
  res.metrics = metrics_from_ranks(r);
  return res;
}

inline void write_metrics(const Metrics& m, std::ostream& out) {
  out << std::fixed << std::setprecision(10) << "mrr=" << m.mrr << "\nhits1=" << m.hits1 << "\nhits10=" << m.hits10
      << "\nqueries=" << m.queries << '\n';
  out.unsetf(std::ios::floatfield);
}

inline void write_ranks_csv(const EvalResult& r, std::ostream& out) {
  out << "query,head,relation,tail,direction,rank\n";
  for (std::size_t i = 0; i < r.ranks.size(); ++i) {
    const auto& q = r.ranks[i];
    out << i << ',' << q.triple.head << ',' << q.triple.relation << ',' << q.triple.tail << ','
        << (q.head_query ? "head" : "tail") << ',' << q.rank << '\n';
  }
}

struct BandHardness {
  int band;
  int timestep;
  double mean_score;  // mean S(h, r, x_hat)
  double mean_l2;     // mean ||x_hat - x_t||_2
};

struct HardnessReport {
  std::array<BandHardness, kNumBands> bands;
  // Per-positive L2 distances, [band][positive].
  std::array<std::vector<double>, kNumBands> l2;
};

inline HardnessReport hardness_report(std::span<const Triple> positives, const std::array<Matrix, kNumBands>& bands,
                                      const TranslationalScorer& scorer, int T) {
  HardnessReport rep;
  const auto steps = band_timesteps(T);
  for (int k = 0; k < kNumBands; ++k) {
    double s_sum = 0.0, l2_sum = 0.0;
    rep.l2[k].reserve(positives.size());
    for (std::size_t i = 0; i < positives.size(); ++i) {
      const Triple& p = positives[i];
      RowVector x = bands[k].row(static_cast<Index>(i));
      s_sum += scorer.score(p.head, p.relation, x);
      const double d = (x - scorer.entities.value.row(p.tail)).norm();
      l2_sum += d;
      rep.l2[k].push_back(d);
    }
    const double n = std::max<double>(1.0, static_cast<double>(positives.size()));
    rep.bands[k] = {k + 1, steps[k], s_sum / n, l2_sum / n};
  }
  return rep;
}

inline void write_hardness_csv(const HardnessReport& rep, std::ostream& out) {
  out << "band,timestep,mean_score,mean_l2\n" << std::setprecision(17);
  for (const auto& b : rep.bands) out << b.band << ',' << b.timestep << ',' << b.mean_score << ',' << b.mean_l2 << '\n';
}

// One-sided paired sign-flip permutation test of H1: mean(a - b) < 0.
// Returns (count + 1) / (permutations + 1).
inline double paired_permutation_pvalue(std::span<const double> a, std::span<const double> b, int permutations,
                                        Rng& rng) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("paired_permutation_pvalue: need equal non-empty samples");
  std::vector<double> diff(a.size());
  double observed = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) observed += (diff[i] = a[i] - b[i]);
  long extreme = 0;
  std::bernoulli_distribution coin(0.5);
  for (int p = 0; p < permutations; ++p) {
    double s = 0.0;
    for (double d : diff) s += coin(rng) ? d : -d;
    if (s <= observed) ++extreme;
  }
  return (static_cast<double>(extreme) + 1.0) / (permutations + 1.0);
}

}  // namespace dans
