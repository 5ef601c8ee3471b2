#pragma once
// Difficulty assessment: zeta(e) = sigmoid(W2 relu(W1 [e_sem; e_str] + b1) + b2).
//
// The network is supervised by a per-entity proxy target, the mean filtered
// rank percentile of the entity's train triples under the pretrained scorer.

#include <algorithm>
#include <array>
#include <iomanip>
#include <ostream>
#include <vector>

#include "dans/autodiff.hpp"
#include "dans/graph_metrics.hpp"
#include "dans/kg_store.hpp"
#include "dans/nn.hpp"
#include "dans/pretrain.hpp"

namespace dans {

// Rows are [semantic embedding; 6 normalized structural features].
inline Matrix difficulty_inputs(const Matrix& semantic, const std::vector<std::array<double, 6>>& structural) {
  if (static_cast<std::size_t>(semantic.rows()) != structural.size())
    throw ShapeError("difficulty_inputs: " + std::to_string(semantic.rows()) + " embeddings vs " +
                     std::to_string(structural.size()) + " feature rows");
  Matrix out(semantic.rows(), semantic.cols() + 6);
  out.leftCols(semantic.cols()) = semantic;
  for (Index i = 0; i < semantic.rows(); ++i)
    for (Index f = 0; f < 6; ++f) out(i, semantic.cols() + f) = structural[i][f];
  return out;
}

struct DamModel {
  Mlp mlp;  // (d + 6) -> hidden -> 1

  DamModel() = default;
  DamModel(Index input_dim, Index hidden, Rng& rng) : mlp({input_dim, hidden, 1}, rng) {}

  Var forward(Tape& tape, Var inputs) { return tape.sigmoid(mlp.forward(tape, inputs)); }

  // One score per input row.
  std::vector<double> difficulty(const Matrix& inputs) {
    Tape tape;
    Var z = forward(tape, tape.constant(inputs));
    const Matrix& v = tape.value(z);
    return std::vector<double>(v.data(), v.data() + v.size());
  }

  std::vector<Tensor*> parameters() { return mlp.parameters(); }
};

// Mean-tie rank of `answer` among the filtered candidates of (entity,
// relation), by ascending distance.
inline double filtered_rank_from_scores(const Eigen::VectorXd& scores, int answer, const std::vector<int>& known) {
  const double s = scores(answer);
  long better = 0, ties = 0;
  std::size_t k = 0;
  for (Index e = 0; e < scores.size(); ++e) {
    while (k < known.size() && known[k] < e) ++k;
    const bool filtered = k < known.size() && known[k] == e && e != answer;
    if (filtered || e == answer) continue;
    if (scores(e) < s)
      ++better;
    else if (scores(e) == s)
      ++ties;
  }
  return 1.0 + static_cast<double>(better) + 0.5 * static_cast<double>(ties);
}

inline std::size_t filtered_candidate_count(int num_entities, int answer, const std::vector<int>& known) {
  std::size_t others = known.size() - (std::binary_search(known.begin(), known.end(), answer) ? 1 : 0);
  return static_cast<std::size_t>(num_entities) - others;
}

// (rank - 1) / (|candidates| - 1); 0 when the answer is the only candidate.
inline double rank_percentile(double rank, std::size_t candidates) {
  return candidates <= 1 ? 0.0 : (rank - 1.0) / (static_cast<double>(candidates) - 1.0);
}

// Per-entity proxy difficulty. Each base train triple contributes the mean of
// its tail-query and head-query percentiles to both of its entities; an
// entity without train triples gets 0.5.
inline std::vector<double> proxy_targets(const KnowledgeGraph& kg, const TranslationalScorer& scorer) {
  std::vector<double> sum(kg.num_entities, 0.0);
  std::vector<long> count(kg.num_entities, 0);
  for (const auto& t : kg.train_base) {
    const auto& tail_known = kg.tails.answers(t.head, t.relation);
    double tail_pct = rank_percentile(
        filtered_rank_from_scores(scorer.score_all_tails(t.head, t.relation), t.tail, tail_known),
        filtered_candidate_count(kg.num_entities, t.tail, tail_known));
    double head_pct;
    if (kg.has_inverses) {
      const int inv = kg.inverse_of(t.relation);
      const auto& head_known = kg.tails.answers(t.tail, inv);
      head_pct = rank_percentile(
          filtered_rank_from_scores(scorer.score_all_tails(t.tail, inv), t.head, head_known),
          filtered_candidate_count(kg.num_entities, t.head, head_known));
    } else {
      const auto& head_known = kg.heads.answers(t.tail, t.relation);
      Eigen::VectorXd scores(kg.num_entities);
      for (int e = 0; e < kg.num_entities; ++e) scores(e) = scorer.score(e, t.relation, t.tail);
      head_pct = rank_percentile(filtered_rank_from_scores(scores, t.head, head_known),
                                 filtered_candidate_count(kg.num_entities, t.head, head_known));
    }
    const double pct = 0.5 * (tail_pct + head_pct);
    sum[t.head] += pct, ++count[t.head];
    sum[t.tail] += pct, ++count[t.tail];
  }
  std::vector<double> out(kg.num_entities, 0.5);
  for (int e = 0; e < kg.num_entities; ++e)
    if (count[e] > 0) out[e] = sum[e] / static_cast<double>(count[e]);
  return out;
}

struct DamOptions {
  int hidden = 64;
  int steps = 300;
  double lr = 1e-2;
};

struct DamFit {
  DamModel model;
  std::vector<double> targets;
  std::vector<double> zeta;
  std::vector<double> loss;  // per step
};

// Full-batch MSE regression of zeta onto the given targets with AdamW.
inline DamFit fit_dam_to_targets(const Matrix& inputs, std::vector<double> targets, const DamOptions& opt,
                                 std::uint64_t seed) {
  Rng rng = make_stream(seed, {stream::kDam, stream::kInit});
  DamFit fit;
  fit.model = DamModel(inputs.cols(), opt.hidden, rng);
  fit.targets = std::move(targets);
  Matrix y(inputs.rows(), 1);
  for (Index i = 0; i < inputs.rows(); ++i) y(i, 0) = fit.targets[i];
  AdamW optim(fit.model.parameters(), {opt.lr, 0.9, 0.999, 1e-8, 0.0});
  for (int s = 0; s < opt.steps; ++s) {
    Tape tape;
    Var loss = tape.mse(fit.model.forward(tape, tape.constant(inputs)), tape.constant(y));
    optim.zero_grad();
    tape.backward(loss);
    optim.step();
    fit.loss.push_back(tape.item(loss));
  }
  fit.zeta = fit.model.difficulty(inputs);
  return fit;
}

inline DamFit fit_dam(const KnowledgeGraph& kg, const TranslationalScorer& scorer,
                      const EntityStructFeatures& features, const DamOptions& opt, std::uint64_t seed) {
  return fit_dam_to_targets(difficulty_inputs(scorer.entities.value, features.normalized), proxy_targets(kg, scorer),
                            opt, seed);
}

inline void write_difficulty_csv(const DamFit& fit, std::ostream& out) {
  out << "entity_id,zeta,proxy_target\n" << std::setprecision(17);
  for (std::size_t e = 0; e < fit.zeta.size(); ++e) out << e << ',' << fit.zeta[e] << ',' << fit.targets[e] << '\n';
}

}  // namespace dans
