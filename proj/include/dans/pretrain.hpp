#pragma once
// Translational distance scorer S(h, r, t) = ||x_h + x_r - x_t||_p, its
// uniform-negative pretraining loop, and K-means semantic types.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "dans/autodiff.hpp"
#include "dans/curriculum.hpp"
#include "dans/kg_store.hpp"
#include "dans/nn.hpp"
#include "dans/rng.hpp"

namespace dans {

struct TranslationalScorer {
  Tensor entities;   // |E| x d
  Tensor relations;  // |R| x d (inverse relations included when augmented)
  int norm = 1;      // 1 or 2

  TranslationalScorer() = default;
  TranslationalScorer(int num_entities, int num_relations, int dim, int p, Rng& rng)
      : entities(xavier_uniform(num_entities, dim, rng)), relations(xavier_uniform(num_relations, dim, rng)), norm(p) {
    if (p != 1 && p != 2) throw ConfigError("model.norm must be 1 or 2");
  }

  int dim() const { return static_cast<int>(entities.cols()); }
  int num_entities() const { return static_cast<int>(entities.rows()); }

  double distance(const RowVector& query, const RowVector& tail) const {
    return norm == 1 ? (query - tail).cwiseAbs().sum() : (query - tail).norm();
  }

  double score(int h, int r, int t) const {
    RowVector q = entities.value.row(h) + relations.value.row(r);
    return distance(q, entities.value.row(t));
  }

  double score(int h, int r, const RowVector& tail) const {
    RowVector q = entities.value.row(h) + relations.value.row(r);
    return distance(q, tail);
  }

  // Distances from x_h + x_r to every entity.
  Eigen::VectorXd score_all_tails(int h, int r) const {
    RowVector q = entities.value.row(h) + relations.value.row(r);
    Matrix diff = (-entities.value).rowwise() + q;
    return norm == 1 ? Eigen::VectorXd(diff.cwiseAbs().rowwise().sum()) : Eigen::VectorXd(diff.rowwise().norm());
  }

  // Batched scores on a tape. Tails given as ids.
  Var score(Tape& tape, Var ent, Var rel, std::span<const int> heads, std::span<const int> rels,
            std::span<const int> tails) const {
    return tape.translation_distance(ent, rel, heads, rels, tails, Var{-1}, norm);
  }

  // Batched scores on a tape. Tails given as embeddings (one row per query).
  Var score(Tape& tape, Var ent, Var rel, std::span<const int> heads, std::span<const int> rels, Var tails) const {
    return tape.translation_distance(ent, rel, heads, rels, {}, tails, norm);
  }

  std::vector<Tensor*> parameters() { return {&entities, &relations}; }
};

struct PretrainOptions {
  int dim = 200;
  int norm = 1;
  int epochs = 200;
  int batch_size = 256;
  int negatives = 16;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double gamma = 1.0;
};

struct PretrainResult {
  TranslationalScorer scorer;
  std::vector<double> epoch_loss;
  bool aborted = false;  // loss went non-finite; scorer holds the last finite epoch
};

// Positives are train triples (inverses included); each gets `negatives`
// tail corruptions drawn by corrupt_uniform. Loss has the fixed-margin form.
inline PretrainResult pretrain(const KnowledgeGraph& kg, const PretrainOptions& opt, std::uint64_t seed,
                               std::ostream& log = std::cerr) {
  Rng init = make_stream(seed, {stream::kPretrain, stream::kInit});
  PretrainResult res;
  res.scorer = TranslationalScorer(kg.num_entities, kg.num_relations, opt.dim, opt.norm, init);
  if (opt.epochs <= 0 || kg.train.empty()) return res;

  TranslationalScorer& sc = res.scorer;
  AdamW optim(sc.parameters(), {opt.lr, 0.9, 0.999, 1e-8, opt.weight_decay});
  Rng shuffle = make_stream(seed, {stream::kPretrain, stream::kShuffle});
  Rng corrupt = make_stream(seed, {stream::kPretrain, stream::kUniformNegatives});

  std::vector<std::size_t> order(kg.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> ph, pr, pt, nh, nr, nt;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    Matrix ent_backup = sc.entities.value, rel_backup = sc.relations.value;
    std::shuffle(order.begin(), order.end(), shuffle);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
        ph.clear(), pr.clear(), pt.clear(), nh.clear(), nr.clear(), nt.clear();
        for (std::size_t i = start; i < end; ++i) {
          const Triple& t = kg.train[order[i]];
          ph.push_back(t.head), pr.push_back(t.relation), pt.push_back(t.tail);
          for (int k = 0; k < opt.negatives; ++k) {
            Corruption c = corrupt_uniform(kg, t, corrupt);
            if (c.degenerate) break;
            const Triple& neg = c.triple;
            nh.push_back(neg.head), nr.push_back(neg.relation), nt.push_back(neg.tail);
          }
        }
        Tape tape;
        Var ent = tape.param(sc.entities), rel = tape.param(sc.relations);
        Var pos = sc.score(tape, ent, rel, ph, pr, pt);
        Var neg = sc.score(tape, ent, rel, nh, nr, nt);
        Var loss = loss_kgc2(tape, pos, neg, opt.gamma);
        optim.zero_grad();
        tape.backward(loss);
        optim.step();
        loss_sum += tape.item(loss);
        ++batches;
      }
    } catch (const NumericalError& e) {
      log << "pretrain: " << e.what() << " at epoch " << epoch + 1 << "; keeping last finite embeddings\n";
      sc.entities.value = std::move(ent_backup);
      sc.relations.value = std::move(rel_backup);
      res.aborted = true;
      return res;
    }
    res.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  return res;
}

struct SemanticTypes {
  Matrix centroids;             // K x d
  std::vector<int> assignment;  // entity -> cluster
  std::vector<double> inertia;  // after each assignment step
  int iterations = 0;

  int k() const { return static_cast<int>(centroids.rows()); }
  // Type embedding of every entity (its cluster centroid), |E| x d.
  Matrix entity_types() const {
    Matrix out(static_cast<Index>(assignment.size()), centroids.cols());
    for (std::size_t i = 0; i < assignment.size(); ++i) out.row(static_cast<Index>(i)) = centroids.row(assignment[i]);
    return out;
  }
};

inline int default_num_types(int num_entities) {
  return std::min(50, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_entities)))));
}

// Lloyd's algorithm with K-means++ seeding. Stops at an assignment fixpoint
// or after max_iter iterations. Empty clusters are reseeded to the point
// farthest from its centroid.
inline SemanticTypes kmeans(const Matrix& points, int k, int max_iter, Rng& rng) {
  const Index n = points.rows();
  if (k < 1 || k > n) throw ConfigError("kmeans: need 1 <= K <= number of points (K=" + std::to_string(k) + ")");
  SemanticTypes res;
  res.centroids.resize(k, points.cols());

  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  Index first = uniform_index(rng, static_cast<int>(n));
  res.centroids.row(0) = points.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(i) - res.centroids.row(c - 1)).squaredNorm());
      total += d2[i];
    }
    Index pick = n - 1;
    if (total > 0.0) {
      double u = uniform_real(rng) * total, acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_index(rng, static_cast<int>(n));
    }
    res.centroids.row(c) = points.row(pick);
  }

  res.assignment.assign(n, -1);
  std::vector<double> dist(n);
  auto assign = [&]() {
    bool changed = false;
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double d = (points.row(i) - res.centroids.row(c)).squaredNorm();
        if (d < best_d) best_d = d, best = c;
      }
      if (res.assignment[i] != best) changed = true;
      res.assignment[i] = best;
      dist[i] = best_d;
      inertia += best_d;
    }
    res.inertia.push_back(inertia);
    return changed;
  };

  assign();
  for (int it = 1; it <= max_iter; ++it) {
    res.iterations = it;
    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<long> counts(k, 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(res.assignment[i]) += points.row(i);
      ++counts[res.assignment[i]];
    }
    std::vector<char> taken(n, 0);
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        res.centroids.row(c) = sums.row(c) / static_cast<double>(counts[c]);
        continue;
      }
      Index far = -1;
      for (Index i = 0; i < n; ++i)
        if (!taken[i] && (far < 0 || dist[i] > dist[far])) far = i;
      taken[far] = 1;
      res.centroids.row(c) = points.row(far);
      dist[far] = 0.0;
    }
    if (!assign()) break;
  }
  return res;
}

}  // namespace dans
