#pragma once
// Shared helpers for the test suites.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dans/dans.hpp"

namespace dans::testing {

inline std::filesystem::path umls_dir() { return DANS_DATA_DIR "/umls"; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dans_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// In-memory graph with entities e0..e{n-1} and relations r0..r{m-1}.
inline KnowledgeGraph make_graph(int num_entities, int num_relations, std::vector<Triple> train,
                                 std::vector<Triple> valid = {}, std::vector<Triple> test = {},
                                 bool add_inverses = true) {
  KnowledgeGraph kg;
  kg.num_entities = num_entities;
  kg.num_base_relations = num_relations;
  kg.has_inverses = add_inverses;
  for (int e = 0; e < num_entities; ++e) kg.entity_names.push_back("e" + std::to_string(e));
  for (int r = 0; r < num_relations; ++r) kg.relation_names.push_back("r" + std::to_string(r));
  kg.train_base = std::move(train);
  kg.valid = std::move(valid);
  kg.test = std::move(test);
  build_indexes(kg);
  return kg;
}

// A random graph without duplicate triples or self-loops.
inline KnowledgeGraph random_graph(int n, int relations, int triples, Rng& rng) {
  std::vector<Triple> train;
  for (int attempt = 0; static_cast<int>(train.size()) < triples && attempt < 100 * triples; ++attempt) {
    Triple t{uniform_index(rng, n), uniform_index(rng, relations), uniform_index(rng, n)};
    if (t.head == t.tail || std::find(train.begin(), train.end(), t) != train.end()) continue;
    train.push_back(t);
  }
  return make_graph(n, relations, std::move(train));
}

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * (2.0 * uniform_real(rng) - 1.0);
  return m;
}

// Central finite-difference check of d loss / d params. Returns the largest
// norm-wise relative error ||analytic - numeric|| / (||analytic|| + ||numeric||)
// over the parameter tensors.
inline double gradient_check(const std::function<Var(Tape&)>& loss_fn, const std::vector<Tensor*>& params,
                             double h = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&] {
    Tape tape;
    return tape.item(loss_fn(tape));
  };
  double worst = 0.0;
  for (auto* p : params) {
    Matrix numeric(p->rows(), p->cols());
    for (Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double orig = x;
      x = orig + h;
      const double up = eval();
      x = orig - h;
      const double down = eval();
      x = orig;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double denom = p->grad.norm() + numeric.norm();
    const double err = denom == 0.0 ? 0.0 : (p->grad - numeric).norm() / denom;
    worst = std::max(worst, err);
  }
  return worst;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Spearman rank correlation with mean-tie ranks.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  auto ra = ranks(a), rb = ranks(b);
  const double ma = mean(ra), mb = mean(rb);
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace dans::testing
