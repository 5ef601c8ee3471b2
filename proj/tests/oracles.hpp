#pragma once
// Brute-force reference implementations shared by the unit tests and the
// acceptance harness.

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

#include "dans/dans.hpp"

namespace dans::testing {

using Edges = std::vector<std::pair<int, int>>;

inline Edges random_edges(int n, double p, Rng& rng) {
  Edges e;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (uniform_real(rng) < p) e.emplace_back(a, b);
  return e;
}

inline constexpr int kInf = 1 << 28;

struct Oracle {
  int n;
  std::vector<std::vector<int>> adj;  // dense adjacency matrix
  std::vector<std::vector<int>> dist;
  std::vector<std::vector<double>> paths;  // number of shortest paths

  Oracle(int n_, const Edges& edges) : n(n_), adj(n_, std::vector<int>(n_, 0)) {
    for (auto [a, b] : edges)
      if (a != b) adj[a][b] = adj[b][a] = 1;
    dist.assign(n, std::vector<int>(n, kInf));
    for (int v = 0; v < n; ++v) dist[v][v] = 0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (adj[a][b]) dist[a][b] = 1;
    for (int k = 0; k < n; ++k)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          dist[a][b] = std::min(dist[a][b], dist[a][k] + dist[k][b]);
    // Path counts by increasing distance from each source.
    paths.assign(n, std::vector<double>(n, 0.0));
    for (int s = 0; s < n; ++s) {
      paths[s][s] = 1.0;
      for (int d = 1; d < n; ++d)
        for (int t = 0; t < n; ++t) {
          if (dist[s][t] != d) continue;
          for (int u = 0; u < n; ++u)
            if (adj[u][t] && dist[s][u] == d - 1) paths[s][t] += paths[s][u];
        }
    }
  }

  int degree(int v) const { return std::accumulate(adj[v].begin(), adj[v].end(), 0); }

  double bc(int v) const {
    if (n <= 2) return 0.0;
    double sum = 0.0;
    for (int s = 0; s < n; ++s)
      for (int t = s + 1; t < n; ++t) {
        if (s == v || t == v || dist[s][t] >= kInf) continue;
        if (dist[s][v] + dist[v][t] == dist[s][t]) sum += paths[s][v] * paths[v][t] / paths[s][t];
      }
    return sum * 2.0 / ((n - 1.0) * (n - 2.0));
  }

  double cc(int v) const {
    int reach = 0;
    long total = 0;
    for (int u = 0; u < n; ++u)
      if (dist[v][u] < kInf) {
        ++reach;
        total += dist[v][u];
      }
    if (reach <= 1 || total == 0) return 0.0;
    return (reach - 1.0) / total * (reach - 1.0) / (n - 1.0);
  }

  double ccoef(int v) const {
    const int k = degree(v);
    if (k < 2) return 0.0;
    int tri = 0;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (adj[v][a] && adj[v][b] && adj[a][b]) ++tri;
    return 2.0 * tri / (k * (k - 1.0));
  }

  double adn(int v) const {
    const int k = degree(v);
    if (k == 0) return 0.0;
    double s = 0.0;
    for (int u = 0; u < n; ++u)
      if (adj[v][u]) s += degree(u);
    return s / k;
  }

  // Stationary vector of the damped walk as a dense linear solve.
  std::vector<double> pagerank(double d) const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int v = 0; v < n; ++v) {
      const int k = degree(v);
      for (int u = 0; u < n; ++u) m(u, v) = k == 0 ? 1.0 / n : adj[v][u] / static_cast<double>(k);
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - d * m;
    Eigen::VectorXd b = Eigen::VectorXd::Constant(n, (1.0 - d) / n);
    Eigen::VectorXd x = a.fullPivLu().solve(b);
    x /= x.sum();
    return {x.data(), x.data() + n};
  }
};

// Undirected simple-graph edges of a triple list, self-loops dropped.
inline Edges edges_of(const std::vector<Triple>& triples) {
  Edges e;
  for (const auto& t : triples)
    if (t.head != t.tail) e.emplace_back(t.head, t.tail);
  return e;
}

// Number of triples touching each entity, a self-loop counted twice.
inline std::vector<long> triple_count_oracle(int n, const std::vector<Triple>& triples) {
  std::vector<long> c(n, 0);
  for (int v = 0; v < n; ++v)
    for (const auto& t : triples) c[v] += (t.head == v) + (t.tail == v);
  return c;
}

// Mean-tie rank by exhaustive sort over the filtered candidate list.
inline double sort_oracle(const KnowledgeGraph& kg, const TranslationalScorer& s, int e, int r, int answer) {
  std::vector<std::pair<double, int>> scored;
  for (int c = 0; c < kg.num_entities; ++c) {
    if (c != answer && kg.tails.contains(e, r, c)) continue;
    scored.push_back({s.score(e, r, c), c});
  }
  std::sort(scored.begin(), scored.end());
  const double target = s.score(e, r, answer);
  int first = -1, last = -1;
  for (int i = 0; i < static_cast<int>(scored.size()); ++i)
    if (scored[i].first == target) {
      if (first < 0) first = i;
      last = i;
    }
  return 0.5 * (first + last) + 1.0;
}

}  // namespace dans::testing
