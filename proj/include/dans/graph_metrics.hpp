#pragma once
// Structural entity features computed on the undirected simple projection
// of the training graph: betweenness, closeness, clustering coefficient,
// triple count, average neighbor degree and PageRank.

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <iomanip>
#include <ostream>
#include <string_view>
#include <vector>

#include "dans/kg_store.hpp"

namespace dans {

// Undirected graph without self loops or parallel edges; neighbor lists
// sorted ascending.
class UndirectedGraph {
 public:
  explicit UndirectedGraph(int n = 0) : adj_(n) {}

  static UndirectedGraph from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
    UndirectedGraph g(n);
    for (auto [a, b] : edges) {
      if (a == b) continue;
      g.adj_[a].push_back(b);
      g.adj_[b].push_back(a);
    }
    for (auto& nb : g.adj_) {
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }
    return g;
  }

  static UndirectedGraph from_triples(int n, const std::vector<Triple>& triples) {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(triples.size());
    for (const auto& t : triples) edges.emplace_back(t.head, t.tail);
    return from_edges(n, edges);
  }

  int size() const { return static_cast<int>(adj_.size()); }
  const std::vector<int>& neighbors(int v) const { return adj_[v]; }
  int degree(int v) const { return static_cast<int>(adj_[v].size()); }
  bool has_edge(int a, int b) const { return std::binary_search(adj_[a].begin(), adj_[a].end(), b); }

 private:
  std::vector<std::vector<int>> adj_;
};

// Brandes' accumulation. Normalized by 2/((n-1)(n-2)); zero for n <= 2.
inline std::vector<double> betweenness(const UndirectedGraph& g) {
  const int n = g.size();
  std::vector<double> bc(n, 0.0);
  if (n <= 2) return bc;

  std::vector<int> order;
  std::vector<std::vector<int>> preds(n);
  std::vector<double> sigma(n), delta(n);
  std::vector<int> dist(n);
  order.reserve(n);
  for (int s = 0; s < n; ++s) {
    order.clear();
    for (int v = 0; v < n; ++v) preds[v].clear();
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    std::fill(dist.begin(), dist.end(), -1);
    sigma[s] = 1.0;
    dist[s] = 0;
    std::deque<int> queue{s};
    while (!queue.empty()) {
      int v = queue.front();
      queue.pop_front();
      order.push_back(v);
      for (int w : g.neighbors(v)) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          queue.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          preds[w].push_back(v);
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      int w = *it;
      for (int v : preds[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) bc[w] += delta[w];
    }
  }
  // Each unordered pair was counted from both endpoints.
  const double scale = 1.0 / ((n - 1.0) * (n - 2.0));
  for (auto& x : bc) x *= scale;
  return bc;
}

namespace detail {

inline std::vector<int> bfs_distances(const UndirectedGraph& g, int s) {
  std::vector<int> dist(g.size(), -1);
  dist[s] = 0;
  std::deque<int> queue{s};
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int w : g.neighbors(v))
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        queue.push_back(w);
      }
  }
  return dist;
}

}  // namespace detail

// (r-1)/sum(d) scaled by (r-1)/(n-1), r = size of the reachable set.
inline std::vector<double> closeness(const UndirectedGraph& g) {
  const int n = g.size();
  std::vector<double> cc(n, 0.0);
  if (n <= 1) return cc;
  for (int v = 0; v < n; ++v) {
    auto dist = detail::bfs_distances(g, v);
    long total = 0;
    int reachable = 0;
    for (int d : dist)
      if (d >= 0) {
        total += d;
        ++reachable;
      }
    if (reachable <= 1 || total == 0) continue;
    const double r1 = reachable - 1.0;
    cc[v] = (r1 / static_cast<double>(total)) * (r1 / (n - 1.0));
  }
  return cc;
}

inline std::vector<double> clustering_coefficient(const UndirectedGraph& g) {
  const int n = g.size();
  std::vector<double> out(n, 0.0);
  for (int v = 0; v < n; ++v) {
    const auto& nb = g.neighbors(v);
    const long k = static_cast<long>(nb.size());
    if (k < 2) continue;
    long links = 0;
    for (std::size_t i = 0; i < nb.size(); ++i)
      for (std::size_t j = i + 1; j < nb.size(); ++j)
        if (g.has_edge(nb[i], nb[j])) ++links;
    out[v] = 2.0 * static_cast<double>(links) / static_cast<double>(k * (k - 1));
  }
  return out;
}

// Head and tail occurrences over base train triples.
inline std::vector<long> triple_count(int num_entities, const std::vector<Triple>& train_base) {
  std::vector<long> tc(num_entities, 0);
  for (const auto& t : train_base) {
    ++tc[t.head];
    ++tc[t.tail];
  }
  return tc;
}

inline std::vector<double> avg_neighbor_degree(const UndirectedGraph& g) {
  const int n = g.size();
  std::vector<double> out(n, 0.0);
  for (int v = 0; v < n; ++v) {
    const auto& nb = g.neighbors(v);
    if (nb.empty()) continue;
    long sum = 0;
    for (int w : nb) sum += g.degree(w);
    out[v] = static_cast<double>(sum) / static_cast<double>(nb.size());
  }
  return out;
}

struct PageRankResult {
  std::vector<double> scores;
  int iterations = 0;
  bool converged = false;
};

// Power iteration; each undirected edge acts as two directed edges and the
// mass of isolated nodes is spread uniformly.
inline PageRankResult pagerank(const UndirectedGraph& g, double damping = 0.85, double tol = 1e-10, int max_iter = 200) {
  const int n = g.size();
  PageRankResult res;
  if (n == 0) {
    res.converged = true;
    return res;
  }
  std::vector<double> x(n, 1.0 / n), next(n);
  for (int it = 1; it <= max_iter; ++it) {
    double dangling = 0.0;
    for (int v = 0; v < n; ++v)
      if (g.degree(v) == 0) dangling += x[v];
    const double base = (1.0 - damping) / n + damping * dangling / n;
    std::fill(next.begin(), next.end(), base);
    for (int v = 0; v < n; ++v) {
      if (g.degree(v) == 0) continue;
      const double share = damping * x[v] / g.degree(v);
      for (int w : g.neighbors(v)) next[w] += share;
    }
    double err = 0.0;
    for (int v = 0; v < n; ++v) err += std::abs(next[v] - x[v]);
    x.swap(next);
    res.iterations = it;
    if (err < tol) {
      res.converged = true;
      break;
    }
  }
  res.scores = std::move(x);
  return res;
}

inline constexpr std::array<std::string_view, 6> kFeatureNames = {"bc", "cc", "ccoef", "tc", "adn", "pr"};

// Row-per-entity feature table; columns follow kFeatureNames.
struct EntityStructFeatures {
  std::vector<std::array<double, 6>> raw;
  std::vector<std::array<double, 6>> normalized;
  bool pagerank_converged = true;
};

// Per-column min-max to [0, 1]; a constant column maps to 0.5.
inline std::vector<std::array<double, 6>> normalize_features(const std::vector<std::array<double, 6>>& raw) {
  std::vector<std::array<double, 6>> out(raw.size());
  if (raw.empty()) return out;
  for (std::size_t f = 0; f < 6; ++f) {
    double lo = raw[0][f], hi = raw[0][f];
    for (const auto& row : raw) {
      lo = std::min(lo, row[f]);
      hi = std::max(hi, row[f]);
    }
    for (std::size_t i = 0; i < raw.size(); ++i)
      out[i][f] = hi > lo ? (raw[i][f] - lo) / (hi - lo) : 0.5;
  }
  return out;
}

inline EntityStructFeatures compute_features(const KnowledgeGraph& kg) {
  auto g = UndirectedGraph::from_triples(kg.num_entities, kg.train_base);
  auto bc = betweenness(g);
  auto cc = closeness(g);
  auto ccoef = clustering_coefficient(g);
  auto tc = triple_count(kg.num_entities, kg.train_base);
  auto adn = avg_neighbor_degree(g);
  auto pr = pagerank(g);

  EntityStructFeatures out;
  out.pagerank_converged = pr.converged;
  out.raw.resize(kg.num_entities);
  for (int v = 0; v < kg.num_entities; ++v)
    out.raw[v] = {bc[v], cc[v], ccoef[v], static_cast<double>(tc[v]), adn[v], pr.scores[v]};
  out.normalized = normalize_features(out.raw);
  return out;
}

inline void write_features_csv(const EntityStructFeatures& f, std::ostream& out) {
  out << "entity_id";
  for (auto name : kFeatureNames) out << ',' << name;
  for (auto name : kFeatureNames) out << ',' << name << "_norm";
  out << '\n' << std::setprecision(17);
  for (std::size_t v = 0; v < f.raw.size(); ++v) {
    out << v;
    for (double x : f.raw[v]) out << ',' << x;
    for (double x : f.normalized[v]) out << ',' << x;
    out << '\n';
  }
}

}  // namespace dans
