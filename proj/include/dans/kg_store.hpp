#pragma once
// Knowledge-graph storage: integer-indexed triples, filter index for
// false-negative-free corruption and filtered ranking, per-entity adjacency.
//
// Dataset directory layout:
//   train.txt, valid.txt, test.txt   head<TAB>relation<TAB>tail per line
//   entities.dict, relations.dict    optional, index<TAB>name per line
// Ids come from the dictionaries when present, otherwise from first
// appearance in train.txt. LF and CRLF line endings are both accepted.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dans/error.hpp"
#include "dans/rng.hpp"

namespace dans {

struct Triple {
  int head = 0;
  int relation = 0;
  int tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct DatasetStats {
  int entities = 0;
  int relations = 0;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

enum class Direction : std::uint8_t { kOutgoing, kIncoming };

struct Neighbor {
  int relation;
  int entity;
  Direction direction;
};

// (entity, relation) -> sorted list of true answers across all splits.
class FilterIndex {
 public:
  FilterIndex() = default;
  explicit FilterIndex(int num_relations) : num_relations_(num_relations) {}

  void insert(int entity, int relation, int answer) { map_[key(entity, relation)].push_back(answer); }

  void finalize() {
    for (auto& [k, v] : map_) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }

  const std::vector<int>& answers(int entity, int relation) const {
    static const std::vector<int> kEmpty;
    auto it = map_.find(key(entity, relation));
    return it == map_.end() ? kEmpty : it->second;
  }

  bool contains(int entity, int relation, int answer) const {
    const auto& a = answers(entity, relation);
    return std::binary_search(a.begin(), a.end(), answer);
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [k, v] : map_) n += v.size();
    return n;
  }

  std::size_t num_keys() const { return map_.size(); }

  friend bool operator==(const FilterIndex& a, const FilterIndex& b) {
    return a.num_relations_ == b.num_relations_ && a.map_ == b.map_;
  }

 private:
  std::uint64_t key(int entity, int relation) const {
    return static_cast<std::uint64_t>(entity) * static_cast<std::uint64_t>(num_relations_) +
           static_cast<std::uint64_t>(relation);
  }

  int num_relations_ = 0;
  std::unordered_map<std::uint64_t, std::vector<int>> map_;
};

struct KnowledgeGraph {
  int num_entities = 0;
  // Relation count including inverse relations when augmented.
  int num_relations = 0;
  int num_base_relations = 0;
  bool has_inverses = false;

  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;  // base relations only

  // Train contains inverse triples when augmented; valid/test never do.
  std::vector<Triple> train;
  std::vector<Triple> train_base;
  std::vector<Triple> valid;
  std::vector<Triple> test;

  std::vector<std::vector<Neighbor>> adjacency;  // from train_base
  FilterIndex tails;                              // (head, relation) -> tails
  FilterIndex heads;                              // (tail, relation) -> heads
  FilterIndex train_tails;                        // tails index over train only

  std::size_t duplicates_removed = 0;

  DatasetStats stats() const {
    return {num_entities, num_base_relations, train_base.size(), valid.size(), test.size()};
  }

  int inverse_of(int relation) const {
    return relation < num_base_relations ? relation + num_base_relations : relation - num_base_relations;
  }
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

struct RawTriple {
  std::string head, relation, tail;
  std::size_t line_no;
};

inline std::vector<RawTriple> read_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<RawTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 3)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields: " + line);
    out.push_back({std::move(f[0]), std::move(f[1]), std::move(f[2]), line_no});
  }
  return out;
}

inline std::vector<std::string> read_dict(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::pair<long, std::string>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 2) throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected index<TAB>name");
    long idx = 0;
    try {
      idx = std::stol(f[0]);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad index '" + f[0] + "'");
    }
    rows.emplace_back(idx, std::move(f[1]));
  }
  std::sort(rows.begin(), rows.end());
  std::vector<std::string> names;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != static_cast<long>(i))
      throw DataError(path.string() + ": indices must be contiguous from 0");
    names.push_back(std::move(rows[i].second));
  }
  return names;
}

class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!ids_.emplace(names_[i], static_cast<int>(i)).second) throw DataError("duplicate dictionary name: " + names_[i]);
    }
  }
  Vocabulary() = default;

  int find(const std::string& name) const {
    auto it = ids_.find(name);
    return it == ids_.end() ? -1 : it->second;
  }
  int intern(const std::string& name) {
    auto [it, inserted] = ids_.emplace(name, static_cast<int>(names_.size()));
    if (inserted) names_.push_back(name);
    return it->second;
  }
  std::vector<std::string> names() const { return names_; }
  int size() const { return static_cast<int>(names_.size()); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

inline std::size_t dedup_in_order(std::vector<Triple>& triples) {
  struct Hash {
    std::size_t operator()(const Triple& t) const {
      std::uint64_t h = static_cast<std::uint64_t>(t.head) * 0x9E3779B97F4A7C15ull;
      h ^= static_cast<std::uint64_t>(t.relation) + 0x7f4a7c15ull + (h << 6) + (h >> 2);
      h ^= static_cast<std::uint64_t>(t.tail) + 0x7f4a7c15ull + (h << 6) + (h >> 2);
      return static_cast<std::size_t>(h);
    }
  };
  struct Eq {
    bool operator()(const Triple& a, const Triple& b) const { return a == b; }
  };
  std::unordered_map<Triple, char, Hash, Eq> seen;
  std::vector<Triple> out;
  out.reserve(triples.size());
  for (const auto& t : triples)
    if (seen.emplace(t, 0).second) out.push_back(t);
  std::size_t removed = triples.size() - out.size();
  triples = std::move(out);
  return removed;
}

}  // namespace detail

// Builds adjacency and filter indexes from the split vectors. Used by the
// loader and by tests that assemble graphs in memory.
inline void build_indexes(KnowledgeGraph& kg) {
  const int r_base = kg.num_base_relations;
  kg.num_relations = kg.has_inverses ? 2 * r_base : r_base;

  kg.train.clear();
  kg.train.reserve(kg.train_base.size() * (kg.has_inverses ? 2 : 1));
  for (const auto& t : kg.train_base) kg.train.push_back(t);
  if (kg.has_inverses)
    for (const auto& t : kg.train_base) kg.train.push_back({t.tail, t.relation + r_base, t.head});

  kg.adjacency.assign(kg.num_entities, {});
  for (const auto& t : kg.train_base) {
    kg.adjacency[t.head].push_back({t.relation, t.tail, Direction::kOutgoing});
    kg.adjacency[t.tail].push_back({t.relation, t.head, Direction::kIncoming});
  }

  kg.tails = FilterIndex(kg.num_relations);
  kg.heads = FilterIndex(kg.num_relations);
  kg.train_tails = FilterIndex(kg.num_relations);
  for (const auto& t : kg.train) kg.train_tails.insert(t.head, t.relation, t.tail);
  kg.train_tails.finalize();
  auto add = [&](const Triple& t) {
    kg.tails.insert(t.head, t.relation, t.tail);
    kg.heads.insert(t.tail, t.relation, t.head);
    if (kg.has_inverses) {
      int inv = t.relation + r_base;
      kg.tails.insert(t.tail, inv, t.head);
      kg.heads.insert(t.head, inv, t.tail);
    }
  };
  for (const auto* split : {&kg.train_base, &kg.valid, &kg.test})
    for (const auto& t : *split) add(t);
  kg.tails.finalize();
  kg.heads.finalize();
}

inline KnowledgeGraph load_dataset(const std::filesystem::path& dir, bool add_inverses, std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());

  const bool has_entity_dict = fs::exists(dir / "entities.dict");
  const bool has_relation_dict = fs::exists(dir / "relations.dict");
  detail::Vocabulary entities =
      has_entity_dict ? detail::Vocabulary(detail::read_dict(dir / "entities.dict")) : detail::Vocabulary();
  detail::Vocabulary relations =
      has_relation_dict ? detail::Vocabulary(detail::read_dict(dir / "relations.dict")) : detail::Vocabulary();

  auto resolve = [&](const std::vector<detail::RawTriple>& raw, const fs::path& file, bool may_intern) {
    std::vector<Triple> out;
    out.reserve(raw.size());
    for (const auto& r : raw) {
      int h, rel, t;
      if (may_intern && !has_entity_dict) {
        h = entities.intern(r.head);
        t = entities.intern(r.tail);
      } else {
        h = entities.find(r.head);
        t = entities.find(r.tail);
      }
      rel = (may_intern && !has_relation_dict) ? relations.intern(r.relation) : relations.find(r.relation);
      if (h < 0 || t < 0 || rel < 0) {
        std::string what = h < 0 ? "entity '" + r.head + "'" : t < 0 ? "entity '" + r.tail + "'" : "relation '" + r.relation + "'";
        throw DataError(file.string() + ":" + std::to_string(r.line_no) + ": unknown " + what + " in line: " + r.head +
                        "\t" + r.relation + "\t" + r.tail);
      }
      out.push_back({h, rel, t});
    }
    return out;
  };

  KnowledgeGraph kg;
  kg.has_inverses = add_inverses;
  kg.train_base = resolve(detail::read_triples(dir / "train.txt"), dir / "train.txt", true);
  kg.valid = resolve(detail::read_triples(dir / "valid.txt"), dir / "valid.txt", false);
  kg.test = resolve(detail::read_triples(dir / "test.txt"), dir / "test.txt", false);

  for (auto* split : {&kg.train_base, &kg.valid, &kg.test}) kg.duplicates_removed += detail::dedup_in_order(*split);
  if (kg.duplicates_removed > 0) log << "warning: removed " << kg.duplicates_removed << " duplicate triple(s)\n";

  kg.entity_names = entities.names();
  kg.relation_names = relations.names();
  kg.num_entities = entities.size();
  kg.num_base_relations = relations.size();
  build_indexes(kg);
  return kg;
}

// Writes dictionaries and base splits so that load_dataset reproduces the
// same ids and filter contents.
inline void save_dataset(const KnowledgeGraph& kg, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write_dict = [](const fs::path& p, const std::vector<std::string>& names) {
    std::ofstream out(p);
    for (std::size_t i = 0; i < names.size(); ++i) out << i << '\t' << names[i] << '\n';
  };
  write_dict(dir / "entities.dict", kg.entity_names);
  write_dict(dir / "relations.dict", kg.relation_names);
  auto write_split = [&](const fs::path& p, const std::vector<Triple>& split) {
    std::ofstream out(p);
    for (const auto& t : split)
      out << kg.entity_names[t.head] << '\t' << kg.relation_names[t.relation] << '\t' << kg.entity_names[t.tail] << '\n';
  };
  write_split(dir / "train.txt", kg.train_base);
  write_split(dir / "valid.txt", kg.valid);
  write_split(dir / "test.txt", kg.test);
}

struct Corruption {
  Triple triple;
  bool degenerate = false;  // every entity is a true tail for (h, r)
};

// Replaces the tail with an entity drawn uniformly from the entities that are
// not train answers of (head, relation). Valid and test facts are never
// consulted during training.
inline Corruption corrupt_uniform(const KnowledgeGraph& kg, const Triple& triple, Rng& rng) {
  const auto& known = kg.train_tails.answers(triple.head, triple.relation);
  const int n = kg.num_entities;
  // The positive itself may not be in the index (e.g. an in-memory probe).
  const bool self_known = std::binary_search(known.begin(), known.end(), triple.tail);
  const int excluded = static_cast<int>(known.size()) + (self_known ? 0 : 1);
  if (excluded >= n) return {triple, true};

  auto is_excluded = [&](int e) { return e == triple.tail || std::binary_search(known.begin(), known.end(), e); };
  for (int attempt = 0; attempt < 64; ++attempt) {
    int e = uniform_index(rng, n);
    if (!is_excluded(e)) return {{triple.head, triple.relation, e}, false};
  }
  std::vector<int> allowed;
  allowed.reserve(n - excluded);
  for (int e = 0; e < n; ++e)
    if (!is_excluded(e)) allowed.push_back(e);
  return {{triple.head, triple.relation, allowed[uniform_index(rng, static_cast<int>(allowed.size()))]}, false};
}

// All entities except the other known answers of (entity, relation).
inline std::vector<int> filtered_candidates(const KnowledgeGraph& kg, int entity, int relation, int answer) {
  const auto& known = kg.tails.answers(entity, relation);
  std::vector<int> out;
  out.reserve(kg.num_entities);
  for (int e = 0; e < kg.num_entities; ++e)
    if (e == answer || !std::binary_search(known.begin(), known.end(), e)) out.push_back(e);
  return out;
}

}  // namespace dans
