#pragma once
// Checkpoint file:
//
//   DANS-CKPT v1 <dim> <dim> ...\n
//   then, per array:  <name> <rows> <cols>\n  followed by rows*cols
//   little-endian IEEE-754 float64 values in row-major order.
//
// Names contain no whitespace. Arrays appear in insertion order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dans/autodiff.hpp"
#include "dans/error.hpp"

namespace dans {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

struct Checkpoint {
  std::vector<long> dims;
  std::vector<std::pair<std::string, Matrix>> arrays;

  void put(const std::string& name, Matrix m) {
    for (auto& [n, a] : arrays)
      if (n == name) {
        a = std::move(m);
        return;
      }
    arrays.emplace_back(name, std::move(m));
  }

  bool has(const std::string& name) const {
    for (const auto& [n, a] : arrays)
      if (n == name) return true;
    return false;
  }

  const Matrix& get(const std::string& name) const {
    for (const auto& [n, a] : arrays)
      if (n == name) return a;
    throw DataError("checkpoint has no array named '" + name + "'");
  }
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << "DANS-CKPT v1";
  for (long d : ckpt.dims) out << ' ' << d;
  out << '\n';
  for (const auto& [name, m] : ckpt.arrays) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  std::istringstream header(line);
  std::string magic, version;
  header >> magic >> version;
  if (magic != "DANS-CKPT" || version != "v1") throw DataError(path.string() + ": not a DANS-CKPT v1 file");
  Checkpoint ckpt;
  long d;
  while (header >> d) ckpt.dims.push_back(d);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream rec(line);
    std::string name;
    long rows = -1, cols = -1;
    rec >> name >> rows >> cols;
    if (name.empty() || rows < 0 || cols < 0) throw DataError(path.string() + ": malformed array record '" + line + "'");
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw DataError(path.string() + ": truncated array '" + name + "'");
    ckpt.arrays.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

}  // namespace dans
