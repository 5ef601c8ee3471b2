#pragma once
// Flat `key = value` configuration. Sections are dotted key prefixes
// (diffusion.T). Lines starting with '#' are comments. Every key has a
// default listed in Config::keys().

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dans/error.hpp"

namespace dans {

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

class Config {
 public:
  static const std::vector<ConfigKey>& keys() {
    static const std::vector<ConfigKey> k = {
        {"seed", "0", "seed for every random stream"},
        {"data.dir", "", "dataset directory (train.txt, valid.txt, test.txt)"},
        {"data.add_inverses", "true", "add inverse relations so head queries become tail queries"},
        {"output.dir", "runs/default", "directory for checkpoints, logs and reports"},
        {"checkpoint", "", "input checkpoint for eval, hardness, fit-dam and warm starts"},
        {"model.dim", "200", "embedding dimension"},
        {"model.norm", "1", "scorer distance norm, 1 or 2"},
        {"pretrain.epochs", "200", "uniform-negative pretraining epochs"},
        {"pretrain.lr", "0.003", "pretraining learning rate"},
        {"pretrain.batch_size", "256", "pretraining batch size"},
        {"pretrain.negatives", "16", "uniform negatives per positive during pretraining"},
        {"types.k", "0", "number of semantic types; 0 = min(50, ceil(sqrt(|E|)))"},
        {"types.max_iter", "100", "K-means iteration cap"},
        {"dam.hidden", "64", "difficulty network hidden width"},
        {"dam.steps", "300", "difficulty network training steps"},
        {"dam.lr", "0.01", "difficulty network learning rate"},
        {"diffusion.T", "200", "total diffusion steps"},
        {"diffusion.beta_init", "0.0001", "noise variance at t = 0"},
        {"diffusion.beta_low", "0.005", "minimum noise upper bound"},
        {"diffusion.beta_global", "0.05", "global maximum noise upper bound"},
        {"diffusion.mu", "1", "difficulty exponent in the noise bound"},
        {"diffusion.mode", "standard", "reverse update: standard or literal"},
        {"diffusion.hidden", "0", "denoiser hidden width; 0 = 2 x model.dim"},
        {"diffusion.time_dim", "64", "sinusoidal timestep embedding width"},
        {"diffusion.layer_norm", "hidden", "denoiser LayerNorm placement: hidden or output"},
        {"diffusion.start", "positive", "reverse chain start: positive (noised tail) or noise"},
        {"diffusion.lr", "0.001", "denoiser learning rate"},
        {"diffusion.refresh", "1", "epochs between negative band regenerations"},
        {"diffusion.loss_positives", "0", "positives per batch used for the diffusion loss; 0 = all"},
        {"diffusion.gen_block", "512", "rows per block during band generation"},
        {"diffusion.standardize", "true", "divide embeddings by their RMS inside the diffusion model"},
        {"curriculum.lambda", "10", "band weight sharpness"},
        {"curriculum.zeta_exp", "1", "band weight smoothness exponent"},
        {"curriculum.gamma_base", "1", "base margin"},
        {"curriculum.beta_margin", "0.4", "dynamic margin increment"},
        {"curriculum.eta", "0.4", "weight of the band-negative loss"},
        {"train.lr", "0.00005", "embedding learning rate"},
        {"train.batch_size", "256", "positives per batch"},
        {"train.epochs", "1500", "epoch cap E_max"},
        {"train.n_rand", "16", "uniform negatives per positive"},
        {"train.weight_decay", "0", "AdamW decoupled weight decay"},
        {"train.patience", "100", "early stopping patience in epochs; 0 disables"},
        {"train.eval_every", "10", "epochs between validation passes"},
        {"train.checkpoint_every", "100", "epochs between checkpoints"},
        {"train.uniform_only", "false", "baseline: uniform negatives only, no diffusion"},
        {"train.max_restarts", "3", "NaN recoveries before aborting"},
        {"ablation.dfs_off", "false", "ignore difficulty in the noise schedule"},
        {"ablation.ccd_off", "false", "unconditional denoiser"},
        {"ablation.dtm_off", "false", "static uniform band mix and fixed margin"},
        {"eval.split", "test", "split for eval: valid or test"},
        {"ablate.seeds", "3", "number of consecutive seeds for ablate"},
        {"ablate.variants", "full,dfs_off,ccd_off,dtm_off", "variants for ablate (also: uniform)"},
        {"hardness.positives", "500", "train positives sampled for the hardness report"},
        {"log.quiet", "false", "suppress progress output"},
    };
    return k;
  }

  static bool is_key(const std::string& name) {
    const auto& k = keys();
    return std::any_of(k.begin(), k.end(), [&](const ConfigKey& c) { return name == c.name; });
  }

  Config() {
    for (const auto& k : keys()) values_[k.name] = k.default_value;
  }

  void set(const std::string& key, const std::string& value) {
    if (!is_key(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  const std::string& required(const std::string& key) const {
    const std::string& v = str(key);
    if (v.empty()) throw DataError("missing required key '" + key + "'");
    return v;
  }

  long integer(const std::string& key) const {
    const std::string& v = str(key);
    long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
  }

  double real(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t used = 0;
      double out = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
  }

  bool boolean(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace dans
