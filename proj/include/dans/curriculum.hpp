#pragma once
// Curriculum over hardness bands: band partition, epoch-dependent sampling
// weights, dynamic margins, and the margin losses used for training.

#include <array>
#include <cmath>
#include <iostream>
#include <span>
#include <string>
#include <vector>

#include "dans/autodiff.hpp"
#include "dans/error.hpp"

namespace dans {

inline constexpr int kNumBands = 4;

// Sampling timesteps, band 1 first: floor(T/20), floor(T/10), floor(T/5), floor(T/2).
inline std::array<int, kNumBands> band_timesteps(int T) {
  if (T < 20) throw ConfigError("diffusion.T must be >= 20, got " + std::to_string(T));
  return {T / 20, T / 10, T / 5, T / 2};
}

// 1-based band index of a sampling timestep.
inline int band_of(int timestep, int T) {
  auto ts = band_timesteps(T);
  for (int k = 0; k < kNumBands; ++k)
    if (ts[k] == timestep) return k + 1;
  throw ConfigError("timestep " + std::to_string(timestep) + " is not a sampling timestep for T=" + std::to_string(T));
}

struct CurriculumConfig {
  std::array<double, 5> boundaries{0.0, 0.25, 0.5, 0.75, 1.0};
  double lambda = 10.0;
  double zeta_exp = 1.0;
  double gamma_base = 1.0;
  double beta_margin = 0.4;
  double eta = 0.4;
  int max_epochs = 1500;

  void validate() const {
    if (boundaries.front() != 0.0 || boundaries.back() != 1.0)
      throw ConfigError("curriculum boundaries must run from 0 to 1");
    for (std::size_t i = 1; i < boundaries.size(); ++i)
      if (!(boundaries[i] > boundaries[i - 1])) throw ConfigError("curriculum boundaries must be strictly increasing");
    if (!(lambda > 0.0)) throw ConfigError("curriculum.lambda must be > 0");
    if (zeta_exp < 0.0 || zeta_exp > 1.0) throw ConfigError("curriculum.zeta_exp must lie in [0, 1]");
    if (beta_margin < 0.0 || beta_margin > 1.0) throw ConfigError("curriculum.beta_margin must lie in [0, 1]");
    if (max_epochs <= 0) throw ConfigError("train.epochs must be positive");
  }
};

// softmax_k(lambda * [tau - b_{k-1}]_+^zeta_exp). A non-positive base
// contributes 0 regardless of the exponent.
inline std::array<double, kNumBands> band_weights(double tau, const CurriculumConfig& cfg) {
  std::array<double, kNumBands> logits{};
  for (int k = 0; k < kNumBands; ++k) {
    const double x = tau - cfg.boundaries[k];
    logits[k] = x > 0.0 ? cfg.lambda * std::pow(x, cfg.zeta_exp) : 0.0;
  }
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  std::array<double, kNumBands> w{};
  double total = 0.0;
  for (int k = 0; k < kNumBands; ++k) total += (w[k] = std::exp(logits[k] - mx));
  for (auto& x : w) x /= total;
  return w;
}

// gamma_base * (1 + beta_margin * hard_k * tau), hard_k = (5 - k) / 4.
inline double margin(int kappa, double tau, const CurriculumConfig& cfg) {
  if (kappa < 1 || kappa > kNumBands) throw ConfigError("band index must be in 1..4");
  const double hard = (5.0 - kappa) / 4.0;
  return cfg.gamma_base * (1.0 + cfg.beta_margin * hard * tau);
}

struct CurriculumState {
  int epoch = 0;
  double tau = 0.0;
  std::array<double, kNumBands> weights{};
  std::array<double, kNumBands> margins{};

  // With static_mix the weights stay uniform and every margin is gamma_base.
  static CurriculumState at(int epoch, const CurriculumConfig& cfg, bool static_mix = false) {
    CurriculumState s;
    s.epoch = epoch;
    s.tau = static_cast<double>(epoch) / cfg.max_epochs;
    if (static_mix) {
      s.weights.fill(1.0 / kNumBands);
      s.margins.fill(cfg.gamma_base);
    } else {
      s.weights = band_weights(s.tau, cfg);
      for (int k = 1; k <= kNumBands; ++k) s.margins[k - 1] = margin(k, s.tau, cfg);
    }
    return s;
  }
};

// Stage-aware weighted margin loss.
//   pos_scores: Bx1 distances of positives, pos_bands their drawn bands.
//   neg_scores: Mx1 distances of band negatives, neg_bands their bands.
// Result: mean_i -log s(g_{k_i} - S_i)  -  (1/M) sum_j w_{k_j} log s(S~_j - g_{k_j}).
inline Var loss_kgc1(Tape& tape, Var pos_scores, std::span<const int> pos_bands, Var neg_scores,
                     std::span<const int> neg_bands, const CurriculumState& state) {
  const Index b = tape.value(pos_scores).rows();
  const Index m = tape.value(neg_scores).rows();
  if (static_cast<std::size_t>(b) != pos_bands.size() || static_cast<std::size_t>(m) != neg_bands.size())
    throw ShapeError("loss_kgc1: band lists do not match score rows");

  Matrix pos_gamma(b, 1);
  for (Index i = 0; i < b; ++i) pos_gamma(i, 0) = state.margins.at(pos_bands[i] - 1);
  Var pos_term = tape.scale(tape.mean(tape.log_sigmoid(tape.sub(tape.constant(pos_gamma), pos_scores))), -1.0);
  if (m == 0) {
    std::cerr << "warning: loss_kgc1 called without band negatives; using the positive term only\n";
    return pos_term;
  }
  Matrix neg_gamma(m, 1), weight(m, 1);
  for (Index j = 0; j < m; ++j) {
    neg_gamma(j, 0) = state.margins.at(neg_bands[j] - 1);
    weight(j, 0) = state.weights.at(neg_bands[j] - 1);
  }
  Var neg_log = tape.log_sigmoid(tape.sub(neg_scores, tape.constant(neg_gamma)));
  Var neg_term = tape.scale(tape.sum(tape.mul(tape.constant(weight), neg_log)), -1.0 / static_cast<double>(m));
  return tape.add(pos_term, neg_term);
}

// Fixed-margin loss against uniformly corrupted negatives.
//   pos_scores: Bx1; neg_scores: any shape, averaged over all entries.
inline Var loss_kgc2(Tape& tape, Var pos_scores, Var neg_scores, double gamma_base) {
  Var pos_term =
      tape.scale(tape.mean(tape.log_sigmoid(tape.scale(tape.add_scalar(pos_scores, -gamma_base), -1.0))), -1.0);
  if (tape.value(neg_scores).size() == 0) return pos_term;
  Var neg_term = tape.scale(tape.mean(tape.log_sigmoid(tape.add_scalar(neg_scores, -gamma_base))), -1.0);
  return tape.add(pos_term, neg_term);
}

inline double total_loss(double l_kgc1, double l_kgc2, double l_diff, double eta) {
  return eta * l_kgc1 + l_kgc2 + l_diff;
}

}  // namespace dans
