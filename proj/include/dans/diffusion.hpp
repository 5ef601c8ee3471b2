#pragma once
// Difficulty-aware forward noising and condition-constrained reverse
// denoising in the entity embedding space.
//
// Each entity x gets an upper noise bound
//   beta_max(x) = beta_low + (beta_global - beta_low) * zeta(x)^mu
// and a linear schedule beta_t(x) = beta_init + (t/T)(beta_max(x) - beta_init).
// A denoiser eps_theta(x_t, t, x_type, x_e + x_r), an MLP with LayerNorm, is
// trained with the noise-prediction MSE; negatives are read off the reverse
// chain at t in {T/20, T/10, T/5, T/2}.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dans/autodiff.hpp"
#include "dans/curriculum.hpp"
#include "dans/error.hpp"
#include "dans/kg_store.hpp"
#include "dans/nn.hpp"
#include "dans/rng.hpp"

namespace dans {

struct NoiseScheduleConfig {
  double beta_init = 1e-4;
  double beta_low = 5e-3;
  double beta_global = 5e-2;
  double mu = 1.0;
  int T = 200;

  void validate() const {
    if (!(0.0 < beta_init && beta_init <= beta_low && beta_low <= beta_global && beta_global < 1.0))
      throw ConfigError("diffusion betas must satisfy 0 < beta_init <= beta_low <= beta_global < 1");
    if (!(mu > 0.0)) throw ConfigError("diffusion.mu must be > 0");
    if (T < 20) throw ConfigError("diffusion.T must be >= 20");
  }
};

inline double beta_max(double zeta, const NoiseScheduleConfig& cfg) {
  return cfg.beta_low + (cfg.beta_global - cfg.beta_low) * std::pow(zeta, cfg.mu);
}

inline double beta_t(int t, double bmax, const NoiseScheduleConfig& cfg) {
  return cfg.beta_init + (static_cast<double>(t) / cfg.T) * (bmax - cfg.beta_init);
}

// beta, alpha = 1 - beta and alpha_bar = prod alpha, indexed by t = 0..T.
// alpha_bar(0) = 1; beta(0) is the t = 0 value of the schedule.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  static NoiseSchedule build(double bmax, const NoiseScheduleConfig& cfg) {
    std::vector<double> betas(cfg.T + 1);
    for (int t = 0; t <= cfg.T; ++t) betas[t] = beta_t(t, bmax, cfg);
    return from_betas(std::move(betas));
  }

  // betas[t] for t = 0..T.
  static NoiseSchedule from_betas(std::vector<double> betas) {
    if (betas.size() < 2) throw ConfigError("noise schedule needs T >= 1");
    NoiseSchedule s;
    s.beta_ = std::move(betas);
    s.alpha_.resize(s.beta_.size());
    s.alpha_bar_.resize(s.beta_.size());
    s.alpha_bar_[0] = 1.0;
    for (std::size_t t = 0; t < s.beta_.size(); ++t) {
      s.alpha_[t] = 1.0 - s.beta_[t];
      if (t > 0) s.alpha_bar_[t] = s.alpha_bar_[t - 1] * s.alpha_[t];
    }
    return s;
  }

  int T() const { return static_cast<int>(beta_.size()) - 1; }
  double beta(int t) const { return beta_.at(t); }
  double alpha(int t) const { return alpha_.at(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(t); }

 private:
  std::vector<double> beta_, alpha_, alpha_bar_;
};

inline Matrix standard_normal_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    fill_standard_normal(rng, m.row(i).data(), static_cast<std::size_t>(cols));
  return m;
}

// Closed-form draw x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
inline Matrix forward_sample(const Matrix& x0, int t, const NoiseSchedule& s, Rng& rng) {
  const double ab = s.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * standard_normal_matrix(x0.rows(), x0.cols(), rng);
}

// One Markov step x_t ~ N(sqrt(1 - beta_t) x_{t-1}, beta_t I).
inline Matrix forward_step(const Matrix& x_prev, int t, const NoiseSchedule& s, Rng& rng) {
  const double b = s.beta(t);
  return std::sqrt(1.0 - b) * x_prev + std::sqrt(b) * standard_normal_matrix(x_prev.rows(), x_prev.cols(), rng);
}

enum class ReverseMode { kStandard, kLiteral };

inline ReverseMode parse_reverse_mode(const std::string& s) {
  if (s == "standard") return ReverseMode::kStandard;
  if (s == "literal") return ReverseMode::kLiteral;
  throw ConfigError("diffusion.mode must be 'standard' or 'literal', got '" + s + "'");
}

// x_{t-1} = x_t / sqrt(a_t) - c_t eps_hat + sqrt(b_t) z, where
//   standard:      c_t = b_t / (sqrt(a_t) sqrt(1 - abar_t))
//   literal: c_t = (1 - sqrt(a_t)) / (sqrt(a_t) sqrt(1 - a_t))
// A step with beta_t = 0 is the identity.
inline RowVector reverse_update(const RowVector& x_t, const RowVector& eps_hat, const RowVector& z, double beta,
                                double alpha_bar, ReverseMode mode) {
  if (beta == 0.0) return x_t;
  const double alpha = 1.0 - beta;
  if (alpha <= 0.0 || alpha_bar >= 1.0 || beta < 0.0)
    throw ConfigError("reverse step needs 0 < alpha_t and alpha_bar_t < 1 (beta_t=" + std::to_string(beta) +
                      ", alpha_bar_t=" + std::to_string(alpha_bar) + ")");
  const double sa = std::sqrt(alpha);
  const double coef = mode == ReverseMode::kStandard ? beta / (sa * std::sqrt(1.0 - alpha_bar))
                                                     : (1.0 - sa) / (sa * std::sqrt(1.0 - alpha));
  return x_t / sa - coef * eps_hat + std::sqrt(beta) * z;
}

inline Matrix time_embeddings(std::span<const int> ts, int dim) {
  Matrix out(static_cast<Index>(ts.size()), dim);
  for (std::size_t i = 0; i < ts.size(); ++i) out.row(static_cast<Index>(i)) = time_embedding(ts[i], dim);
  return out;
}

// Where the denoiser's LayerNorm sits: on the network output, or on the last
// hidden layer in front of a linear read-out.
enum class NormPlacement { kOutput, kHidden };

inline NormPlacement parse_norm_placement(const std::string& s) {
  if (s == "output") return NormPlacement::kOutput;
  if (s == "hidden") return NormPlacement::kHidden;
  throw ConfigError("diffusion.layer_norm must be 'output' or 'hidden', got '" + s + "'");
}

inline const char* norm_placement_name(NormPlacement p) { return p == NormPlacement::kOutput ? "output" : "hidden"; }

struct DenoiserConfig {
  int dim = 200;
  int hidden = 400;
  int time_dim = 64;
  bool conditional = true;  // false drops x_type and x_e + x_r from the input
  NormPlacement norm = NormPlacement::kHidden;

  int input_dim() const { return dim + time_dim + (conditional ? 2 * dim : 0); }
  int norm_dim() const { return norm == NormPlacement::kOutput ? dim : hidden; }
};

// Two ReLU hidden layers over [x_t; t-emb; x_type; x_e + x_r].
//   output: eps_theta = LayerNorm(MLP(.))
//   hidden: eps_theta = W LayerNorm(h_2) + b
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const DenoiserConfig& cfg, Rng& rng)
      : cfg_(cfg), mlp_({cfg.input_dim(), cfg.hidden, cfg.hidden, cfg.dim}, rng), norm_(cfg.norm_dim()) {}

  const DenoiserConfig& config() const { return cfg_; }

  Var forward(Tape& tape, Var x_t, const Matrix& t_embed, Var type, Var cond) {
    std::vector<Var> parts{x_t, tape.constant(t_embed)};
    if (cfg_.conditional) {
      parts.push_back(type);
      parts.push_back(cond);
    }
    Var x = tape.concat_cols(parts);
    if (cfg_.norm == NormPlacement::kOutput) return norm_.forward(tape, mlp_.forward(tape, x));
    auto& layers = mlp_.layers;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) x = tape.relu(layers[i].forward(tape, x));
    return layers.back().forward(tape, norm_.forward(tape, x));
  }

  // Rows of x_t, type and cond are aligned; ts gives each row's timestep.
  Matrix predict_noise(const Matrix& x_t, std::span<const int> ts, const Matrix& type, const Matrix& cond) {
    Tape tape;
    Var out = forward(tape, tape.constant(x_t), time_embeddings(ts, cfg_.time_dim), tape.constant(type),
                      tape.constant(cond));
    return tape.value(out);
  }

  std::vector<Tensor*> parameters() {
    auto p = mlp_.parameters();
    p.push_back(&norm_.gain);
    p.push_back(&norm_.shift);
    return p;
  }

  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }
  LayerNorm& norm() { return norm_; }
  const LayerNorm& norm() const { return norm_; }

 private:
  DenoiserConfig cfg_;
  Mlp mlp_;
  LayerNorm norm_;
};

// Start of the reverse chain: the positive's tail noised to step T, or a
// draw from N(0, I).
enum class ChainStart { kPositive, kNoise };

inline ChainStart parse_chain_start(const std::string& s) {
  if (s == "positive") return ChainStart::kPositive;
  if (s == "noise") return ChainStart::kNoise;
  throw ConfigError("diffusion.start must be 'positive' or 'noise', got '" + s + "'");
}

struct AnsOptions {
  NoiseScheduleConfig schedule;
  ReverseMode mode = ReverseMode::kStandard;
  bool difficulty_aware = true;  // false: beta_max = beta_global for every entity
  ChainStart start = ChainStart::kPositive;
};

inline NoiseSchedule entity_schedule(double zeta, const AnsOptions& opt) {
  return NoiseSchedule::build(opt.difficulty_aware ? beta_max(zeta, opt.schedule) : opt.schedule.beta_global,
                              opt.schedule);
}

// Views of the current embedding tables. All embedding-space quantities are
// divided by `scale` before entering the diffusion model and generated
// embeddings are multiplied back.
struct EmbeddingSpace {
  const Matrix* entities = nullptr;
  const Matrix* relations = nullptr;
  const Matrix* types = nullptr;  // per-entity type embedding, |E| x d
  double scale = 1.0;
};

// Root mean square of the table entries; 1 for an all-zero table.
inline double embedding_scale(const Matrix& table) {
  const double rms = std::sqrt(table.squaredNorm() / static_cast<double>(std::max<Index>(1, table.size())));
  return rms > 0.0 ? rms : 1.0;
}

struct DiffusionInputs {
  Matrix x0, type, cond;
};

inline DiffusionInputs diffusion_inputs(std::span<const Triple> positives, const EmbeddingSpace& space) {
  const Index n = static_cast<Index>(positives.size());
  const Index d = space.entities->cols();
  DiffusionInputs in{Matrix(n, d), Matrix(n, d), Matrix(n, d)};
  const double inv = 1.0 / space.scale;
  for (Index i = 0; i < n; ++i) {
    const Triple& p = positives[i];
    in.x0.row(i) = space.entities->row(p.tail) * inv;
    in.type.row(i) = space.types->row(p.head) * inv;
    in.cond.row(i) = (space.entities->row(p.head) + space.relations->row(p.relation)) * inv;
  }
  return in;
}

// One reverse step for a block of rows with per-row schedules and streams.
// The step into t = 0 adds no noise.
inline Matrix reverse_step(Denoiser& denoiser, const Matrix& x_t, int t, const Matrix& type, const Matrix& cond,
                           std::span<const NoiseSchedule> schedules, std::span<Rng> rngs, ReverseMode mode) {
  std::vector<int> ts(static_cast<std::size_t>(x_t.rows()), t);
  Matrix eps_hat = denoiser.predict_noise(x_t, ts, type, cond);
  Matrix out(x_t.rows(), x_t.cols());
  RowVector z(x_t.cols());
  for (Index i = 0; i < x_t.rows(); ++i) {
    fill_standard_normal(rngs[i], z.data(), static_cast<std::size_t>(z.size()));
    if (t == 1) z.setZero();  // the last step returns the mean
    out.row(i) = reverse_update(x_t.row(i), eps_hat.row(i), z, schedules[i].beta(t), schedules[i].alpha_bar(t), mode);
  }
  return out;
}

struct NegativeBandSet {
  std::array<int, kNumBands> timesteps{};
  std::array<RowVector, kNumBands> tails;  // band k at index k-1
};

// Generated tails for a list of positives, one N x d matrix per band.
// Row i uses the random stream (seed, round, stream_ids[i]) so results do not
// depend on how positives are grouped into blocks.
inline std::array<Matrix, kNumBands> generate_band_matrices(Denoiser& denoiser, std::span<const Triple> positives,
                                                            std::span<const std::uint64_t> stream_ids,
                                                            const EmbeddingSpace& space, std::span<const double> zeta,
                                                            const AnsOptions& opt, std::uint64_t seed,
                                                            std::uint64_t round, std::size_t block = 512) {
  const int T = opt.schedule.T;
  const auto steps = band_timesteps(T);
  const Index n = static_cast<Index>(positives.size());
  const Index d = space.entities->cols();
  std::array<Matrix, kNumBands> bands;
  for (auto& b : bands) b.resize(n, d);

  for (Index start = 0; start < n; start += static_cast<Index>(block)) {
    const Index m = std::min<Index>(static_cast<Index>(block), n - start);
    auto chunk = positives.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(m));
    DiffusionInputs in = diffusion_inputs(chunk, space);
    std::vector<NoiseSchedule> schedules;
    std::vector<Rng> rngs;
    schedules.reserve(m);
    rngs.reserve(m);
    for (Index i = 0; i < m; ++i) {
      schedules.push_back(entity_schedule(zeta[chunk[i].tail], opt));
      rngs.push_back(make_stream(seed, {stream::kBandGeneration, round, stream_ids[start + i]}));
    }
    Matrix x(m, d);
    for (Index i = 0; i < m; ++i) {
      fill_standard_normal(rngs[i], x.row(i).data(), static_cast<std::size_t>(d));
      if (opt.start == ChainStart::kPositive) {
        const double ab = schedules[i].alpha_bar(T);
        x.row(i) = std::sqrt(ab) * in.x0.row(i) + std::sqrt(1.0 - ab) * x.row(i);
      }
    }
    for (int t = T; t > steps[0]; --t) {
      x = reverse_step(denoiser, x, t, in.type, in.cond, schedules, rngs, opt.mode);
      // x now holds x_{t-1}
      for (int k = 0; k < kNumBands; ++k)
        if (steps[k] == t - 1) bands[k].middleRows(start, m) = x * space.scale;
    }
  }
  return bands;
}

inline std::vector<NegativeBandSet> generate_bands(Denoiser& denoiser, std::span<const Triple> positives,
                                                   std::span<const std::uint64_t> stream_ids,
                                                   const EmbeddingSpace& space, std::span<const double> zeta,
                                                   const AnsOptions& opt, std::uint64_t seed, std::uint64_t round) {
  auto mats = generate_band_matrices(denoiser, positives, stream_ids, space, zeta, opt, seed, round);
  std::vector<NegativeBandSet> out(positives.size());
  const auto steps = band_timesteps(opt.schedule.T);
  for (std::size_t i = 0; i < positives.size(); ++i) {
    out[i].timesteps = steps;
    for (int k = 0; k < kNumBands; ++k) out[i].tails[k] = mats[k].row(static_cast<Index>(i));
  }
  return out;
}

// Noise-prediction MSE: mean over positives of ||eps_theta - eps||^2 with
// t ~ U{1..T} per positive. Embedding inputs enter as constants.
inline Var diffusion_loss(Tape& tape, Denoiser& denoiser, std::span<const Triple> positives,
                          const EmbeddingSpace& space, std::span<const double> zeta, const AnsOptions& opt, Rng& rng) {
  const Index n = static_cast<Index>(positives.size());
  DiffusionInputs in = diffusion_inputs(positives, space);
  std::vector<int> ts(static_cast<std::size_t>(n));
  Matrix eps(n, in.x0.cols()), x_t(n, in.x0.cols());
  std::uniform_int_distribution<int> pick_t(1, opt.schedule.T);
  for (Index i = 0; i < n; ++i) {
    ts[i] = pick_t(rng);
    NoiseSchedule s = entity_schedule(zeta[positives[i].tail], opt);
    const double ab = s.alpha_bar(ts[i]);
    fill_standard_normal(rng, eps.row(i).data(), static_cast<std::size_t>(eps.cols()));
    x_t.row(i) = std::sqrt(ab) * in.x0.row(i) + std::sqrt(1.0 - ab) * eps.row(i);
  }
  Var pred = denoiser.forward(tape, tape.constant(x_t), time_embeddings(ts, denoiser.config().time_dim),
                              tape.constant(in.type), tape.constant(in.cond));
  return tape.mse(pred, tape.constant(eps));
}

}  // namespace dans
