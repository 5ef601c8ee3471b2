#pragma once
// End-to-end training: pretraining, structural features, difficulty fit,
// semantic types, then the main loop that mixes diffusion-generated band
// negatives with uniform negatives under the curriculum.

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dans/checkpoint.hpp"
#include "dans/config.hpp"
#include "dans/curriculum.hpp"
#include "dans/dam.hpp"
#include "dans/diffusion.hpp"
#include "dans/eval.hpp"
#include "dans/graph_metrics.hpp"
#include "dans/kg_store.hpp"
#include "dans/nn.hpp"
#include "dans/pretrain.hpp"

namespace dans {

enum class Ablation { kNone, kDfsOff, kCcdOff, kDtmOff, kUniform };

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::kNone;
  if (s == "dfs_off") return Ablation::kDfsOff;
  if (s == "ccd_off") return Ablation::kCcdOff;
  if (s == "dtm_off") return Ablation::kDtmOff;
  if (s == "uniform") return Ablation::kUniform;
  throw ConfigError("unknown ablation variant '" + s + "'");
}

inline const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kNone: return "full";
    case Ablation::kDfsOff: return "dfs_off";
    case Ablation::kCcdOff: return "ccd_off";
    case Ablation::kDtmOff: return "dtm_off";
    case Ablation::kUniform: return "uniform";
  }
  return "?";
}

struct TrainConfig {
  std::uint64_t seed = 0;
  int dim = 200;
  int norm = 1;
  PretrainOptions pretrain;
  int types_k = 0;
  int types_max_iter = 100;
  DamOptions dam;

  NoiseScheduleConfig schedule;
  ReverseMode mode = ReverseMode::kStandard;
  int denoiser_hidden = 0;
  NormPlacement norm_placement = NormPlacement::kHidden;
  ChainStart chain_start = ChainStart::kPositive;
  int time_dim = 64;
  double diffusion_lr = 1e-3;
  int refresh = 1;
  int diffusion_positives = 0;
  int gen_block = 512;
  bool standardize = true;

  CurriculumConfig curriculum;

  double lr = 5e-5;
  int batch_size = 256;
  int epochs = 1500;
  int n_rand = 16;
  double weight_decay = 0.0;
  int patience = 100;
  int eval_every = 10;
  int checkpoint_every = 100;
  bool uniform_only = false;
  int max_restarts = 3;

  bool dfs_off = false;
  bool ccd_off = false;
  bool dtm_off = false;
  bool quiet = false;

  static TrainConfig from(const Config& c) {
    TrainConfig t;
    t.seed = static_cast<std::uint64_t>(c.integer("seed"));
    t.dim = static_cast<int>(c.integer("model.dim"));
    t.norm = static_cast<int>(c.integer("model.norm"));
    t.pretrain.dim = t.dim;
    t.pretrain.norm = t.norm;
    t.pretrain.epochs = static_cast<int>(c.integer("pretrain.epochs"));
    t.pretrain.lr = c.real("pretrain.lr");
    t.pretrain.batch_size = static_cast<int>(c.integer("pretrain.batch_size"));
    t.pretrain.negatives = static_cast<int>(c.integer("pretrain.negatives"));
    t.types_k = static_cast<int>(c.integer("types.k"));
    t.types_max_iter = static_cast<int>(c.integer("types.max_iter"));
    t.dam.hidden = static_cast<int>(c.integer("dam.hidden"));
    t.dam.steps = static_cast<int>(c.integer("dam.steps"));
    t.dam.lr = c.real("dam.lr");
    t.schedule.T = static_cast<int>(c.integer("diffusion.T"));
    t.schedule.beta_init = c.real("diffusion.beta_init");
    t.schedule.beta_low = c.real("diffusion.beta_low");
    t.schedule.beta_global = c.real("diffusion.beta_global");
    t.schedule.mu = c.real("diffusion.mu");
    t.mode = parse_reverse_mode(c.str("diffusion.mode"));
    t.denoiser_hidden = static_cast<int>(c.integer("diffusion.hidden"));
    t.time_dim = static_cast<int>(c.integer("diffusion.time_dim"));
    t.norm_placement = parse_norm_placement(c.str("diffusion.layer_norm"));
    t.chain_start = parse_chain_start(c.str("diffusion.start"));
    t.diffusion_lr = c.real("diffusion.lr");
    t.refresh = static_cast<int>(c.integer("diffusion.refresh"));
    t.diffusion_positives = static_cast<int>(c.integer("diffusion.loss_positives"));
    t.gen_block = static_cast<int>(c.integer("diffusion.gen_block"));
    t.standardize = c.boolean("diffusion.standardize");
    t.curriculum.lambda = c.real("curriculum.lambda");
    t.curriculum.zeta_exp = c.real("curriculum.zeta_exp");
    t.curriculum.gamma_base = c.real("curriculum.gamma_base");
    t.curriculum.beta_margin = c.real("curriculum.beta_margin");
    t.curriculum.eta = c.real("curriculum.eta");
    t.pretrain.gamma = t.curriculum.gamma_base;
    t.lr = c.real("train.lr");
    t.batch_size = static_cast<int>(c.integer("train.batch_size"));
    t.epochs = static_cast<int>(c.integer("train.epochs"));
    t.curriculum.max_epochs = t.epochs;
    t.n_rand = static_cast<int>(c.integer("train.n_rand"));
    t.weight_decay = c.real("train.weight_decay");
    t.patience = static_cast<int>(c.integer("train.patience"));
    t.eval_every = static_cast<int>(c.integer("train.eval_every"));
    t.checkpoint_every = static_cast<int>(c.integer("train.checkpoint_every"));
    t.uniform_only = c.boolean("train.uniform_only");
    t.max_restarts = static_cast<int>(c.integer("train.max_restarts"));
    t.dfs_off = c.boolean("ablation.dfs_off");
    t.ccd_off = c.boolean("ablation.ccd_off");
    t.dtm_off = c.boolean("ablation.dtm_off");
    t.quiet = c.boolean("log.quiet");
    t.validate();
    return t;
  }

  void validate() const {
    schedule.validate();
    curriculum.validate();
    if (dim <= 0) throw ConfigError("model.dim must be positive");
    if (norm != 1 && norm != 2) throw ConfigError("model.norm must be 1 or 2");
    if (batch_size <= 0 || pretrain.batch_size <= 0) throw ConfigError("batch sizes must be positive");
    if (n_rand < 0 || pretrain.negatives < 0) throw ConfigError("negative counts must be non-negative");
    if (!(lr > 0.0) || !(diffusion_lr > 0.0) || !(pretrain.lr > 0.0) || !(dam.lr > 0.0))
      throw ConfigError("learning rates must be positive");
    if (refresh <= 0) throw ConfigError("diffusion.refresh must be positive");
    if (eval_every <= 0 || checkpoint_every <= 0) throw ConfigError("train.eval_every and train.checkpoint_every must be positive");
    if (time_dim <= 0 || gen_block <= 0) throw ConfigError("diffusion.time_dim and diffusion.gen_block must be positive");
    if (pretrain.epochs < 0 || dam.steps < 0 || dam.hidden <= 0) throw ConfigError("invalid pretrain/dam settings");
  }

  DenoiserConfig denoiser_config() const {
    return {dim, denoiser_hidden > 0 ? denoiser_hidden : 2 * dim, time_dim, !ccd_off, norm_placement};
  }

  AnsOptions ans_options() const { return {schedule, mode, !dfs_off, chain_start}; }
};

inline TrainConfig ablation_variant(TrainConfig cfg, Ablation a) {
  switch (a) {
    case Ablation::kNone: break;
    case Ablation::kDfsOff: cfg.dfs_off = true; break;
    case Ablation::kCcdOff: cfg.ccd_off = true; break;
    case Ablation::kDtmOff: cfg.dtm_off = true; break;
    case Ablation::kUniform: cfg.uniform_only = true; break;
  }
  return cfg;
}

// Everything a checkpoint holds.
struct Model {
  TranslationalScorer scorer;
  SemanticTypes types;
  DamModel dam;
  std::vector<double> zeta;
  std::vector<double> proxy;
  Denoiser denoiser;

  bool has_types() const { return types.centroids.size() > 0; }
  bool has_dam() const { return !zeta.empty(); }
  bool has_denoiser() const { return !denoiser.mlp().layers.empty(); }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.dims = {scorer.entities.rows(), scorer.relations.rows(), scorer.entities.cols()};
    c.put("meta.scorer", Matrix::Constant(1, 1, scorer.norm));
    c.put("entities", scorer.entities.value);
    c.put("relations", scorer.relations.value);
    if (has_types()) {
      c.put("types.centroids", types.centroids);
      c.put("types.assignment", column(types.assignment));
    }
    if (has_dam()) {
      put_mlp(c, "dam", dam.mlp);
      c.put("dam.zeta", column(zeta));
      c.put("dam.proxy", column(proxy));
    }
    if (has_denoiser()) {
      const Denoiser& d = denoiser;
      const auto& dc = d.config();
      Matrix meta(1, 5);
      meta << dc.dim, dc.hidden, dc.time_dim, dc.conditional ? 1 : 0, dc.norm == NormPlacement::kHidden ? 1 : 0;
      c.put("meta.denoiser", meta);
      put_mlp(c, "denoiser", d.mlp());
      c.put("denoiser.ln.gain", d.norm().gain.value);
      c.put("denoiser.ln.shift", d.norm().shift.value);
    }
    return c;
  }

  static Model from_checkpoint(const Checkpoint& c) {
    Model m;
    m.scorer.entities = Tensor(c.get("entities"));
    m.scorer.relations = Tensor(c.get("relations"));
    m.scorer.norm = static_cast<int>(c.get("meta.scorer")(0, 0));
    if (c.has("types.centroids")) {
      m.types.centroids = c.get("types.centroids");
      for (Index i = 0; i < c.get("types.assignment").rows(); ++i)
        m.types.assignment.push_back(static_cast<int>(c.get("types.assignment")(i, 0)));
    }
    if (c.has("dam.zeta")) {
      m.dam.mlp = get_mlp(c, "dam");
      m.zeta = vec(c.get("dam.zeta"));
      m.proxy = vec(c.get("dam.proxy"));
    }
    if (c.has("meta.denoiser")) {
      const Matrix& meta = c.get("meta.denoiser");
      DenoiserConfig dc{static_cast<int>(meta(0, 0)), static_cast<int>(meta(0, 1)), static_cast<int>(meta(0, 2)),
                        meta(0, 3) != 0.0, meta(0, 4) != 0.0 ? NormPlacement::kHidden : NormPlacement::kOutput};
      Rng unused(0);
      m.denoiser = Denoiser(dc, unused);
      m.denoiser.mlp() = get_mlp(c, "denoiser");
      m.denoiser.norm().gain = Tensor(c.get("denoiser.ln.gain"));
      m.denoiser.norm().shift = Tensor(c.get("denoiser.ln.shift"));
    }
    return m;
  }

 private:
  template <typename T>
  static Matrix column(const std::vector<T>& v) {
    Matrix m(static_cast<Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Index>(i), 0) = static_cast<double>(v[i]);
    return m;
  }
  static std::vector<double> vec(const Matrix& m) { return std::vector<double>(m.data(), m.data() + m.size()); }
  static void put_mlp(Checkpoint& c, const std::string& prefix, const Mlp& mlp) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
      c.put(prefix + ".l" + std::to_string(i) + ".weight", mlp.layers[i].weight.value);
      c.put(prefix + ".l" + std::to_string(i) + ".bias", mlp.layers[i].bias.value);
    }
  }
  static Mlp get_mlp(const Checkpoint& c, const std::string& prefix) {
    Mlp mlp;
    for (std::size_t i = 0; c.has(prefix + ".l" + std::to_string(i) + ".weight"); ++i) {
      Linear l;
      l.weight = Tensor(c.get(prefix + ".l" + std::to_string(i) + ".weight"));
      l.bias = Tensor(c.get(prefix + ".l" + std::to_string(i) + ".bias"));
      mlp.layers.push_back(std::move(l));
    }
    return mlp;
  }
};

// Copies parameter values between two models of identical layout without
// moving the destination tensors (optimizers hold pointers to them).
inline void copy_model_values(const Model& src, Model& dst) {
  dst.scorer.entities.value = src.scorer.entities.value;
  dst.scorer.relations.value = src.scorer.relations.value;
  auto& sl = src.denoiser.mlp().layers;
  auto& dl = dst.denoiser.mlp().layers;
  for (std::size_t i = 0; i < sl.size() && i < dl.size(); ++i) {
    dl[i].weight.value = sl[i].weight.value;
    dl[i].bias.value = sl[i].bias.value;
  }
  dst.denoiser.norm().gain.value = src.denoiser.norm().gain.value;
  dst.denoiser.norm().shift.value = src.denoiser.norm().shift.value;
}

inline int resolve_num_types(const TrainConfig& cfg, int num_entities) {
  return cfg.types_k > 0 ? std::min(cfg.types_k, num_entities) : default_num_types(num_entities);
}

inline void init_denoiser(Model& model, const TrainConfig& cfg) {
  Rng rng = make_stream(cfg.seed, {stream::kBandGeneration, stream::kInit});
  model.denoiser = Denoiser(cfg.denoiser_config(), rng);
}

struct PrepareReport {
  EntityStructFeatures features;
  std::vector<double> pretrain_loss;
  bool pretrain_aborted = false;
  std::vector<double> dam_loss;
};

// Pretraining, structural features, difficulty fit and semantic types.
inline Model prepare_base(const KnowledgeGraph& kg, const TrainConfig& cfg, std::ostream& log,
                          PrepareReport* report = nullptr) {
  Model model;
  PretrainResult pre = pretrain(kg, cfg.pretrain, cfg.seed, log);
  if (pre.aborted) throw NumericalError("pretraining diverged");
  model.scorer = std::move(pre.scorer);
  if (!cfg.quiet && !pre.epoch_loss.empty())
    log << "pretrain: " << pre.epoch_loss.size() << " epochs, final loss " << pre.epoch_loss.back() << '\n';

  EntityStructFeatures features = compute_features(kg);
  if (!features.pagerank_converged) log << "warning: PageRank did not converge; using the last iterate\n";
  DamFit fit = fit_dam(kg, model.scorer, features, cfg.dam, cfg.seed);
  model.dam = std::move(fit.model);
  model.zeta = fit.zeta;
  model.proxy = fit.targets;

  Rng km = make_stream(cfg.seed, {stream::kKMeans});
  model.types = kmeans(model.scorer.entities.value, resolve_num_types(cfg, kg.num_entities), cfg.types_max_iter, km);

  if (report) {
    report->features = std::move(features);
    report->pretrain_loss = pre.epoch_loss;
    report->pretrain_aborted = pre.aborted;
    report->dam_loss = fit.loss;
  }
  return model;
}

inline Model prepare_model(const KnowledgeGraph& kg, const TrainConfig& cfg, std::ostream& log,
                           PrepareReport* report = nullptr) {
  Model m = prepare_base(kg, cfg, log, report);
  init_denoiser(m, cfg);
  return m;
}

struct EpochLog {
  int epoch = 0;
  double tau = 0.0;
  std::array<double, kNumBands> weights{};
  std::array<double, kNumBands> margins{};
  double l_kgc1 = 0.0;
  double l_kgc2 = 0.0;
  double l_diff = 0.0;
  double total = 0.0;
};

inline void write_epoch_csv(const std::vector<EpochLog>& logs, std::ostream& out) {
  out << "epoch,tau,w1,w2,w3,w4,gamma_1,gamma_2,gamma_3,gamma_4,l_kgc1,l_kgc2,l_diff,total\n"
      << std::setprecision(17);
  for (const auto& l : logs) {
    out << l.epoch << ',' << l.tau;
    for (double w : l.weights) out << ',' << w;
    for (double g : l.margins) out << ',' << g;
    out << ',' << l.l_kgc1 << ',' << l.l_kgc2 << ',' << l.l_diff << ',' << l.total << '\n';
  }
}

struct ValidPoint {
  int epoch;
  Metrics metrics;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::vector<ValidPoint> valid;
  int best_epoch = 0;
  double best_valid_mrr = -1.0;
  int restarts = 0;
  bool early_stopped = false;
};

struct TrainHooks {
  std::function<void(int epoch, Model&)> before_epoch;
  std::filesystem::path output_dir;  // empty: no checkpoint files
};

class Trainer {
 public:
  Trainer(const KnowledgeGraph& kg, Model& model, TrainConfig cfg)
      : kg_(kg),
        model_(model),
        cfg_(std::move(cfg)),
        embed_opt_(model_.scorer.parameters(), {cfg_.lr, 0.9, 0.999, 1e-8, cfg_.weight_decay}),
        shuffle_rng_(make_stream(cfg_.seed, {stream::kShuffle})),
        corrupt_rng_(make_stream(cfg_.seed, {stream::kUniformNegatives})),
        band_rng_(make_stream(cfg_.seed, {stream::kBandChoice})),
        diff_rng_(make_stream(cfg_.seed, {stream::kDiffusionLoss})) {
    cfg_.curriculum.max_epochs = cfg_.epochs;
    cfg_.validate();
    if (!model_.has_dam() || !model_.has_types()) throw ConfigError("trainer needs a fitted difficulty model and types");
    if (!cfg_.uniform_only) {
      if (!model_.has_denoiser()) init_denoiser(model_, cfg_);
      diff_opt_ = AdamW(model_.denoiser.parameters(), {cfg_.diffusion_lr, 0.9, 0.999, 1e-8, 0.0});
    }
    type_table_ = model_.types.entity_types();
    order_.resize(kg_.train.size());
    std::iota(order_.begin(), order_.end(), 0);
    stream_ids_.resize(kg_.train.size());
    std::iota(stream_ids_.begin(), stream_ids_.end(), 0);
  }

  int epoch() const { return epoch_; }
  const TrainConfig& config() const { return cfg_; }
  const std::array<Matrix, kNumBands>& band_cache() const { return cache_; }

  // Type embeddings are the frozen pretraining centroids.
  EmbeddingSpace space() const {
    const Matrix& ent = model_.scorer.entities.value;
    return {&ent, &model_.scorer.relations.value, &type_table_, cfg_.standardize ? embedding_scale(ent) : 1.0};
  }

  void regenerate_bands(std::uint64_t round) {
    cache_ = generate_band_matrices(model_.denoiser, kg_.train, stream_ids_, space(), model_.zeta, cfg_.ans_options(),
                                    cfg_.seed, round, static_cast<std::size_t>(cfg_.gen_block));
    cache_round_ = static_cast<long>(round);
  }

  EpochLog run_epoch() {
    const int e = epoch_ + 1;
    const CurriculumState state = CurriculumState::at(e, cfg_.curriculum, cfg_.dtm_off);
    const bool dans = !cfg_.uniform_only;
    if (dans && (cache_round_ < 0 || (e - 1) % cfg_.refresh == 0)) regenerate_bands(static_cast<std::uint64_t>(e));

    std::shuffle(order_.begin(), order_.end(), shuffle_rng_);
    std::discrete_distribution<int> band_dist(state.weights.begin(), state.weights.end());

    EpochLog log;
    log.epoch = e;
    log.tau = state.tau;
    log.weights = state.weights;
    log.margins = state.margins;
    std::size_t batches = 0;
    std::vector<int> ph, pr, pt, nh, nr, nt, kappa;
    std::vector<Triple> diff_batch;
    const auto& TS = model_.scorer;
    for (std::size_t start = 0; start < order_.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
      const std::size_t end = std::min(order_.size(), start + static_cast<std::size_t>(cfg_.batch_size));
      const Index b = static_cast<Index>(end - start);
      ph.clear(), pr.clear(), pt.clear(), nh.clear(), nr.clear(), nt.clear(), kappa.clear();
      Matrix band_tails(dans ? b : 0, TS.dim());
      for (std::size_t i = start; i < end; ++i) {
        const Triple& t = kg_.train[order_[i]];
        ph.push_back(t.head), pr.push_back(t.relation), pt.push_back(t.tail);
        if (dans) {
          const int k = band_dist(band_rng_) + 1;
          kappa.push_back(k);
          band_tails.row(static_cast<Index>(i - start)) = cache_[k - 1].row(static_cast<Index>(order_[i]));
        }
        for (int j = 0; j < cfg_.n_rand; ++j) {
          Corruption c = corrupt_uniform(kg_, t, corrupt_rng_);
          if (c.degenerate) break;
          const Triple& neg = c.triple;
          nh.push_back(neg.head), nr.push_back(neg.relation), nt.push_back(neg.tail);
        }
      }

      Tape tape;
      Var ent = tape.param(model_.scorer.entities), rel = tape.param(model_.scorer.relations);
      Var pos = TS.score(tape, ent, rel, ph, pr, pt);
      Var neg = TS.score(tape, ent, rel, nh, nr, nt);
      Var l2 = loss_kgc2(tape, pos, neg, cfg_.curriculum.gamma_base);
      Var loss = l2;
      double l1_value = 0.0;
      if (dans) {
        Var band_scores = TS.score(tape, ent, rel, ph, pr, tape.constant(std::move(band_tails)));
        Var l1 = loss_kgc1(tape, pos, kappa, band_scores, kappa, state);
        loss = tape.add(tape.scale(l1, cfg_.curriculum.eta), l2);
        l1_value = tape.item(l1);
      }
      embed_opt_.zero_grad();
      tape.backward(loss);
      embed_opt_.step();

      double ldiff_value = 0.0;
      if (dans) {
        const std::size_t m = cfg_.diffusion_positives > 0
                                  ? std::min<std::size_t>(end - start, static_cast<std::size_t>(cfg_.diffusion_positives))
                                  : end - start;
        diff_batch.clear();
        for (std::size_t i = start; i < start + m; ++i) diff_batch.push_back(kg_.train[order_[i]]);
        Tape dtape;
        Var ld = diffusion_loss(dtape, model_.denoiser, diff_batch, space(), model_.zeta, cfg_.ans_options(), diff_rng_);
        diff_opt_.zero_grad();
        dtape.backward(ld);
        diff_opt_.step();
        ldiff_value = dtape.item(ld);
      }

      log.l_kgc1 += l1_value;
      log.l_kgc2 += tape.item(l2);
      log.l_diff += ldiff_value;
      ++batches;
    }
    if (batches > 0) {
      log.l_kgc1 /= static_cast<double>(batches);
      log.l_kgc2 /= static_cast<double>(batches);
      log.l_diff /= static_cast<double>(batches);
    }
    log.total = total_loss(log.l_kgc1, log.l_kgc2, log.l_diff, dans ? cfg_.curriculum.eta : 0.0);
    epoch_ = e;
    return log;
  }

  // Complete resumable state: parameters, optimizer moments, random streams
  // and the band cache.
  struct Snapshot {
    int epoch = 0;
    Model model;
    AdamW::State embed_opt, diff_opt;
    Rng shuffle_rng, corrupt_rng, band_rng, diff_rng;
    std::vector<std::size_t> order;
    std::array<Matrix, kNumBands> cache;
    long cache_round = -1;
  };

  Snapshot snapshot() const {
    return {epoch_,         model_,      embed_opt_.state(), diff_opt_.state(), shuffle_rng_, corrupt_rng_,
            band_rng_,      diff_rng_,   order_,             cache_,            cache_round_};
  }

  void restore(const Snapshot& s) {
    epoch_ = s.epoch;
    copy_model_values(s.model, model_);
    embed_opt_.restore(s.embed_opt);
    diff_opt_.restore(s.diff_opt);
    shuffle_rng_ = s.shuffle_rng;
    corrupt_rng_ = s.corrupt_rng;
    band_rng_ = s.band_rng;
    diff_rng_ = s.diff_rng;
    order_ = s.order;
    cache_ = s.cache;
    cache_round_ = s.cache_round;
  }

  void scale_learning_rates(double factor) {
    embed_opt_.set_lr(embed_opt_.lr() * factor);
    diff_opt_.set_lr(diff_opt_.lr() * factor);
  }

  double learning_rate() const { return embed_opt_.lr(); }

  TrainResult run(const TrainHooks& hooks = {}, std::ostream& log = std::cerr) {
    TrainResult res;
    Snapshot last = snapshot();
    Model best = model_;
    const bool has_valid = !kg_.valid.empty();
    auto clock_start = std::chrono::steady_clock::now();
    auto save = [&](const Model& m, const char* name) {
      if (!hooks.output_dir.empty()) save_checkpoint(m.to_checkpoint(), hooks.output_dir / name);
    };

    while (epoch_ < cfg_.epochs) {
      EpochLog row;
      try {
        if (hooks.before_epoch) hooks.before_epoch(epoch_ + 1, model_);
        row = run_epoch();
      } catch (const NumericalError& err) {
        if (res.restarts >= cfg_.max_restarts)
          throw NumericalError(std::string("training aborted after ") + std::to_string(res.restarts) +
                               " restarts: " + err.what());
        const double lr = embed_opt_.lr(), dlr = diff_opt_.lr();
        restore(last);
        embed_opt_.set_lr(0.5 * lr);
        diff_opt_.set_lr(0.5 * dlr);
        ++res.restarts;
        while (!res.epochs.empty() && res.epochs.back().epoch > epoch_) res.epochs.pop_back();
        while (!res.valid.empty() && res.valid.back().epoch > epoch_) res.valid.pop_back();
        log << "warning: " << err.what() << "; restored epoch " << epoch_ << " and halved lr to " << learning_rate()
            << '\n';
        continue;
      }
      res.epochs.push_back(row);
      const int e = epoch_;

      if (has_valid && (e % cfg_.eval_every == 0 || e == cfg_.epochs)) {
        Metrics m = evaluate(kg_, kg_.valid, model_.scorer).metrics;
        res.valid.push_back({e, m});
        if (m.mrr > res.best_valid_mrr) {
          res.best_valid_mrr = m.mrr;
          res.best_epoch = e;
          best = model_;
          save(best, "best.ckpt");
        }
        if (!cfg_.quiet) {
          double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
          log << "epoch " << e << " loss " << row.total << " valid_mrr " << m.mrr << " (" << std::fixed
              << std::setprecision(1) << secs << "s)\n";
          log.unsetf(std::ios::floatfield);
          log << std::setprecision(6);
        }
      }
      if (e % cfg_.checkpoint_every == 0) {
        last = snapshot();
        save(model_, "last.ckpt");
      }
      if (has_valid && cfg_.patience > 0 && res.best_epoch > 0 && e - res.best_epoch >= cfg_.patience) {
        res.early_stopped = true;
        break;
      }
    }
    if (has_valid && res.best_epoch > 0) copy_model_values(best, model_);
    save(model_, "final.ckpt");
    return res;
  }

 private:
  const KnowledgeGraph& kg_;
  Model& model_;
  TrainConfig cfg_;
  AdamW embed_opt_;
  AdamW diff_opt_;
  Rng shuffle_rng_, corrupt_rng_, band_rng_, diff_rng_;
  Matrix type_table_;
  std::vector<std::size_t> order_;
  std::vector<std::uint64_t> stream_ids_;
  std::array<Matrix, kNumBands> cache_;
  long cache_round_ = -1;
  int epoch_ = 0;
};

}  // namespace dans
