#pragma once
// Command-line front end: `dans <subcommand> [--config file] [--key value]...`.
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numerical abort.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "dans/config.hpp"
#include "dans/trainer.hpp"

namespace dans {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

// Training allocates and frees many large temporaries; keeping freed memory
// in the heap instead of returning it to the OS avoids page-fault churn.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

inline std::string usage_text() {
  std::ostringstream u;
  u << "usage: dans <subcommand> [--config FILE] [--KEY VALUE | --KEY=VALUE]...\n\n"
       "subcommands:\n"
       "  features   structural features of every entity -> features.csv\n"
       "  pretrain   uniform-negative pretraining and K-means types -> pretrain.ckpt, types.csv\n"
       "  fit-dam    difficulty scores from a pretrain checkpoint -> dam.ckpt, difficulty.csv\n"
       "  train      full training -> best.ckpt, final.ckpt, epochs.csv, valid.csv, metrics.txt, ranks.csv\n"
       "  eval       filtered MRR / Hits@1 / Hits@10 of a checkpoint -> metrics_<split>.txt, ranks_<split>.csv\n"
       "  ablate     train each variant for several seeds -> ablate.csv\n"
       "  hardness   band hardness diagnostics of a checkpoint -> hardness.csv\n\n"
       "keys (default):\n";
  for (const auto& k : Config::keys())
    u << "  --" << std::left << std::setw(26) << k.name << ' ' << std::setw(30)
      << (std::string(k.default_value).empty() ? "(none)" : k.default_value) << ' ' << k.help << '\n';
  return u.str();
}

struct CliContext {
  Config config;
  std::ostream& out;
  std::ostream& log;
  std::filesystem::path output_dir() const { return config.str("output.dir"); }
};

namespace cli_detail {

inline std::ostream& null_stream() {
  static std::ostream s(nullptr);
  return s;
}

inline KnowledgeGraph load_graph(const CliContext& ctx) {
  return load_dataset(ctx.config.required("data.dir"), ctx.config.boolean("data.add_inverses"), ctx.log);
}

inline std::ofstream open_output(const CliContext& ctx, const std::string& name) {
  std::filesystem::create_directories(ctx.output_dir());
  const auto path = ctx.output_dir() / name;
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  return f;
}

inline Model load_model(const CliContext& ctx, const KnowledgeGraph& kg) {
  const std::string path = ctx.config.required("checkpoint");
  Model m = Model::from_checkpoint(load_checkpoint(path));
  if (m.scorer.entities.rows() != kg.num_entities || m.scorer.relations.rows() != kg.num_relations)
    throw DataError("checkpoint " + path + " holds " + std::to_string(m.scorer.entities.rows()) + " entities and " +
                    std::to_string(m.scorer.relations.rows()) + " relations; dataset has " +
                    std::to_string(kg.num_entities) + " and " + std::to_string(kg.num_relations));
  return m;
}

inline void print_metrics(const CliContext& ctx, const Metrics& m, const std::string& file) {
  write_metrics(m, ctx.out);
  auto f = open_output(ctx, file);
  write_metrics(m, f);
}

// Fills in whatever a partial checkpoint lacks (difficulty, types).
inline void complete_model(Model& model, const KnowledgeGraph& kg, const TrainConfig& cfg) {
  if (!model.has_dam()) {
    DamFit fit = fit_dam(kg, model.scorer, compute_features(kg), cfg.dam, cfg.seed);
    model.dam = std::move(fit.model);
    model.zeta = std::move(fit.zeta);
    model.proxy = std::move(fit.targets);
  }
  if (!model.has_types()) {
    Rng km = make_stream(cfg.seed, {stream::kKMeans});
    model.types =
        kmeans(model.scorer.entities.value, resolve_num_types(cfg, kg.num_entities), cfg.types_max_iter, km);
  }
}

inline int cmd_features(CliContext& ctx) {
  KnowledgeGraph kg = load_graph(ctx);
  EntityStructFeatures f = compute_features(kg);
  if (!f.pagerank_converged) ctx.log << "warning: PageRank did not converge; using the last iterate\n";
  auto file = open_output(ctx, "features.csv");
  write_features_csv(f, file);
  ctx.out << "entities=" << kg.num_entities << "\nfeatures=" << (ctx.output_dir() / "features.csv").string() << '\n';
  return kExitOk;
}

inline int cmd_pretrain(CliContext& ctx) {
  KnowledgeGraph kg = load_graph(ctx);
  TrainConfig cfg = TrainConfig::from(ctx.config);
  PretrainResult pre = pretrain(kg, cfg.pretrain, cfg.seed, ctx.log);
  if (pre.aborted) throw NumericalError("pretraining diverged; last finite embeddings kept");
  Model m;
  m.scorer = std::move(pre.scorer);
  Rng km = make_stream(cfg.seed, {stream::kKMeans});
  m.types = kmeans(m.scorer.entities.value, resolve_num_types(cfg, kg.num_entities), cfg.types_max_iter, km);
  std::filesystem::create_directories(ctx.output_dir());
  save_checkpoint(m.to_checkpoint(), ctx.output_dir() / "pretrain.ckpt");
  auto types = open_output(ctx, "types.csv");
  types << "entity_id,cluster_id\n";
  for (std::size_t e = 0; e < m.types.assignment.size(); ++e) types << e << ',' << m.types.assignment[e] << '\n';
  ctx.out << std::setprecision(10) << "epochs=" << pre.epoch_loss.size()
          << "\nfinal_loss=" << (pre.epoch_loss.empty() ? 0.0 : pre.epoch_loss.back()) << "\ntypes=" << m.types.k()
          << '\n';
  return kExitOk;
}

inline int cmd_fit_dam(CliContext& ctx) {
  KnowledgeGraph kg = load_graph(ctx);
  TrainConfig cfg = TrainConfig::from(ctx.config);
  Model m = load_model(ctx, kg);
  DamFit fit = fit_dam(kg, m.scorer, compute_features(kg), cfg.dam, cfg.seed);
  m.dam = fit.model;
  m.zeta = fit.zeta;
  m.proxy = fit.targets;
  std::filesystem::create_directories(ctx.output_dir());
  save_checkpoint(m.to_checkpoint(), ctx.output_dir() / "dam.ckpt");
  auto file = open_output(ctx, "difficulty.csv");
  write_difficulty_csv(fit, file);
  ctx.out << std::setprecision(10) << "final_mse=" << (fit.loss.empty() ? 0.0 : fit.loss.back()) << '\n';
  return kExitOk;
}

inline void write_valid_csv(const TrainResult& r, std::ostream& out) {
  out << "epoch,mrr,hits1,hits10\n" << std::setprecision(17);
  for (const auto& v : r.valid) out << v.epoch << ',' << v.metrics.mrr << ',' << v.metrics.hits1 << ',' << v.metrics.hits10 << '\n';
}

inline int cmd_train(CliContext& ctx) {
  KnowledgeGraph kg = load_graph(ctx);
  TrainConfig cfg = TrainConfig::from(ctx.config);
  Model model;
  if (!ctx.config.str("checkpoint").empty()) {
    model = load_model(ctx, kg);
    complete_model(model, kg, cfg);
  } else {
    model = prepare_base(kg, cfg, ctx.log);
  }
  if (!model.has_denoiser() || model.denoiser.config().conditional == cfg.ccd_off ||
      model.denoiser.config().dim != cfg.dim)
    init_denoiser(model, cfg);
  std::filesystem::create_directories(ctx.output_dir());
  Trainer trainer(kg, model, cfg);
  TrainResult res = trainer.run({nullptr, ctx.output_dir()}, ctx.log);
  {
    auto f = open_output(ctx, "epochs.csv");
    write_epoch_csv(res.epochs, f);
    auto v = open_output(ctx, "valid.csv");
    write_valid_csv(res, v);
  }
  const std::string split = ctx.config.str("eval.split");
  EvalResult ev = evaluate(kg, split == "valid" ? kg.valid : kg.test, model.scorer);
  ctx.out << "epochs=" << res.epochs.size() << "\nbest_epoch=" << res.best_epoch << "\nrestarts=" << res.restarts
          << '\n';
  print_metrics(ctx, ev.metrics, "metrics.txt");
  auto ranks = open_output(ctx, "ranks.csv");
  write_ranks_csv(ev, ranks);
  return kExitOk;
}

inline std::span<const Triple> split_of(const KnowledgeGraph& kg, const std::string& name) {
  if (name == "test") return kg.test;
  if (name == "valid") return kg.valid;
  if (name == "train") return kg.train_base;
  throw ConfigError("eval.split must be train, valid or test (got '" + name + "')");
}

inline int cmd_eval(CliContext& ctx) {
  KnowledgeGraph kg = load_graph(ctx);
  const std::string split = ctx.config.str("eval.split");
  auto triples = split_of(kg, split);
  Model m = load_model(ctx, kg);
  EvalResult ev = evaluate(kg, triples, m.scorer);
  print_metrics(ctx, ev.metrics, "metrics_" + split + ".txt");
  auto ranks = open_output(ctx, "ranks_" + split + ".csv");
  write_ranks_csv(ev, ranks);
  return kExitOk;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline int cmd_ablate(CliContext& ctx) {
  KnowledgeGraph kg = load_graph(ctx);
  TrainConfig base_cfg = TrainConfig::from(ctx.config);
  const long seeds = ctx.config.integer("ablate.seeds");
  if (seeds <= 0) throw ConfigError("ablate.seeds must be positive");
  std::vector<Ablation> variants;
  for (const auto& v : split_list(ctx.config.str("ablate.variants"))) variants.push_back(parse_ablation(v));
  if (variants.empty()) throw ConfigError("ablate.variants is empty");
  const std::string split = ctx.config.str("eval.split");
  auto triples = split_of(kg, split);

  auto csv = open_output(ctx, "ablate.csv");
  csv << "variant,seed,best_epoch,mrr,hits1,hits10\n" << std::setprecision(17);
  std::vector<std::vector<double>> mrr(variants.size());
  for (long s = 0; s < seeds; ++s) {
    TrainConfig seed_cfg = base_cfg;
    seed_cfg.seed = base_cfg.seed + static_cast<std::uint64_t>(s);
    const Model base = prepare_base(kg, seed_cfg, ctx.log);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      TrainConfig cfg = ablation_variant(seed_cfg, variants[v]);
      Model model = base;
      if (!cfg.uniform_only) init_denoiser(model, cfg);
      Trainer trainer(kg, model, cfg);
      TrainResult res = trainer.run({}, ctx.log);
      Metrics m = evaluate(kg, triples, model.scorer).metrics;
      mrr[v].push_back(m.mrr);
      csv << ablation_name(variants[v]) << ',' << seed_cfg.seed << ',' << res.best_epoch << ',' << m.mrr << ','
          << m.hits1 << ',' << m.hits10 << '\n';
      csv.flush();
      ctx.log << ablation_name(variants[v]) << " seed " << seed_cfg.seed << ": mrr " << m.mrr << '\n';
    }
  }
  ctx.out << std::fixed << std::setprecision(10);
  for (std::size_t v = 0; v < variants.size(); ++v)
    ctx.out << ablation_name(variants[v]) << "_mean_mrr="
            << std::accumulate(mrr[v].begin(), mrr[v].end(), 0.0) / static_cast<double>(mrr[v].size()) << '\n';
  ctx.out.unsetf(std::ios::floatfield);
  return kExitOk;
}

// Samples train positives, generates their bands and compares band 1 with
// band 4 by a paired permutation test on the L2 distance to the true tail.
struct HardnessRun {
  HardnessReport report;
  double p_value;
  std::vector<Triple> positives;
};

inline HardnessRun run_hardness(const KnowledgeGraph& kg, Model& model, const TrainConfig& cfg, std::size_t count,
                                int permutations = 10000) {
  if (!model.has_denoiser() || !model.has_types() || !model.has_dam())
    throw DataError("hardness needs a trained checkpoint with types, difficulty and denoiser");
  Rng pick = make_stream(cfg.seed, {stream::kEval, 1});
  std::vector<std::size_t> idx(kg.train.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), pick);
  idx.resize(std::min(count, idx.size()));
  std::sort(idx.begin(), idx.end());
  HardnessRun run;
  std::vector<std::uint64_t> ids;
  for (auto i : idx) {
    run.positives.push_back(kg.train[i]);
    ids.push_back(i);
  }
  const Matrix types = model.types.entity_types();
  const Matrix& ent = model.scorer.entities.value;
  EmbeddingSpace space{&ent, &model.scorer.relations.value, &types, cfg.standardize ? embedding_scale(ent) : 1.0};
  const AnsOptions opt = cfg.ans_options();
  auto bands = generate_band_matrices(model.denoiser, run.positives, ids, space, model.zeta, opt, cfg.seed,
                                      /*round=*/0, static_cast<std::size_t>(cfg.gen_block));
  run.report = hardness_report(run.positives, bands, model.scorer, cfg.schedule.T);
  Rng perm = make_stream(cfg.seed, {stream::kEval, 2});
  run.p_value = paired_permutation_pvalue(run.report.l2[0], run.report.l2[kNumBands - 1], permutations, perm);
  return run;
}

inline int cmd_hardness(CliContext& ctx) {
  KnowledgeGraph kg = load_graph(ctx);
  TrainConfig cfg = TrainConfig::from(ctx.config);
  Model m = load_model(ctx, kg);
  const long n = ctx.config.integer("hardness.positives");
  if (n <= 0) throw ConfigError("hardness.positives must be positive");
  HardnessRun run = run_hardness(kg, m, cfg, static_cast<std::size_t>(n));
  auto f = open_output(ctx, "hardness.csv");
  write_hardness_csv(run.report, f);
  write_hardness_csv(run.report, ctx.out);
  ctx.out << "p_band1_closer_than_band4=" << std::setprecision(10) << run.p_value << '\n';
  return kExitOk;
}

}  // namespace cli_detail

// args excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  using namespace cli_detail;
  if (args.empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
    (args.empty() ? err : out) << usage_text();
    return args.empty() ? kExitUsage : kExitOk;
  }
  const std::string& cmd = args[0];
  using Handler = int (*)(CliContext&);
  const std::vector<std::pair<std::string, Handler>> commands = {
      {"features", cmd_features}, {"pretrain", cmd_pretrain}, {"fit-dam", cmd_fit_dam}, {"train", cmd_train},
      {"eval", cmd_eval},         {"ablate", cmd_ablate},     {"hardness", cmd_hardness}};
  Handler handler = nullptr;
  for (const auto& [name, h] : commands)
    if (name == cmd) handler = h;
  if (!handler) {
    err << "unknown subcommand '" << cmd << "'\n\n" << usage_text();
    return kExitUsage;
  }

  try {
    std::string config_file;
    std::vector<std::pair<std::string, std::string>> overrides;
    for (std::size_t i = 1; i < args.size(); ++i) {
      const std::string& a = args[i];
      if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + a + "'");
      std::string key = a.substr(2), value;
      if (auto eq = key.find('='); eq != std::string::npos) {
        value = key.substr(eq + 1);
        key.erase(eq);
      } else {
        if (i + 1 >= args.size()) throw ConfigError("flag --" + key + " needs a value");
        value = args[++i];
      }
      if (key == "config")
        config_file = value;
      else
        overrides.emplace_back(key, value);
    }
    Config config;
    if (!config_file.empty()) config.load_file(config_file);
    for (const auto& [k, v] : overrides) config.set(k, v);
    CliContext ctx{config, out, config.boolean("log.quiet") ? null_stream() : err};
    return handler(ctx);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n\n" << usage_text();
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace dans
