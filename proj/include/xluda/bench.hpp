// Copyright 2026 The xluda authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "xluda/corpus.hpp"
#include "xluda/train.hpp"

namespace xluda {

// Desk-scale benchmark harness: experiment matrix, ablation suites, learning
// curves, CSV/markdown reporting, and provenance-based verification.

// Reference training configuration. The two surface vocabularies are fully
// disjoint, so a generic MLM cannot align them on its own; the reference
// defaults therefore route the label signal into target tokens through the
// s2t consistency pairs (for UDA) and through translate-train (paired with
// per-target domain MLM in base_run). Plain Ft on the generic base keeps the
// untranslated labeled set, which is what exhibits the cross-lingual gap.
inline TrainConfig reference_train_config() {
  TrainConfig c;
  c.aug_strategy = AugStrategy::t2t_s2t;
  c.steps = 120;
  return c;
}

struct ExperimentSpec {
  GenSpec gen_spec;                      // defaults are the reference benchmark spec
  std::uint64_t corpus_seed = 12345;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  TrainConfig base_config = reference_train_config();
  double channel_eps = 0.2;
  int channel_m = 4;
  std::uint64_t channel_seed = 7;
  DomainMlmMode domain_mode = DomainMlmMode::per_target;
  std::vector<double> lr_grid;           // empty: just base_config.lr
  std::vector<TsaMode> tsa_modes;        // empty: just base_config.tsa
  std::vector<double> mu_list{0.6, 0.8, 1.0, 1.2};
  std::vector<int> curve_sizes{100, 300, 1000};  // capped at n_labeled_src
  int jobs = 1;
  std::string out_dir;                   // empty: no artifacts written

  void validate() const {
    gen_spec.validate();
    base_config.validate();
    if (seeds.empty()) throw std::invalid_argument("ExperimentSpec: seeds must be nonempty");
  }
};

inline nlohmann::json experimentspec_to_json(const ExperimentSpec& s) {
  nlohmann::json j;
  j["gen_spec"] = genspec_to_json(s.gen_spec);
  j["corpus_seed"] = s.corpus_seed;
  j["seeds"] = s.seeds;
  j["base_config"] = trainconfig_to_json(s.base_config);
  j["channel_eps"] = s.channel_eps;
  j["channel_m"] = s.channel_m;
  j["channel_seed"] = s.channel_seed;
  j["domain_mode"] = s.domain_mode == DomainMlmMode::merged ? "merged" : "per_target";
  j["lr_grid"] = s.lr_grid;
  std::vector<std::string> modes;
  for (auto m : s.tsa_modes) modes.push_back(to_string(m));
  j["tsa_modes"] = modes;
  j["mu_list"] = s.mu_list;
  j["curve_sizes"] = s.curve_sizes;
  j["jobs"] = s.jobs;
  return j;
}

inline ExperimentSpec experimentspec_from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  if (j.contains("gen_spec")) s.gen_spec = genspec_from_json(j.at("gen_spec"));
  s.corpus_seed = j.value("corpus_seed", s.corpus_seed);
  s.seeds = j.value("seeds", s.seeds);
  if (j.contains("base_config")) s.base_config = trainconfig_from_json(j.at("base_config"));
  s.channel_eps = j.value("channel_eps", s.channel_eps);
  s.channel_m = j.value("channel_m", s.channel_m);
  s.channel_seed = j.value("channel_seed", s.channel_seed);
  if (j.contains("domain_mode"))
    s.domain_mode = j.at("domain_mode") == "merged" ? DomainMlmMode::merged : DomainMlmMode::per_target;
  s.lr_grid = j.value("lr_grid", s.lr_grid);
  if (j.contains("tsa_modes")) {
    s.tsa_modes.clear();
    for (const auto& m : j.at("tsa_modes")) s.tsa_modes.push_back(tsa_mode_from_string(m.get<std::string>()));
  }
  s.mu_list = j.value("mu_list", s.mu_list);
  s.curve_sizes = j.value("curve_sizes", s.curve_sizes);
  s.jobs = j.value("jobs", s.jobs);
  s.validate();
  return s;
}

struct ResultRow {
  std::string method;
  std::string base_mode;
  std::string strategy;  // per-ablation label ("main", "t2t", "mu=1.0", "cross@300", ...)
  std::uint64_t seed = 0;
  double target_error = std::numeric_limits<double>::quiet_NaN();
  double source_error = std::numeric_limits<double>::quiet_NaN();
  double dev_err = std::numeric_limits<double>::quiet_NaN();
  std::string provenance_hash;
  std::string failure;  // nonempty when the cell failed
  nlohmann::json provenance;
};

struct ResultsTable {
  std::string name;
  double bayes_tgt = 0.0;
  double bayes_src = 0.0;
  std::vector<ResultRow> rows;

  std::vector<const ResultRow*> select(const std::string& method, const std::string& base_mode,
                                       const std::string& strategy) const {
    std::vector<const ResultRow*> out;
    for (const auto& r : rows)
      if (r.failure.empty() && (method.empty() || r.method == method) &&
          (base_mode.empty() || r.base_mode == base_mode) && (strategy.empty() || r.strategy == strategy))
        out.push_back(&r);
    return out;
  }

  static double mean_of(const std::vector<const ResultRow*>& rs) {
    double s = 0.0;
    for (auto* r : rs) s += r->target_error;
    return rs.empty() ? std::numeric_limits<double>::quiet_NaN() : s / rs.size();
  }

  static double std_of(const std::vector<const ResultRow*>& rs) {
    if (rs.size() < 2) return 0.0;
    double m = mean_of(rs);
    double s = 0.0;
    for (auto* r : rs) s += (r->target_error - m) * (r->target_error - m);
    return std::sqrt(s / (rs.size() - 1));
  }

  double mean_error(const std::string& method, const std::string& base_mode, const std::string& strategy = "") const {
    return mean_of(select(method, base_mode, strategy));
  }

  double std_error(const std::string& method, const std::string& base_mode, const std::string& strategy = "") const {
    return std_of(select(method, base_mode, strategy));
  }
};

// ---- run descriptors -------------------------------------------------------

// Everything needed to reproduce a single training run bit-exactly.
struct RunSpec {
  GenSpec gen_spec;
  std::uint64_t corpus_seed = 0;
  double channel_eps = 0.0;
  int channel_m = 4;
  std::uint64_t channel_seed = 0;
  DomainMlmMode domain_mode = DomainMlmMode::merged;
  TrainConfig config;
  bool monolingual = false;   // labeled data comes from the target domain
  int labeled_size = -1;      // -1: full labeled split
  std::string strategy_label = "main";
};

inline nlohmann::json runspec_to_json(const RunSpec& r) {
  nlohmann::json j;
  j["gen_spec"] = genspec_to_json(r.gen_spec);
  j["corpus_seed"] = r.corpus_seed;
  j["channel_eps"] = r.channel_eps;
  j["channel_m"] = r.channel_m;
  j["channel_seed"] = r.channel_seed;
  j["domain_mode"] = r.domain_mode == DomainMlmMode::merged ? "merged" : "per_target";
  j["config"] = trainconfig_to_json(r.config);
  j["monolingual"] = r.monolingual;
  j["labeled_size"] = r.labeled_size;
  j["strategy_label"] = r.strategy_label;
  return j;
}

inline RunSpec runspec_from_json(const nlohmann::json& j) {
  RunSpec r;
  r.gen_spec = genspec_from_json(j.at("gen_spec"));
  r.corpus_seed = j.at("corpus_seed");
  r.channel_eps = j.at("channel_eps");
  r.channel_m = j.at("channel_m");
  r.channel_seed = j.at("channel_seed");
  r.domain_mode = j.value("domain_mode", std::string("merged")) == "merged" ? DomainMlmMode::merged : DomainMlmMode::per_target;
  r.config = trainconfig_from_json(j.at("config"));
  r.monolingual = j.at("monolingual");
  r.labeled_size = j.at("labeled_size");
  r.strategy_label = j.value("strategy_label", std::string("main"));
  return r;
}

struct RunOutcome {
  double target_error = 0.0;
  double source_error = 0.0;
  double dev_err = 0.0;
  std::uint64_t base_checkpoint_hash = 0;
  std::vector<double> losses;
  nlohmann::json provenance;
};

// ---- shared per-benchmark state --------------------------------------------

class BenchContext {
public:
  explicit BenchContext(ExperimentSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    bundle_ = generate_corpus(spec_.gen_spec, spec_.corpus_seed);
    vocab_ = build_vocab(bundle_);
    channel_ = CipherChannel::make(spec_.gen_spec, spec_.channel_eps, spec_.channel_m, spec_.channel_seed);
  }

  const ExperimentSpec& spec() const { return spec_; }
  const CorpusBundle& bundle() const { return bundle_; }
  const Vocab& vocab() const { return vocab_; }
  const CipherChannel& channel() const { return channel_; }

  // Pretraining is deterministic given (spec, seed), so checkpoints are cached
  // per training seed. Safe under concurrent cell execution.
  const Checkpoint& generic_checkpoint(const TrainConfig& cfg) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = cfg.seed;
    auto it = generic_.find(key);
    if (it != generic_.end()) return it->second;
    ModelConfig mc = model_config();
    auto res = pretrain_generic(mc, bundle_.general_pretrain, vocab_, cfg);
    return generic_.emplace(key, std::move(res.checkpoint)).first->second;
  }

  const Checkpoint& domain_checkpoint(const TrainConfig& cfg, DomainMlmMode mode) {
    const Checkpoint& base = generic_checkpoint(cfg);
    std::lock_guard<std::mutex> lock(mu_);
    auto key = cfg.seed * 2 + (mode == DomainMlmMode::merged ? 0 : 1);
    auto it = domain_.find(key);
    if (it != domain_.end()) return it->second;
    auto res = pretrain_domain(base, bundle_, vocab_, mode, cfg);
    return domain_.emplace(key, std::move(res.checkpoint)).first->second;
  }

  // Target-domain labeled split for monolingual baselines, same size as L_src.
  std::vector<Document> monolingual_labeled(int size = -1) const {
    int n = size < 0 ? spec_.gen_spec.n_labeled_src : size;
    Language lang = spec_.gen_spec.shared_surface ? Language::src : Language::tgt;
    return sample_documents(spec_.gen_spec, Domain::tgt, lang, n, true, spec_.corpus_seed, "L_tgt_mono");
  }

  ModelConfig model_config() const {
    ModelConfig mc;
    mc.vocab_size = vocab_.size();
    mc.num_classes = spec_.gen_spec.num_classes;
    mc.max_positions = spec_.base_config.max_len;
    return mc;
  }

  // Fine-tuning is deterministic given the run spec, and a UDA+Self run trains
  // the same Ft and UDA teacher candidates as the corresponding standalone
  // rows, so trained models are cached by the spec with the method pinned.
  // A miss may be computed twice under concurrency; both copies are identical.
  template <typename MakeFn>
  const TrainedModel& trained_model(const RunSpec& run, Method method, MakeFn&& make) {
    RunSpec key_spec = run;
    key_spec.config.method = method;
    key_spec.strategy_label.clear();  // reporting label, no effect on training
    std::string key = runspec_to_json(key_spec).dump();
    {
      std::lock_guard<std::mutex> lock(model_mu_);
      auto it = models_.find(key);
      if (it != models_.end()) return it->second;
    }
    TrainedModel made = make();
    std::lock_guard<std::mutex> lock(model_mu_);
    return models_.emplace(std::move(key), std::move(made)).first->second;
  }

private:
  ExperimentSpec spec_;
  CorpusBundle bundle_;
  Vocab vocab_;
  CipherChannel channel_;
  std::map<std::uint64_t, Checkpoint> generic_, domain_;
  std::map<std::string, TrainedModel> models_;
  std::mutex mu_, model_mu_;
};

// ---- single-cell runner ----------------------------------------------------

// Executes one run end to end. This is the only training entry point the
// benchmark uses, so a verify pass re-running from provenance exercises the
// identical code path.
inline RunOutcome run_single(BenchContext& ctx, const RunSpec& run) {
  const TrainConfig& cfg = run.config;
  const Vocab& vocab = ctx.vocab();
  const CorpusBundle& bundle = ctx.bundle();
  const CipherChannel& channel = ctx.channel();

  const Checkpoint& base =
      cfg.base_mode == BaseMode::generic ? ctx.generic_checkpoint(cfg) : ctx.domain_checkpoint(cfg, run.domain_mode);

  // labeled pool
  std::vector<Document> labeled_pool = run.monolingual ? ctx.monolingual_labeled() : bundle.labeled_src;
  if (run.labeled_size >= 0 && run.labeled_size < static_cast<int>(labeled_pool.size()))
    labeled_pool.resize(run.labeled_size);
  auto [train_docs_raw, dev_raw] = dev_split(labeled_pool);
  std::vector<Document> train_docs =
      run.monolingual ? train_docs_raw : apply_translate_strategy(train_docs_raw, cfg.translate_strategy, channel);
  // the dev split follows the training inputs: a translate-train model is
  // selected on translated dev documents (still source labels only)
  std::vector<Document> dev =
      run.monolingual ? dev_raw : apply_translate_strategy(dev_raw, cfg.translate_strategy, channel);

  // unlabeled pools and augmentation pairs
  std::vector<AugPair> pairs;
  if (cfg.method != Method::Ft && cfg.lambda > 0.0) {
    std::vector<Document> tgt_pool, src_pool;
    if (cfg.unlabeled_source == UnlabeledSource::target)
      tgt_pool = subsample_pool(bundle.unlabeled_tgt, cfg.unlabeled_cap, cfg.seed);
    src_pool = subsample_pool(bundle.unlabeled_src, cfg.unlabeled_cap, cfg.seed);
    if (cfg.unlabeled_source == UnlabeledSource::source) {
      // source-only semi-supervision: round-trip paraphrase pairs over the
      // source-language pool, no target-domain information used
      Rng rng = Rng::derive(cfg.seed ^ channel.rng_seed, "augment_src");
      for (const auto& x : src_pool) {
        Document mid = translate(x, channel, Direction::src_to_tgt, cfg.mu, rng);
        Document back = translate(mid, channel, Direction::tgt_to_src, cfg.mu, rng);
        pairs.push_back({x, back, AugStrategy::t2t});
      }
      if (pairs.empty()) throw std::invalid_argument("run_single: empty source unlabeled pool");
    } else {
      AugStrategy strat = cfg.aug_strategy;
      // the monolingual baseline must not touch source-language data, so its
      // consistency pairs are always target round-trip paraphrases
      if (run.monolingual) strat = AugStrategy::t2t;
      pairs = make_augmented_pairs(tgt_pool, src_pool, strat, channel, cfg.mu, cfg.seed);
    }
  }

  RunOutcome out;
  out.base_checkpoint_hash = checkpoint_hash(base);

  TrainedModel model;
  bool mono = run.monolingual;
  if (cfg.method == Method::Ft) {
    model = ctx.trained_model(run, Method::Ft,
                              [&] { return finetune_supervised(base, train_docs, vocab, cfg, mono); });
  } else if (cfg.method == Method::UDA) {
    model = ctx.trained_model(run, Method::UDA,
                              [&] { return train_uda(base, train_docs, pairs, vocab, cfg, mono); });
  } else {  // UDA+Self: train Ft and UDA, pick the better teacher by dev error
    const TrainedModel& ft = ctx.trained_model(
        run, Method::Ft, [&] { return finetune_supervised(base, train_docs, vocab, cfg, mono); });
    const TrainedModel& uda = ctx.trained_model(
        run, Method::UDA, [&] { return train_uda(base, train_docs, pairs, vocab, cfg, mono); });
    double ft_dev = dev_error(ft.params, dev, vocab, cfg.max_len);
    double uda_dev = dev_error(uda.params, dev, vocab, cfg.max_len);
    const TrainedModel& teacher = (ft_dev < uda_dev) ? ft : uda;
    // the teacher scores the full unlabeled target pool; the 10% subsample
    // applies to the consistency pairs, not to distillation. The student gets
    // extra steps so it actually fits the teacher over the full pool.
    TrainConfig distill = cfg;
    distill.steps = cfg.steps * 5;
    model = self_train(teacher.params, base, bundle.unlabeled_tgt, vocab, distill);
  }

  out.dev_err = dev.empty() ? 0.0 : dev_error(model.params, dev, vocab, cfg.max_len);
  const auto& test_tgt = bundle.test_tgt;
  out.target_error = evaluate(model.params, test_tgt, cfg.eval_input, channel, vocab, cfg.max_len);
  out.source_error = evaluate(model.params, bundle.test_src, EvalInput::original, channel, vocab, cfg.max_len);
  out.losses = model.losses;

  nlohmann::json prov;
  prov["run"] = runspec_to_json(run);
  prov["base_checkpoint_hash"] = out.base_checkpoint_hash;
  nlohmann::json losses = nlohmann::json::array();
  for (std::size_t i = 0; i < model.losses.size(); i += std::max<std::size_t>(1, model.losses.size() / 50))
    losses.push_back(model.losses[i]);
  prov["losses_downsampled"] = losses;
  prov["metrics"] = {{"target_error", out.target_error}, {"source_error", out.source_error}, {"dev_error", out.dev_err}};
  out.provenance = prov;
  return out;
}

// Sweeps the configured lr grid and TSA modes, returns the dev-best outcome.
inline RunOutcome run_with_sweep(BenchContext& ctx, RunSpec run) {
  std::vector<double> lrs = ctx.spec().lr_grid;
  if (lrs.empty()) lrs = {run.config.lr};
  std::vector<TsaMode> modes = ctx.spec().tsa_modes;
  if (modes.empty()) modes = {run.config.tsa};
  RunOutcome best;
  bool have = false;
  for (double lr : lrs) {
    for (TsaMode tsa : modes) {
      RunSpec r = run;
      r.config.lr = lr;
      r.config.tsa = tsa;
      RunOutcome o = run_single(ctx, r);
      if (!have || o.dev_err < best.dev_err) {
        best = std::move(o);
        have = true;
      }
    }
  }
  return best;
}

// ---- table assembly --------------------------------------------------------

inline ResultRow make_row(BenchContext& ctx, const RunSpec& run, const std::string& method_label,
                          const std::string& base_label) {
  ResultRow row;
  row.method = method_label;
  row.base_mode = base_label;
  row.strategy = run.strategy_label;
  row.seed = run.config.seed;
  try {
    RunOutcome o = run_with_sweep(ctx, run);
    row.target_error = o.target_error;
    row.source_error = o.source_error;
    row.dev_err = o.dev_err;
    row.provenance = o.provenance;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(o.provenance.dump())));
    row.provenance_hash = buf;
  } catch (const std::exception& e) {
    row.failure = e.what();
  }
  return row;
}

// Executes rows with an optional worker pool; failures stay isolated per row.
inline std::vector<ResultRow> run_rows(BenchContext& ctx,
                                       const std::vector<std::tuple<RunSpec, std::string, std::string>>& specs) {
  std::vector<ResultRow> rows(specs.size());
  int jobs = std::max(1, ctx.spec().jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < specs.size(); ++i)
      rows[i] = make_row(ctx, std::get<0>(specs[i]), std::get<1>(specs[i]), std::get<2>(specs[i]));
    return rows;
  }
  // warm the shared checkpoint cache serially to keep worker runs independent
  for (const auto& [run, m, b] : specs) {
    if (run.config.base_mode == BaseMode::generic)
      ctx.generic_checkpoint(run.config);
    else
      ctx.domain_checkpoint(run.config, run.domain_mode);
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      rows[i] = make_row(ctx, std::get<0>(specs[i]), std::get<1>(specs[i]), std::get<2>(specs[i]));
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return rows;
}

inline RunSpec base_run(const BenchContext& ctx, Method method, BaseMode base, std::uint64_t seed) {
  RunSpec r;
  const ExperimentSpec& s = ctx.spec();
  r.gen_spec = s.gen_spec;
  r.corpus_seed = s.corpus_seed;
  r.channel_eps = s.channel_eps;
  r.channel_m = s.channel_m;
  r.channel_seed = s.channel_seed;
  r.domain_mode = s.domain_mode;
  r.config = s.base_config;
  r.config.method = method;
  r.config.base_mode = base;
  r.config.seed = seed;
  // fine-tuning a per-target domain-adapted base degrades the source language,
  // so pair it with translate-train by default; once the labeled data lives in
  // the target language the cross-lingual s2t bridge is no longer needed, and
  // coupling target predictions to the degraded source branch would only
  // inject noise, so augmentation stays target-side
  if (base == BaseMode::domain_mlm && s.domain_mode == DomainMlmMode::per_target) {
    r.config.translate_strategy = TranslateStrategy::tr_train;
    r.config.aug_strategy = AugStrategy::t2t;
  }
  return r;
}

// ---- experiment suites -----------------------------------------------------

inline ResultsTable with_bayes(const BenchContext& ctx, ResultsTable t) {
  t.bayes_tgt = bayes_error(ctx.spec().gen_spec, Domain::tgt, 20000, 999);
  t.bayes_src = bayes_error(ctx.spec().gen_spec, Domain::src, 20000, 999);
  return t;
}

// {Ft, UDA, UDA+Self} x {generic, domain_mlm} plus the two monolingual
// baselines, over all seeds.
inline ResultsTable run_main_matrix(BenchContext& ctx) {
  ResultsTable table;
  table.name = "main";
  std::vector<std::tuple<RunSpec, std::string, std::string>> specs;
  for (std::uint64_t seed : ctx.spec().seeds) {
    for (Method m : {Method::Ft, Method::UDA, Method::UDA_Self}) {
      for (BaseMode b : {BaseMode::generic, BaseMode::domain_mlm}) {
        RunSpec r = base_run(ctx, m, b, seed);
        specs.emplace_back(r, to_string(m), to_string(b));
      }
    }
    // monolingual baselines: labeled target data of the same size as L_src
    RunSpec mono_ft = base_run(ctx, Method::Ft, BaseMode::generic, seed);
    mono_ft.monolingual = true;
    mono_ft.strategy_label = "mono";
    specs.emplace_back(mono_ft, "Ft", "mono");
    RunSpec mono_uda = base_run(ctx, Method::UDA, BaseMode::generic, seed);
    mono_uda.monolingual = true;
    mono_uda.strategy_label = "mono";
    specs.emplace_back(mono_uda, "UDA", "mono");
  }
  table.rows = run_rows(ctx, specs);
  return with_bayes(ctx, table);
}

inline ResultsTable run_aug_ablation(BenchContext& ctx) {
  ResultsTable table;
  table.name = "aug";
  std::vector<std::tuple<RunSpec, std::string, std::string>> specs;
  for (std::uint64_t seed : ctx.spec().seeds) {
    for (AugStrategy strat : {AugStrategy::t2t, AugStrategy::t2s, AugStrategy::t2t_t2s, AugStrategy::s2t,
                              AugStrategy::t2t_s2t}) {
      // the strategies are compared on the strong (domain-adapted,
      // translate-train) configuration; without a labeled bridge every
      // strategy sits at chance and the comparison measures only noise
      RunSpec r = base_run(ctx, Method::UDA, BaseMode::domain_mlm, seed);
      r.config.aug_strategy = strat;
      r.strategy_label = to_string(strat);
      specs.emplace_back(r, "UDA", to_string(r.config.base_mode));
    }
  }
  table.rows = run_rows(ctx, specs);
  return with_bayes(ctx, table);
}

inline ResultsTable run_translate_ablation(BenchContext& ctx) {
  ResultsTable table;
  table.name = "translate";
  std::vector<std::tuple<RunSpec, std::string, std::string>> specs;
  for (std::uint64_t seed : ctx.spec().seeds) {
    for (TranslateStrategy ts : {TranslateStrategy::english, TranslateStrategy::tr_train, TranslateStrategy::both}) {
      RunSpec r = base_run(ctx, Method::UDA, ctx.spec().base_config.base_mode, seed);
      r.config.translate_strategy = ts;
      r.strategy_label = to_string(ts);
      specs.emplace_back(r, "UDA", to_string(r.config.base_mode));
    }
  }
  table.rows = run_rows(ctx, specs);
  return with_bayes(ctx, table);
}

inline ResultsTable run_temperature_sweep(BenchContext& ctx) {
  ResultsTable table;
  table.name = "temperature";
  std::vector<std::tuple<RunSpec, std::string, std::string>> specs;
  for (std::uint64_t seed : ctx.spec().seeds) {
    for (double mu : ctx.spec().mu_list) {
      RunSpec r = base_run(ctx, Method::UDA, ctx.spec().base_config.base_mode, seed);
      r.config.mu = mu;
      std::ostringstream label;
      label << "mu=" << mu;
      r.strategy_label = label.str();
      specs.emplace_back(r, "UDA", to_string(r.config.base_mode));
    }
  }
  table.rows = run_rows(ctx, specs);
  return with_bayes(ctx, table);
}

// UDA(generic) at each labeled-set size, cross-lingual and monolingual.
inline ResultsTable run_learning_curve(BenchContext& ctx) {
  ResultsTable table;
  table.name = "curve";
  std::vector<std::tuple<RunSpec, std::string, std::string>> specs;
  for (std::uint64_t seed : ctx.spec().seeds) {
    for (int size : ctx.spec().curve_sizes) {
      RunSpec cross = base_run(ctx, Method::UDA, BaseMode::generic, seed);
      cross.labeled_size = size;
      cross.strategy_label = "cross@" + std::to_string(size);
      specs.emplace_back(cross, "UDA", "cross");
      RunSpec mono = base_run(ctx, Method::UDA, BaseMode::generic, seed);
      mono.labeled_size = size;
      mono.monolingual = true;
      mono.strategy_label = "mono@" + std::to_string(size);
      specs.emplace_back(mono, "UDA", "mono");
    }
  }
  table.rows = run_rows(ctx, specs);
  return with_bayes(ctx, table);
}

// UDA with source-language unlabeled data only, both eval input modes,
// against the target-unlabeled reference.
inline ResultsTable run_source_unlabeled_baseline(BenchContext& ctx) {
  ResultsTable table;
  table.name = "source_unlabeled";
  std::vector<std::tuple<RunSpec, std::string, std::string>> specs;
  for (std::uint64_t seed : ctx.spec().seeds) {
    for (EvalInput ev : {EvalInput::original, EvalInput::translated}) {
      RunSpec r = base_run(ctx, Method::UDA, ctx.spec().base_config.base_mode, seed);
      r.config.unlabeled_source = UnlabeledSource::source;
      r.config.eval_input = ev;
      r.strategy_label = ev == EvalInput::original ? "source-unlabeled/original" : "source-unlabeled/translated";
      specs.emplace_back(r, "UDA", to_string(r.config.base_mode));
    }
    RunSpec ref = base_run(ctx, Method::UDA, ctx.spec().base_config.base_mode, seed);
    ref.strategy_label = "target-unlabeled";
    specs.emplace_back(ref, "UDA", to_string(ref.config.base_mode));
  }
  table.rows = run_rows(ctx, specs);
  return with_bayes(ctx, table);
}

// Identity-cipher configuration: single surface vocabulary, drift between two
// same-language domains, full main matrix re-run.
inline ResultsTable run_monolingual_domain(BenchContext& mono_ctx) {
  if (!mono_ctx.spec().gen_spec.shared_surface)
    throw std::invalid_argument("run_monolingual_domain: gen_spec.shared_surface must be set");
  ResultsTable t = run_main_matrix(mono_ctx);
  t.name = "monolingual_domain";
  return t;
}

// ---- reporting -------------------------------------------------------------

inline std::string fmt4(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

inline std::string table_to_csv(const ResultsTable& t) {
  std::ostringstream os;
  os << "table,method,base_mode,strategy,seed,target_error,source_error,dev_error,bayes_tgt,bayes_src,provenance_hash\n";
  for (const auto& r : t.rows) {
    os << t.name << ',' << r.method << ',' << r.base_mode << ',' << r.strategy << ',' << r.seed << ','
       << fmt4(r.target_error) << ',' << fmt4(r.source_error) << ',' << fmt4(r.dev_err) << ',' << fmt4(t.bayes_tgt)
       << ',' << fmt4(t.bayes_src) << ',' << (r.failure.empty() ? r.provenance_hash : "FAILED") << '\n';
  }
  // aggregates per (method, base_mode, strategy)
  std::vector<std::tuple<std::string, std::string, std::string>> groups;
  for (const auto& r : t.rows) {
    auto g = std::make_tuple(r.method, r.base_mode, r.strategy);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  for (const auto& [m, b, s] : groups) {
    auto rs = t.select(m, b, s);
    if (rs.empty()) continue;
    os << t.name << ',' << m << ',' << b << ',' << s << ",mean," << fmt4(ResultsTable::mean_of(rs)) << ",,,,,\n";
    os << t.name << ',' << m << ',' << b << ',' << s << ",std," << fmt4(ResultsTable::std_of(rs)) << ",,,,,\n";
  }
  return os.str();
}

inline std::string table_to_markdown(const ResultsTable& t) {
  std::ostringstream os;
  os << "## " << t.name << "\n\n";
  os << "| method | base | strategy | mean target error | std | source error |\n";
  os << "|---|---|---|---|---|---|\n";
  std::vector<std::tuple<std::string, std::string, std::string>> groups;
  for (const auto& r : t.rows) {
    auto g = std::make_tuple(r.method, r.base_mode, r.strategy);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  for (const auto& [m, b, s] : groups) {
    auto rs = t.select(m, b, s);
    double src = 0.0;
    for (auto* r : rs) src += r->source_error;
    os << "| " << m << " | " << b << " | " << s << " | " << fmt4(ResultsTable::mean_of(rs)) << " | "
       << fmt4(ResultsTable::std_of(rs)) << " | " << fmt4(rs.empty() ? 0.0 : src / rs.size()) << " |\n";
  }
  os << "| Bayes | - | - | " << fmt4(t.bayes_tgt) << " | - | " << fmt4(t.bayes_src) << " |\n";
  return os.str();
}

// Parses the CSV emitted above; round-trips byte-identically.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    while (fields.size() < 11 && !line.empty() && line.back() == ',') fields.push_back("");
    // trailing empty fields
    std::size_t commas = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    while (fields.size() < commas + 1) fields.push_back("");
    if (first) {
      t.header = fields;
      first = false;
    } else {
      t.rows.push_back(fields);
    }
  }
  return t;
}

inline std::string csv_to_string(const CsvTable& t) {
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << fields[i];
    os << '\n';
  };
  emit(t.header);
  for (const auto& r : t.rows) emit(r);
  return os.str();
}

inline void report(const std::vector<ResultsTable>& tables, const std::string& format, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& t : tables) {
    std::string ext = format == "markdown" ? ".md" : ".csv";
    std::ofstream f(out_dir + "/" + t.name + ext);
    if (!f) throw std::runtime_error("report: cannot write to " + out_dir);
    f << (format == "markdown" ? table_to_markdown(t) : table_to_csv(t));
  }
}

// ---- provenance verification ------------------------------------------------

// Re-runs one randomly chosen cell from its stored provenance and checks the
// reproduced target error matches exactly.
inline bool verify_table(BenchContext& ctx, const ResultsTable& table, std::uint64_t pick_seed,
                         std::string* detail = nullptr) {
  std::vector<const ResultRow*> ok;
  for (const auto& r : table.rows)
    if (r.failure.empty()) ok.push_back(&r);
  if (ok.empty()) throw std::runtime_error("verify: no successful rows");
  Rng rng = Rng::derive(pick_seed, "verify");
  const ResultRow* row = ok[rng.next_below(ok.size())];
  RunSpec run = runspec_from_json(row->provenance.at("run"));
  RunOutcome redo = run_with_sweep(ctx, run);
  bool match = redo.target_error == row->target_error;
  if (detail) {
    std::ostringstream os;
    os << "cell (" << row->method << "," << row->base_mode << "," << row->strategy << ",seed=" << row->seed
       << "): stored " << row->target_error << " reproduced " << redo.target_error;
    *detail = os.str();
  }
  return match;
}

// Writes per-run provenance documents under out_dir/runs/.
inline void write_provenance(const ResultsTable& t, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir + "/runs");
  for (const auto& r : t.rows) {
    if (!r.failure.empty()) continue;
    std::string id = t.name + "-" + r.method + "-" + r.base_mode + "-" + r.strategy + "-s" + std::to_string(r.seed);
    for (auto& c : id)
      if (c == '/' || c == '@' || c == '=' || c == '+') c = '_';
    std::filesystem::create_directories(out_dir + "/runs/" + id);
    std::ofstream f(out_dir + "/runs/" + id + "/provenance.json");
    f << r.provenance.dump(2);
  }
}

}  // namespace xluda
