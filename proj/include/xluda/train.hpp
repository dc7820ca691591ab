// Copyright 2026 The xluda authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xluda/corpus.hpp"
#include "xluda/model.hpp"
#include "xluda/optim.hpp"
#include "xluda/tensor.hpp"
#include "xluda/text.hpp"

namespace xluda {

enum class Method { Ft, UDA, UDA_Self };
enum class BaseMode { generic, domain_mlm };
enum class TranslateStrategy { english, tr_train, both };
enum class AugStrategy { t2t, t2s, s2t, t2t_t2s, t2t_s2t };
enum class UnlabeledSource { target, source };
enum class EvalInput { original, translated };
enum class KlOrder { as_paper, swapped };
enum class DomainMlmMode { per_target, merged };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Ft: return "Ft";
    case Method::UDA: return "UDA";
    default: return "UDA+Self";
  }
}
inline std::string to_string(BaseMode b) { return b == BaseMode::generic ? "generic" : "domain_mlm"; }
inline std::string to_string(TranslateStrategy t) {
  switch (t) {
    case TranslateStrategy::english: return "english";
    case TranslateStrategy::tr_train: return "tr_train";
    default: return "both";
  }
}
inline std::string to_string(AugStrategy a) {
  switch (a) {
    case AugStrategy::t2t: return "t2t";
    case AugStrategy::t2s: return "t2s";
    case AugStrategy::s2t: return "s2t";
    case AugStrategy::t2t_t2s: return "t2t+t2s";
    default: return "t2t+s2t";
  }
}
inline AugStrategy aug_strategy_from_string(const std::string& s) {
  if (s == "t2t") return AugStrategy::t2t;
  if (s == "t2s") return AugStrategy::t2s;
  if (s == "s2t") return AugStrategy::s2t;
  if (s == "t2t+t2s") return AugStrategy::t2t_t2s;
  if (s == "t2t+s2t") return AugStrategy::t2t_s2t;
  throw std::invalid_argument("unknown augmentation strategy: " + s);
}

struct TrainConfig {
  Method method = Method::Ft;
  BaseMode base_mode = BaseMode::generic;
  TranslateStrategy translate_strategy = TranslateStrategy::english;
  AugStrategy aug_strategy = AugStrategy::t2t;
  UnlabeledSource unlabeled_source = UnlabeledSource::target;
  KlOrder kl_order = KlOrder::as_paper;
  EvalInput eval_input = EvalInput::original;
  double lambda = 1.0;       // consistency weight, default 1
  int labeled_batch = 16;    // UDA labeled batch
  int unlabeled_batch = 80;  // UDA unlabeled-pair batch
  int ft_batch = 128;        // Ft and UDA+Self batch
  int steps = 200;
  int pretrain_steps = 400;
  int pretrain_batch = 16;
  double lr = 1e-3;
  double pretrain_lr = 1e-3;
  TsaMode tsa = TsaMode::none;
  double mu = 1.0;           // channel sampling temperature
  double mask_prob = 0.15;
  int max_len = 64;
  int unlabeled_cap = 2000;  // pools beyond this are subsampled to 10%
  std::uint64_t seed = 0;

  void validate() const {
    if (lambda < 0.0) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
    if (labeled_batch <= 0 || unlabeled_batch <= 0 || ft_batch <= 0) throw std::invalid_argument("TrainConfig: bad batch sizes");
    if (steps < 0 || pretrain_steps < 0) throw std::invalid_argument("TrainConfig: negative steps");
    if (mu < 0.0) throw std::invalid_argument("TrainConfig: negative temperature");
  }
};

inline nlohmann::json trainconfig_to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"method", to_string(c.method)},
      {"base_mode", to_string(c.base_mode)},
      {"translate_strategy", to_string(c.translate_strategy)},
      {"aug_strategy", to_string(c.aug_strategy)},
      {"unlabeled_source", c.unlabeled_source == UnlabeledSource::target ? "target" : "source"},
      {"kl_order", c.kl_order == KlOrder::as_paper ? "as_paper" : "swapped"},
      {"eval_input", c.eval_input == EvalInput::original ? "original" : "translated"},
      {"lambda", c.lambda},
      {"labeled_batch", c.labeled_batch},
      {"unlabeled_batch", c.unlabeled_batch},
      {"ft_batch", c.ft_batch},
      {"steps", c.steps},
      {"pretrain_steps", c.pretrain_steps},
      {"pretrain_batch", c.pretrain_batch},
      {"lr", c.lr},
      {"pretrain_lr", c.pretrain_lr},
      {"tsa", to_string(c.tsa)},
      {"mu", c.mu},
      {"mask_prob", c.mask_prob},
      {"max_len", c.max_len},
      {"unlabeled_cap", c.unlabeled_cap},
      {"seed", c.seed}};
}

inline TrainConfig trainconfig_from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto method = j.value("method", std::string("Ft"));
  c.method = method == "Ft" ? Method::Ft : (method == "UDA" ? Method::UDA : Method::UDA_Self);
  c.base_mode = j.value("base_mode", std::string("generic")) == "generic" ? BaseMode::generic : BaseMode::domain_mlm;
  auto ts = j.value("translate_strategy", std::string("english"));
  c.translate_strategy = ts == "english" ? TranslateStrategy::english
                                         : (ts == "tr_train" ? TranslateStrategy::tr_train : TranslateStrategy::both);
  c.aug_strategy = aug_strategy_from_string(j.value("aug_strategy", std::string("t2t")));
  c.unlabeled_source =
      j.value("unlabeled_source", std::string("target")) == "target" ? UnlabeledSource::target : UnlabeledSource::source;
  c.kl_order = j.value("kl_order", std::string("as_paper")) == "as_paper" ? KlOrder::as_paper : KlOrder::swapped;
  c.eval_input = j.value("eval_input", std::string("original")) == "original" ? EvalInput::original : EvalInput::translated;
  c.lambda = j.value("lambda", c.lambda);
  c.labeled_batch = j.value("labeled_batch", c.labeled_batch);
  c.unlabeled_batch = j.value("unlabeled_batch", c.unlabeled_batch);
  c.ft_batch = j.value("ft_batch", c.ft_batch);
  c.steps = j.value("steps", c.steps);
  c.pretrain_steps = j.value("pretrain_steps", c.pretrain_steps);
  c.pretrain_batch = j.value("pretrain_batch", c.pretrain_batch);
  c.lr = j.value("lr", c.lr);
  c.pretrain_lr = j.value("pretrain_lr", c.pretrain_lr);
  c.tsa = tsa_mode_from_string(j.value("tsa", std::string("none")));
  c.mu = j.value("mu", c.mu);
  c.mask_prob = j.value("mask_prob", c.mask_prob);
  c.max_len = j.value("max_len", c.max_len);
  c.unlabeled_cap = j.value("unlabeled_cap", c.unlabeled_cap);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

// ---- zero-shot guard -------------------------------------------------------

// Counts reads of target-side labels while a training scope is active. The
// benchmark asserts this stays zero outside evaluation and the explicitly
// allowed monolingual-baseline runs.
inline std::atomic<long>& target_label_reads() {
  static std::atomic<long> counter{0};
  return counter;
}

inline thread_local int g_training_depth = 0;
inline thread_local bool g_allow_target_labels = false;

struct TrainingScope {
  bool prev_allow;
  explicit TrainingScope(bool allow_target_labels = false) : prev_allow(g_allow_target_labels) {
    ++g_training_depth;
    g_allow_target_labels = allow_target_labels;
  }
  ~TrainingScope() {
    --g_training_depth;
    g_allow_target_labels = prev_allow;
  }
};

// Counts by label provenance: a translate-train document carries target-side
// tokens but its label came from the source split, so reading it is fine.
inline int guarded_label(const Document& d) {
  if (g_training_depth > 0 && !g_allow_target_labels &&
      (d.label_language == Language::tgt || d.label_domain == Domain::tgt))
    target_label_reads().fetch_add(1);
  return d.label;
}

// ---- pools and augmentation ------------------------------------------------

struct AugPair {
  Document original;
  Document augmented;
  AugStrategy strategy;
};

inline std::vector<Document> subsample_pool(const std::vector<Document>& docs, int cap, std::uint64_t seed) {
  if (cap <= 0 || static_cast<int>(docs.size()) <= cap) return docs;
  std::size_t keep = docs.size() / 10;
  if (keep == 0) keep = 1;
  Rng rng = Rng::derive(seed, "subsample_pool");
  std::vector<std::size_t> idx(docs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < keep; ++i) {
    std::size_t j = i + rng.next_below(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<Document> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(docs[idx[i]]);
  return out;
}

// Precomputes (original, augmented) pairs for the consistency loss. t2t pairs
// a target document with its round-trip paraphrase, t2s with its source-
// language translation; s2t pairs a source document with its target-language
// translation. Combination strategies concatenate the pair lists.
inline std::vector<AugPair> make_augmented_pairs(const std::vector<Document>& tgt_pool,
                                                 const std::vector<Document>& src_pool, AugStrategy strategy,
                                                 const CipherChannel& channel, double mu, std::uint64_t seed) {
  Rng rng = Rng::derive(seed ^ channel.rng_seed, "augment");
  std::vector<AugPair> pairs;
  auto add_t2t = [&]() {
    for (const auto& x : tgt_pool) pairs.push_back({x, back_translate(x, channel, mu, rng), AugStrategy::t2t});
  };
  auto add_t2s = [&]() {
    for (const auto& x : tgt_pool)
      pairs.push_back({x, translate(x, channel, Direction::tgt_to_src, mu, rng), AugStrategy::t2s});
  };
  auto add_s2t = [&]() {
    if (src_pool.empty()) throw std::invalid_argument("make_augmented_pairs: s2t requires a source-domain pool");
    for (const auto& x : src_pool)
      pairs.push_back({x, translate(x, channel, Direction::src_to_tgt, mu, rng), AugStrategy::s2t});
  };
  switch (strategy) {
    case AugStrategy::t2t: add_t2t(); break;
    case AugStrategy::t2s: add_t2s(); break;
    case AugStrategy::s2t: add_s2t(); break;
    case AugStrategy::t2t_t2s: add_t2t(); add_t2s(); break;
    case AugStrategy::t2t_s2t: add_t2t(); add_s2t(); break;
  }
  if ((strategy != AugStrategy::s2t && tgt_pool.empty()))
    throw std::invalid_argument("make_augmented_pairs: empty unlabeled pool");
  return pairs;
}

// ---- MLM pre-training ------------------------------------------------------

struct MlmRunResult {
  Checkpoint checkpoint;
  std::vector<double> losses;
};

inline MlmRunResult run_mlm(ModelParams params, std::int64_t start_step, const std::vector<Document>& corpus,
                            const Vocab& vocab, int steps, int batch_size, double lr, double mask_prob,
                            std::uint64_t seed, int max_len) {
  if (corpus.empty()) throw std::invalid_argument("run_mlm: empty corpus");
  auto tensors = params.all();
  AdamState opt = AdamState::make(tensors, lr);
  Rng batch_rng = Rng::derive(seed, "mlm_batch");
  Rng mask_rng = Rng::derive(seed, "mlm_mask");
  Rng drop_rng = Rng::derive(seed, "mlm_dropout");
  MlmRunResult res;
  for (int step = 0; step < steps; ++step) {
    std::vector<Document> batch;
    batch.reserve(batch_size);
    for (int i = 0; i < batch_size; ++i) batch.push_back(corpus[batch_rng.next_below(corpus.size())]);
    EncodedBatch enc = encode_batch(batch, vocab, max_len);
    MaskedBatch masked = apply_mlm_mask(enc, mask_prob, vocab.size(), mask_rng);
    Tape tape;
    Tensor loss = mlm_loss(tape, params, masked, /*train_mode=*/true, &drop_rng);
    if (std::isnan(loss->values[0])) throw std::runtime_error("run_mlm: NaN loss at step " + std::to_string(step));
    zero_grads(tensors);
    tape.backward(loss);
    adam_step(tensors, opt);
    res.losses.push_back(loss->values[0]);
  }
  res.checkpoint.config = params.config;
  res.checkpoint.step = start_step + steps;
  res.checkpoint.params = std::move(params);
  return res;
}

// Generic bilingual MLM pre-training on the drift-free general corpus; the
// shared base checkpoint for all downstream runs.
inline MlmRunResult pretrain_generic(const ModelConfig& config, const std::vector<Document>& general_corpus,
                                     const Vocab& vocab, const TrainConfig& cfg) {
  ModelParams params = init_params(config, cfg.seed);
  auto res = run_mlm(std::move(params), 0, general_corpus, vocab, cfg.pretrain_steps, cfg.pretrain_batch,
                     cfg.pretrain_lr, cfg.mask_prob, cfg.seed, cfg.max_len);
  res.checkpoint.vocab_hash = vocab_hash(vocab);
  return res;
}

// Continues MLM training on domain data: per_target uses U_tgt only, merged
// uses U_tgt plus U_src.
inline MlmRunResult pretrain_domain(const Checkpoint& base, const CorpusBundle& bundle, const Vocab& vocab,
                                    DomainMlmMode mode, const TrainConfig& cfg) {
  std::vector<Document> corpus = bundle.unlabeled_tgt;
  if (mode == DomainMlmMode::merged)
    corpus.insert(corpus.end(), bundle.unlabeled_src.begin(), bundle.unlabeled_src.end());
  if (corpus.empty()) throw std::invalid_argument("pretrain_domain: empty unlabeled set");
  auto res = run_mlm(clone_params(base.params), base.step, corpus, vocab, cfg.pretrain_steps, cfg.pretrain_batch,
                     cfg.pretrain_lr, cfg.mask_prob, cfg.seed + 1, cfg.max_len);
  res.checkpoint.vocab_hash = base.vocab_hash;
  return res;
}

// ---- supervised / UDA training ---------------------------------------------

struct TrainedModel {
  ModelParams params;
  nlohmann::json provenance;
  std::vector<double> losses;
};

// Applies the translate-train strategy to the labeled set.
inline std::vector<Document> apply_translate_strategy(const std::vector<Document>& labeled_src,
                                                      TranslateStrategy strategy, const CipherChannel& channel) {
  if (strategy == TranslateStrategy::english) return labeled_src;
  Rng rng = Rng::derive(channel.rng_seed, "translate_train");  // mu=0 is deterministic anyway
  std::vector<Document> translated;
  translated.reserve(labeled_src.size());
  for (const auto& d : labeled_src) translated.push_back(translate(d, channel, Direction::src_to_tgt, 0.0, rng));
  if (strategy == TranslateStrategy::tr_train) return translated;
  std::vector<Document> both = labeled_src;
  both.insert(both.end(), translated.begin(), translated.end());
  return both;
}

// 90/10 deterministic split of the labeled set; the tail is the held-out
// source-language dev split used for hyperparameter and teacher selection.
inline std::pair<std::vector<Document>, std::vector<Document>> dev_split(const std::vector<Document>& labeled) {
  std::size_t n_dev = labeled.size() / 10;
  std::vector<Document> train(labeled.begin(), labeled.end() - n_dev);
  std::vector<Document> dev(labeled.end() - n_dev, labeled.end());
  return {train, dev};
}

// Joint UDA objective: TSA-masked CE on the labeled batch plus
// lambda * mean KL(p(y|x_aug) || stop_gradient(p(y|x))), argument order as
// configured. One optimizer step consumes one labeled and one unlabeled batch
// as a single combined loss. With lambda == 0 the unlabeled branch is skipped
// entirely and the trajectory coincides with plain fine-tuning.
inline TrainedModel run_training(ModelParams params, const std::vector<Document>& labeled,
                                 const std::vector<AugPair>& aug_pairs, const Vocab& vocab, const TrainConfig& cfg,
                                 int labeled_batch_size, bool allow_target_labels = false) {
  cfg.validate();
  if (labeled.empty()) throw std::invalid_argument("run_training: empty labeled set");
  if (cfg.lambda > 0.0 && aug_pairs.empty()) throw std::invalid_argument("run_training: consistency enabled but no pairs");
  TrainingScope scope(allow_target_labels);
  auto tensors = params.all();
  AdamState opt = AdamState::make(tensors, cfg.lr);
  TsaSchedule tsa{cfg.tsa, cfg.steps, params.config.num_classes};
  Rng lab_rng = Rng::derive(cfg.seed, "labeled_batch");
  Rng unl_rng = Rng::derive(cfg.seed, "unlabeled_batch");
  Rng drop_lab = Rng::derive(cfg.seed, "dropout_labeled");
  Rng drop_unl = Rng::derive(cfg.seed, "dropout_unlabeled");
  TrainedModel out;
  for (int step = 0; step < cfg.steps; ++step) {
    Tape tape;
    // labeled branch
    std::vector<Document> lbatch;
    std::vector<int> labels;
    for (int i = 0; i < labeled_batch_size; ++i) {
      const Document& d = labeled[lab_rng.next_below(labeled.size())];
      lbatch.push_back(d);
      labels.push_back(guarded_label(d));
    }
    EncodedBatch enc = encode_batch(lbatch, vocab, cfg.max_len);
    ClassifierOutput co = classify(tape, params, enc, /*train_mode=*/true, &drop_lab);
    double eta = tsa_threshold(tsa, step);
    std::vector<double> weights = tsa_mask(co.probs, labels, eta);
    Tensor loss = cross_entropy_logits(tape, co.logits, labels, weights);
    // consistency branch
    if (cfg.lambda > 0.0) {
      std::vector<Document> originals, augmented;
      for (int i = 0; i < cfg.unlabeled_batch; ++i) {
        const AugPair& pair = aug_pairs[unl_rng.next_below(aug_pairs.size())];
        originals.push_back(pair.original);
        augmented.push_back(pair.augmented);
      }
      EncodedBatch enc_orig = encode_batch(originals, vocab, cfg.max_len);
      EncodedBatch enc_aug = encode_batch(augmented, vocab, cfg.max_len);
      // teacher branch: stop-gradient, dropout off
      Tape frozen;
      frozen.grad_enabled = false;
      ClassifierOutput teacher = classify(frozen, params, enc_orig, /*train_mode=*/false);
      ClassifierOutput student = classify(tape, params, enc_aug, /*train_mode=*/true, &drop_unl);
      Tensor cons = (cfg.kl_order == KlOrder::as_paper)
                        ? kl_softmax_vs_const(tape, student.logits, teacher.probs)
                        : kl_const_vs_softmax(tape, teacher.probs, student.logits);
      loss = add(tape, loss, scale(tape, cons, cfg.lambda));
    }
    if (std::isnan(loss->values[0])) throw std::runtime_error("run_training: NaN loss at step " + std::to_string(step));
    zero_grads(tensors);
    tape.backward(loss);
    adam_step(tensors, opt);
    out.losses.push_back(loss->values[0]);
  }
  out.params = std::move(params);
  return out;
}

// Fine-tuning (Ft): CE training on the strategy-selected labeled set.
inline TrainedModel finetune_supervised(const Checkpoint& checkpoint, const std::vector<Document>& labeled,
                                        const Vocab& vocab, const TrainConfig& cfg, bool allow_target_labels = false) {
  TrainConfig c = cfg;
  c.lambda = 0.0;
  return run_training(clone_params(checkpoint.params), labeled, {}, vocab, c, cfg.ft_batch, allow_target_labels);
}

inline TrainedModel train_uda(const Checkpoint& checkpoint, const std::vector<Document>& labeled,
                              const std::vector<AugPair>& aug_pairs, const Vocab& vocab, const TrainConfig& cfg,
                              bool allow_target_labels = false) {
  return run_training(clone_params(checkpoint.params), labeled, aug_pairs, vocab, cfg, cfg.labeled_batch,
                      allow_target_labels);
}

// Teacher soft distributions over a pool, dropout off.
inline std::vector<double> score_pool(const ModelParams& teacher, const std::vector<Document>& pool,
                                      const Vocab& vocab, int max_len, int batch_size = 128) {
  std::vector<double> out;
  std::size_t K = teacher.config.num_classes;
  out.reserve(pool.size() * K);
  for (std::size_t start = 0; start < pool.size(); start += batch_size) {
    std::size_t n = std::min<std::size_t>(batch_size, pool.size() - start);
    std::vector<Document> batch(pool.begin() + start, pool.begin() + start + n);
    Tape tape;
    tape.grad_enabled = false;
    ClassifierOutput co = classify(tape, teacher, encode_batch(batch, vocab, max_len));
    out.insert(out.end(), co.probs.begin(), co.probs.end());
  }
  return out;
}

// Self-training distillation: a fresh student fits the teacher's soft
// distributions over U_tgt with KL(student || teacher), student first. No
// labeled or augmented data is used.
inline TrainedModel self_train(const ModelParams& teacher, const Checkpoint& fresh_checkpoint,
                               const std::vector<Document>& u_tgt, const Vocab& vocab, const TrainConfig& cfg) {
  if (u_tgt.empty()) throw std::invalid_argument("self_train: empty unlabeled target set");
  TrainingScope scope;
  std::vector<double> soft = score_pool(teacher, u_tgt, vocab, cfg.max_len);
  std::size_t K = teacher.config.num_classes;
  ModelParams params = clone_params(fresh_checkpoint.params);
  auto tensors = params.all();
  AdamState opt = AdamState::make(tensors, cfg.lr);
  Rng batch_rng = Rng::derive(cfg.seed, "distill_batch");
  Rng drop_rng = Rng::derive(cfg.seed, "distill_dropout");
  TrainedModel out;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<Document> batch;
    std::vector<double> targets;
    for (int i = 0; i < cfg.ft_batch; ++i) {
      std::size_t idx = batch_rng.next_below(u_tgt.size());
      batch.push_back(u_tgt[idx]);
      targets.insert(targets.end(), soft.begin() + idx * K, soft.begin() + (idx + 1) * K);
    }
    Tape tape;
    ClassifierOutput co = classify(tape, params, encode_batch(batch, vocab, cfg.max_len), /*train_mode=*/true, &drop_rng);
    Tensor loss = kl_softmax_vs_const(tape, co.logits, targets);
    if (std::isnan(loss->values[0])) throw std::runtime_error("self_train: NaN loss at step " + std::to_string(step));
    zero_grads(tensors);
    tape.backward(loss);
    adam_step(tensors, opt);
    out.losses.push_back(loss->values[0]);
  }
  out.params = std::move(params);
  return out;
}

// ---- evaluation ------------------------------------------------------------

// Error rate of argmax predictions on a labeled split; translated mode feeds
// translate(tgt->src, mu=0) of each document (translate-test).
inline double evaluate(const ModelParams& params, const std::vector<Document>& test_split, EvalInput eval_input,
                       const CipherChannel& channel, const Vocab& vocab, int max_len = 64) {
  if (test_split.empty()) throw std::invalid_argument("evaluate: empty test split");
  std::vector<Document> docs;
  docs.reserve(test_split.size());
  if (eval_input == EvalInput::translated) {
    Rng rng(0);  // mu=0 path draws nothing
    for (const auto& d : test_split) docs.push_back(translate(d, channel, Direction::tgt_to_src, 0.0, rng));
  } else {
    docs = test_split;
  }
  std::size_t K = params.config.num_classes;
  std::size_t errors = 0, total = 0;
  for (std::size_t start = 0; start < docs.size(); start += 128) {
    std::size_t n = std::min<std::size_t>(128, docs.size() - start);
    std::vector<Document> batch(docs.begin() + start, docs.begin() + start + n);
    Tape tape;
    tape.grad_enabled = false;
    ClassifierOutput co = classify(tape, params, encode_batch(batch, vocab, max_len));
    for (std::size_t r = 0; r < n; ++r) {
      int label = test_split[start + r].label;
      if (label < 0) throw std::invalid_argument("evaluate: test labels required");
      if (argmax_row(co.probs, r, K) != label) ++errors;
      ++total;
    }
  }
  return static_cast<double>(errors) / static_cast<double>(total);
}

// Dev error on source-language labeled docs (used for model selection).
inline double dev_error(const ModelParams& params, const std::vector<Document>& dev, const Vocab& vocab, int max_len) {
  if (dev.empty()) throw std::invalid_argument("dev_error: empty dev split");
  std::size_t K = params.config.num_classes;
  std::size_t errors = 0;
  for (std::size_t start = 0; start < dev.size(); start += 128) {
    std::size_t n = std::min<std::size_t>(128, dev.size() - start);
    std::vector<Document> batch(dev.begin() + start, dev.begin() + start + n);
    Tape tape;
    tape.grad_enabled = false;
    ClassifierOutput co = classify(tape, params, encode_batch(batch, vocab, max_len));
    for (std::size_t r = 0; r < n; ++r)
      if (argmax_row(co.probs, r, K) != dev[start + r].label) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(dev.size());
}

}  // namespace xluda
