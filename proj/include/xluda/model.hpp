// Copyright 2026 The xluda authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xluda/rng.hpp"
#include "xluda/tensor.hpp"
#include "xluda/text.hpp"

namespace xluda {

// Tiny transformer encoder with BOS (CLS-style) pooling, a linear
// classification head, and an MLM head tied to the token embedding.

struct ModelConfig {
  int d_model = 32;
  int n_heads = 2;
  int n_layers = 2;
  int ffn_dim = 64;
  int vocab_size = 0;
  int num_classes = 4;
  int max_positions = 64;
  double dropout_prob = 0.1;

  void validate() const {
    if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || ffn_dim <= 0) throw std::invalid_argument("ModelConfig: non-positive dims");
    if (d_model % n_heads != 0) throw std::invalid_argument("ModelConfig: d_model not divisible by n_heads");
    if (vocab_size <= 0 || num_classes <= 0 || max_positions <= 0) throw std::invalid_argument("ModelConfig: bad sizes");
    if (dropout_prob < 0.0 || dropout_prob >= 1.0) throw std::invalid_argument("ModelConfig: dropout outside [0,1)");
  }
};

inline nlohmann::json modelconfig_to_json(const ModelConfig& c) {
  return nlohmann::json{{"d_model", c.d_model},         {"n_heads", c.n_heads},
                        {"n_layers", c.n_layers},       {"ffn_dim", c.ffn_dim},
                        {"vocab_size", c.vocab_size},   {"num_classes", c.num_classes},
                        {"max_positions", c.max_positions}, {"dropout_prob", c.dropout_prob}};
}

inline ModelConfig modelconfig_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model");
  c.n_heads = j.at("n_heads");
  c.n_layers = j.at("n_layers");
  c.ffn_dim = j.at("ffn_dim");
  c.vocab_size = j.at("vocab_size");
  c.num_classes = j.at("num_classes");
  c.max_positions = j.at("max_positions");
  c.dropout_prob = j.at("dropout_prob");
  c.validate();
  return c;
}

struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gain, ln1_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor ln2_gain, ln2_bias;
};

struct ModelParams {
  ModelConfig config;
  Tensor tok_emb;   // [V, d]; also the (transposed) MLM projection
  Tensor pos_emb;   // [max_positions, d]
  std::vector<LayerParams> layers;
  Tensor cls_w;     // [d, K]
  Tensor cls_b;     // [K]
  Tensor mlm_bias;  // [V]

  // Fixed parameter ordering used by the optimizer and checkpoints.
  std::vector<Tensor> all() const {
    std::vector<Tensor> out{tok_emb, pos_emb};
    for (const auto& l : layers) {
      out.insert(out.end(), {l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo, l.ln1_gain, l.ln1_bias,
                             l.ffn_w1, l.ffn_b1, l.ffn_w2, l.ffn_b2, l.ln2_gain, l.ln2_bias});
    }
    out.insert(out.end(), {cls_w, cls_b, mlm_bias});
    return out;
  }
};

namespace detail {

inline Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = (2.0 * rng.next_double() - 1.0) * a;
  return make_tensor({fan_in, fan_out}, std::move(v), true);
}

inline Tensor const_vec(std::size_t n, double value) {
  return make_tensor({n}, std::vector<double>(n, value), true);
}

}  // namespace detail

inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = Rng::derive(seed, "init_params");
  std::size_t d = config.d_model, V = config.vocab_size, F = config.ffn_dim;
  ModelParams p;
  p.config = config;
  p.tok_emb = detail::xavier(V, d, rng);
  p.pos_emb = detail::xavier(config.max_positions, d, rng);
  for (int l = 0; l < config.n_layers; ++l) {
    LayerParams lp;
    lp.wq = detail::xavier(d, d, rng);
    lp.bq = detail::const_vec(d, 0.0);
    lp.wk = detail::xavier(d, d, rng);
    lp.bk = detail::const_vec(d, 0.0);
    lp.wv = detail::xavier(d, d, rng);
    lp.bv = detail::const_vec(d, 0.0);
    lp.wo = detail::xavier(d, d, rng);
    lp.bo = detail::const_vec(d, 0.0);
    lp.ln1_gain = detail::const_vec(d, 1.0);
    lp.ln1_bias = detail::const_vec(d, 0.0);
    lp.ffn_w1 = detail::xavier(d, F, rng);
    lp.ffn_b1 = detail::const_vec(F, 0.0);
    lp.ffn_w2 = detail::xavier(F, d, rng);
    lp.ffn_b2 = detail::const_vec(d, 0.0);
    lp.ln2_gain = detail::const_vec(d, 1.0);
    lp.ln2_bias = detail::const_vec(d, 0.0);
    p.layers.push_back(std::move(lp));
  }
  p.cls_w = detail::xavier(d, config.num_classes, rng);
  p.cls_b = detail::const_vec(config.num_classes, 0.0);
  p.mlm_bias = detail::const_vec(V, 0.0);
  return p;
}

namespace detail {

inline Tensor dropout(Tape& tape, Tensor x, double prob, bool train_mode, Rng* rng) {
  if (!train_mode || prob <= 0.0) return x;
  std::vector<double> mask(x->size());
  double keep = 1.0 - prob;
  for (auto& m : mask) m = (rng->next_double() < keep) ? 1.0 / keep : 0.0;
  return mul(tape, x, make_tensor(x->shape, std::move(mask)));
}

}  // namespace detail

// Runs the encoder over a packed batch; returns [batch*seq, d_model] states.
// PAD positions are excluded as attention keys via the mask.
inline Tensor encode(Tape& tape, const ModelParams& p, const std::vector<int>& ids,
                     const std::vector<double>& attention_mask, std::size_t batch, std::size_t seq,
                     bool train_mode = false, Rng* dropout_rng = nullptr) {
  if (seq > static_cast<std::size_t>(p.config.max_positions))
    throw std::invalid_argument("encode: seq_len exceeds max_positions");
  if (ids.size() != batch * seq || attention_mask.size() != batch * seq)
    throw std::invalid_argument("encode: batch geometry mismatch");
  double dp = p.config.dropout_prob;
  std::vector<int> pos_ids(batch * seq);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < seq; ++t) pos_ids[b * seq + t] = static_cast<int>(t);
  Tensor h = add(tape, embedding_lookup(tape, p.tok_emb, ids), embedding_lookup(tape, p.pos_emb, pos_ids));
  for (const auto& l : p.layers) {
    Tensor q = add_bias(tape, matmul(tape, h, l.wq), l.bq);
    Tensor k = add_bias(tape, matmul(tape, h, l.wk), l.bk);
    Tensor v = add_bias(tape, matmul(tape, h, l.wv), l.bv);
    Tensor a = attention(tape, q, k, v, batch, seq, p.config.n_heads, attention_mask);
    Tensor o = add_bias(tape, matmul(tape, a, l.wo), l.bo);
    o = detail::dropout(tape, o, dp, train_mode, dropout_rng);
    h = layer_norm(tape, add(tape, h, o), l.ln1_gain, l.ln1_bias);
    Tensor f = relu(tape, add_bias(tape, matmul(tape, h, l.ffn_w1), l.ffn_b1));
    f = add_bias(tape, matmul(tape, f, l.ffn_w2), l.ffn_b2);
    f = detail::dropout(tape, f, dp, train_mode, dropout_rng);
    h = layer_norm(tape, add(tape, h, f), l.ln2_gain, l.ln2_bias);
  }
  return h;
}

struct ClassifierOutput {
  Tensor logits;               // [batch, K], on the tape
  std::vector<double> probs;   // softmax rows, detached
};

// Classification logits from the BOS position of each sequence.
inline ClassifierOutput classify(Tape& tape, const ModelParams& p, const EncodedBatch& batch,
                                 bool train_mode = false, Rng* dropout_rng = nullptr) {
  Tensor h = encode(tape, p, batch.ids, batch.attention_mask, batch.batch, batch.seq_len, train_mode, dropout_rng);
  std::vector<std::size_t> bos_rows(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) bos_rows[b] = b * batch.seq_len;
  Tensor pooled = gather_rows(tape, h, bos_rows);
  Tensor logits = add_bias(tape, matmul(tape, pooled, p.cls_w), p.cls_b);
  ClassifierOutput out;
  out.logits = logits;
  std::size_t K = p.config.num_classes;
  out.probs.resize(batch.batch * K);
  for (std::size_t b = 0; b < batch.batch; ++b) softmax_row(&logits->values[b * K], &out.probs[b * K], K);
  return out;
}

// Per-position vocabulary logits via the tied embedding transpose plus bias.
inline Tensor mlm_logits(Tape& tape, const ModelParams& p, const MaskedBatch& masked, bool train_mode = false,
                         Rng* dropout_rng = nullptr) {
  Tensor h = encode(tape, p, masked.input_ids, masked.attention_mask, masked.batch, masked.seq_len, train_mode, dropout_rng);
  return add_bias(tape, matmul_nt(tape, h, p.tok_emb), p.mlm_bias);
}

// Mean CE over predicted positions (target kIgnoreId contributes nothing).
inline Tensor mlm_loss(Tape& tape, const ModelParams& p, const MaskedBatch& masked, bool train_mode = false,
                       Rng* dropout_rng = nullptr) {
  Tensor logits = mlm_logits(tape, p, masked, train_mode, dropout_rng);
  return cross_entropy_logits(tape, logits, masked.target_ids);
}

inline int argmax_row(const std::vector<double>& probs, std::size_t row, std::size_t K) {
  int best = 0;
  for (std::size_t c = 1; c < K; ++c)
    if (probs[row * K + c] > probs[row * K + best]) best = static_cast<int>(c);
  return best;
}

// ---- checkpoints -----------------------------------------------------------

struct Checkpoint {
  ModelConfig config;
  std::uint64_t vocab_hash = 0;
  std::int64_t step = 0;
  ModelParams params;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["config"] = modelconfig_to_json(c.config);
  j["vocab_hash"] = c.vocab_hash;
  j["step"] = c.step;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& t : c.params.all()) arrays.push_back(nlohmann::json{{"shape", t->shape}, {"values", t->values}});
  j["params"] = arrays;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint c;
  c.config = modelconfig_from_json(j.at("config"));
  c.vocab_hash = j.at("vocab_hash");
  c.step = j.at("step");
  c.params = init_params(c.config, 0);
  auto tensors = c.params.all();
  const auto& arrays = j.at("params");
  if (arrays.size() != tensors.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto shape = arrays[i].at("shape").get<std::vector<std::size_t>>();
    auto values = arrays[i].at("values").get<std::vector<double>>();
    if (shape != tensors[i]->shape || values.size() != tensors[i]->values.size())
      throw std::runtime_error("checkpoint: tensor shape mismatch at index " + std::to_string(i));
    tensors[i]->values = std::move(values);
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f << checkpoint_to_json(c).dump();
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  f >> j;
  return checkpoint_from_json(j);
}

inline std::uint64_t checkpoint_hash(const Checkpoint& c) {
  std::uint64_t h = fnv1a(checkpoint_to_json(c).dump());
  return h;
}

// Deep copy so training can own a mutable set without touching the source.
inline ModelParams clone_params(const ModelParams& src) {
  ModelParams dst = init_params(src.config, 0);
  auto s = src.all();
  auto d = dst.all();
  for (std::size_t i = 0; i < s.size(); ++i) d[i]->values = s[i]->values;
  return dst;
}

}  // namespace xluda
