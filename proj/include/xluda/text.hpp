// Copyright 2026 The xluda authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "xluda/corpus.hpp"
#include "xluda/rng.hpp"

namespace xluda {

constexpr int kPadId = 0;
constexpr int kUnkId = 1;
constexpr int kMaskId = 2;
constexpr int kBosId = 3;
constexpr int kNumSpecials = 4;
constexpr int kIgnoreId = -1;

// Shared bilingual vocabulary: specials followed by every surface form of
// both languages in generation order. Both languages always share one
// embedding space.
struct Vocab {
  std::vector<std::string> id_to_surface;  // includes specials
  std::unordered_map<std::string, int> surface_to_id;

  int size() const { return static_cast<int>(id_to_surface.size()); }

  int id_of(const std::string& surface) const {
    auto it = surface_to_id.find(surface);
    return it == surface_to_id.end() ? kUnkId : it->second;
  }

  const std::string& surface_of(int id) const { return id_to_surface.at(id); }
};

inline Vocab build_vocab(const GenSpec& spec) {
  Vocab v;
  v.id_to_surface = {"<pad>", "<unk>", "<mask>", "<bos>"};
  auto add_lang = [&](Language lang) {
    for (int i = 0; i < spec.vocab_size; ++i) v.id_to_surface.push_back(surface_form(spec, lang, i));
  };
  add_lang(Language::src);
  if (!spec.shared_surface) add_lang(Language::tgt);
  for (std::size_t i = 0; i < v.id_to_surface.size(); ++i) v.surface_to_id[v.id_to_surface[i]] = static_cast<int>(i);
  return v;
}

inline Vocab build_vocab(const CorpusBundle& bundle) {
  if (bundle.labeled_src.empty() && bundle.unlabeled_tgt.empty() && bundle.general_pretrain.empty())
    throw std::invalid_argument("build_vocab: empty bundle");
  return build_vocab(bundle.gen_spec);
}

struct EncodedBatch {
  std::vector<int> ids;             // [batch, seq_len] row-major
  std::vector<double> attention_mask;  // 1 for real positions, 0 for PAD
  std::vector<int> labels;          // empty when unlabeled
  std::size_t batch = 0;
  std::size_t seq_len = 0;
};

// Prepends BOS, truncates to max_len, right-pads to the batch max.
inline EncodedBatch encode_batch(const std::vector<Document>& docs, const Vocab& vocab, std::size_t max_len) {
  if (docs.empty()) throw std::invalid_argument("encode_batch: empty batch");
  std::size_t longest = 1;
  for (const auto& d : docs) longest = std::max(longest, std::min(d.tokens.size() + 1, max_len));
  EncodedBatch b;
  b.batch = docs.size();
  b.seq_len = longest;
  b.ids.assign(b.batch * longest, kPadId);
  b.attention_mask.assign(b.batch * longest, 0.0);
  bool any_label = false;
  for (const auto& d : docs) any_label = any_label || d.label >= 0;
  if (any_label) b.labels.assign(b.batch, -1);
  for (std::size_t r = 0; r < docs.size(); ++r) {
    const auto& d = docs[r];
    b.ids[r * longest] = kBosId;
    b.attention_mask[r * longest] = 1.0;
    std::size_t n = std::min(d.tokens.size(), max_len - 1);
    for (std::size_t t = 0; t < n; ++t) {
      b.ids[r * longest + 1 + t] = vocab.id_of(d.tokens[t]);
      b.attention_mask[r * longest + 1 + t] = 1.0;
    }
    if (any_label) b.labels[r] = d.label;
  }
  return b;
}

struct MaskedBatch {
  std::vector<int> input_ids;   // [batch, seq_len]
  std::vector<int> target_ids;  // original ids at predicted positions, kIgnoreId elsewhere
  std::vector<double> attention_mask;
  std::size_t batch = 0;
  std::size_t seq_len = 0;
};

// BERT-style masking: each non-special position is selected with mask_prob;
// selected positions become <mask> 80% of the time, a random vocabulary token
// 10%, and stay unchanged 10%.
inline MaskedBatch apply_mlm_mask(const EncodedBatch& batch, double mask_prob, int vocab_size, Rng& rng) {
  if (mask_prob <= 0.0 || mask_prob >= 1.0) throw std::invalid_argument("apply_mlm_mask: mask_prob outside (0,1)");
  MaskedBatch m;
  m.batch = batch.batch;
  m.seq_len = batch.seq_len;
  m.input_ids = batch.ids;
  m.attention_mask = batch.attention_mask;
  m.target_ids.assign(batch.ids.size(), kIgnoreId);
  for (std::size_t i = 0; i < batch.ids.size(); ++i) {
    int id = batch.ids[i];
    if (id < kNumSpecials) continue;  // never mask PAD/UNK/MASK/BOS
    if (rng.next_double() >= mask_prob) continue;
    m.target_ids[i] = id;
    double u = rng.next_double();
    if (u < 0.8)
      m.input_ids[i] = kMaskId;
    else if (u < 0.9)
      m.input_ids[i] = kNumSpecials + static_cast<int>(rng.next_below(vocab_size - kNumSpecials));
    // else: keep the original token
  }
  return m;
}

// ---- vocab serialization (for checkpoints) ---------------------------------

inline nlohmann::json vocab_to_json(const Vocab& v) { return nlohmann::json{{"id_to_surface", v.id_to_surface}}; }

inline Vocab vocab_from_json(const nlohmann::json& j) {
  Vocab v;
  v.id_to_surface = j.at("id_to_surface").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < v.id_to_surface.size(); ++i) v.surface_to_id[v.id_to_surface[i]] = static_cast<int>(i);
  return v;
}

inline std::uint64_t vocab_hash(const Vocab& v) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& s : v.id_to_surface) {
    h = fnv1a(s, h);
    h ^= '|';  // delimiter so ["ab","c"] and ["a","bc"] hash differently
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace xluda
