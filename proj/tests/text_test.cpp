// Copyright 2026 The xluda authors
// SPDX-License-Identifier: Apache-2.0
#include "xluda/text.hpp"

#include <gtest/gtest.h>

using namespace xluda;

namespace {

GenSpec spec200() {
  GenSpec s;
  s.vocab_size = 200;
  s.n_labeled_src = 50;
  s.n_unlabeled_tgt = 50;
  s.n_unlabeled_src = 50;
  s.n_test_tgt = 50;
  s.n_test_src = 50;
  s.n_general = 50;
  return s;
}

}  // namespace

TEST(Vocab, SizeAndSpecials) {
  GenSpec s = spec200();
  CorpusBundle b = generate_corpus(s, 1);
  Vocab v = build_vocab(b);
  EXPECT_EQ(v.size(), 4 + 2 * s.vocab_size);
  EXPECT_EQ(v.id_of("<pad>"), kPadId);
  EXPECT_EQ(v.id_of("<bos>"), kBosId);
  EXPECT_EQ(v.id_of("s0"), kNumSpecials);
  EXPECT_EQ(v.id_of("t0"), kNumSpecials + s.vocab_size);
}

TEST(Vocab, DeterministicAssignment) {
  GenSpec s = spec200();
  CorpusBundle b = generate_corpus(s, 1);
  Vocab v1 = build_vocab(b);
  Vocab v2 = build_vocab(b);
  EXPECT_EQ(v1.id_to_surface, v2.id_to_surface);
}

TEST(Vocab, UnknownTokenMapsToUnk) {
  Vocab v = build_vocab(spec200());
  EXPECT_EQ(v.id_of("s99999"), kUnkId);
}

TEST(Vocab, JsonRoundTrip) {
  Vocab v = build_vocab(spec200());
  Vocab back = vocab_from_json(vocab_to_json(v));
  EXPECT_EQ(back.id_to_surface, v.id_to_surface);
  EXPECT_EQ(vocab_hash(back), vocab_hash(v));
}

TEST(Encode, TruncatesToMaxLen) {
  GenSpec s = spec200();
  Vocab v = build_vocab(s);
  Document d;
  d.language = Language::src;
  for (int i = 0; i < 74; ++i) d.tokens.push_back("s" + std::to_string(i % 50));
  EncodedBatch b = encode_batch({d}, v, 64);
  EXPECT_EQ(b.seq_len, 64u);
  EXPECT_EQ(b.ids[0], kBosId);
  for (std::size_t i = 0; i < b.seq_len; ++i) EXPECT_EQ(b.attention_mask[i], 1.0);
}

TEST(Encode, NoPadWhenEqualLengths) {
  GenSpec s = spec200();
  Vocab v = build_vocab(s);
  Document d1, d2;
  for (int i = 0; i < 10; ++i) {
    d1.tokens.push_back("s1");
    d2.tokens.push_back("s2");
  }
  EncodedBatch b = encode_batch({d1, d2}, v, 64);
  EXPECT_EQ(b.seq_len, 11u);
  for (double m : b.attention_mask) EXPECT_EQ(m, 1.0);
}

TEST(Encode, EmptyDocIsBosPlusPad) {
  GenSpec s = spec200();
  Vocab v = build_vocab(s);
  Document empty;
  Document other;
  other.tokens = {"s1", "s2", "s3"};
  EncodedBatch b = encode_batch({empty, other}, v, 64);
  EXPECT_EQ(b.ids[0], kBosId);
  for (std::size_t i = 1; i < b.seq_len; ++i) {
    EXPECT_EQ(b.ids[i], kPadId);
    EXPECT_EQ(b.attention_mask[i], 0.0);
  }
}

TEST(Encode, RoundTripIdentityOnIds) {
  GenSpec s = spec200();
  CorpusBundle bundle = generate_corpus(s, 2);
  Vocab v = build_vocab(bundle);
  const Document& d = bundle.labeled_src[0];
  EncodedBatch b = encode_batch({d}, v, 64);
  for (std::size_t i = 0; i < d.tokens.size(); ++i) EXPECT_EQ(v.surface_of(b.ids[i + 1]), d.tokens[i]);
}

TEST(Mask, SelectionFractionBinomial) {
  GenSpec s = spec200();
  s.len_min = 40;
  s.len_max = 40;
  s.n_labeled_src = 300;
  CorpusBundle bundle = generate_corpus(s, 3);
  Vocab v = build_vocab(bundle);
  EncodedBatch b = encode_batch(bundle.labeled_src, v, 64);
  Rng rng(5);
  MaskedBatch m = apply_mlm_mask(b, 0.15, v.size(), rng);
  long selected = 0, eligible = 0;
  for (std::size_t i = 0; i < m.target_ids.size(); ++i) {
    if (b.ids[i] >= kNumSpecials) {
      ++eligible;
      selected += m.target_ids[i] != kIgnoreId;
    }
  }
  ASSERT_GT(eligible, 10000);
  double frac = static_cast<double>(selected) / eligible;
  double se = std::sqrt(0.15 * 0.85 / eligible);
  EXPECT_NEAR(frac, 0.15, 3 * se);
}

TEST(Mask, SpecialsNeverSelected) {
  GenSpec s = spec200();
  CorpusBundle bundle = generate_corpus(s, 4);
  Vocab v = build_vocab(bundle);
  EncodedBatch b = encode_batch(bundle.labeled_src, v, 32);
  Rng rng(6);
  MaskedBatch m = apply_mlm_mask(b, 0.5, v.size(), rng);
  for (std::size_t i = 0; i < b.ids.size(); ++i)
    if (b.ids[i] < kNumSpecials) {
      EXPECT_EQ(m.target_ids[i], kIgnoreId);
      EXPECT_EQ(m.input_ids[i], b.ids[i]);
    }
}

TEST(Mask, DeterministicByRng) {
  GenSpec s = spec200();
  CorpusBundle bundle = generate_corpus(s, 4);
  Vocab v = build_vocab(bundle);
  EncodedBatch b = encode_batch(bundle.labeled_src, v, 32);
  Rng r1(7), r2(7);
  MaskedBatch m1 = apply_mlm_mask(b, 0.15, v.size(), r1);
  MaskedBatch m2 = apply_mlm_mask(b, 0.15, v.size(), r2);
  EXPECT_EQ(m1.input_ids, m2.input_ids);
  EXPECT_EQ(m1.target_ids, m2.target_ids);
}

TEST(Mask, UnselectedPositionsUntouched) {
  GenSpec s = spec200();
  CorpusBundle bundle = generate_corpus(s, 4);
  Vocab v = build_vocab(bundle);
  EncodedBatch b = encode_batch(bundle.labeled_src, v, 32);
  Rng rng(8);
  MaskedBatch m = apply_mlm_mask(b, 0.15, v.size(), rng);
  for (std::size_t i = 0; i < b.ids.size(); ++i)
    if (m.target_ids[i] == kIgnoreId) EXPECT_EQ(m.input_ids[i], b.ids[i]);
}
