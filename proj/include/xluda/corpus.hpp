// Copyright 2026 The xluda authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xluda/rng.hpp"

namespace xluda {

enum class Language { src, tgt };
enum class Domain { src, tgt, general };

inline std::string to_string(Language l) { return l == Language::src ? "src" : "tgt"; }
inline std::string to_string(Domain d) {
  switch (d) {
    case Domain::src: return "src";
    case Domain::tgt: return "tgt";
    default: return "general";
  }
}

// Two-language, two-domain generative model. Each language's vocabulary of N
// tokens is laid out as K topic blocks of B tokens, K drift blocks of B
// tokens, and a shared background block covering the rest:
//
//   [0, K*B)        class-specific topic blocks (block k for class k)
//   [K*B, 2*K*B)    class-specific drift blocks (target domain only)
//   [2*K*B, N)      background tokens shared by all classes
//
// Source-domain class-k token distribution:
//   phi_k   = beta * U(background) + (1-beta) * U(topic block k)
// Target-domain:
//   phi'_k  = (1-delta) * phi_k + delta * U(drift block k)
struct GenSpec {
  int vocab_size = 200;           // N, per language
  int num_classes = 4;            // K
  int topic_block_size = 10;      // B
  double background_mass = 0.6;   // beta
  double domain_drift = 0.5;      // delta
  int len_min = 20;
  int len_max = 40;
  std::vector<double> label_prior;  // empty means uniform
  int n_labeled_src = 1000;
  int n_unlabeled_tgt = 5000;
  int n_unlabeled_src = 2000;
  int n_test_tgt = 1000;
  int n_test_src = 1000;
  int n_general = 2000;
  // When set, both languages share one surface vocabulary (identity cipher);
  // used for the monolingual cross-domain configuration.
  bool shared_surface = false;

  std::vector<double> prior() const {
    if (!label_prior.empty()) return label_prior;
    return std::vector<double>(num_classes, 1.0 / num_classes);
  }

  int background_lo() const { return 2 * num_classes * topic_block_size; }
  int background_size() const { return vocab_size - background_lo(); }

  void validate() const {
    if (vocab_size <= 0 || num_classes <= 0 || topic_block_size < 0)
      throw std::invalid_argument("GenSpec: N, K positive; B non-negative");
    if (background_mass < 0.0 || background_mass > 1.0) throw std::invalid_argument("GenSpec: background_mass outside [0,1]");
    if (domain_drift < 0.0 || domain_drift > 1.0) throw std::invalid_argument("GenSpec: domain_drift outside [0,1]");
    if (len_min <= 0 || len_min > len_max) throw std::invalid_argument("GenSpec: need 0 < len_min <= len_max");
    if (background_size() <= 0)
      throw std::invalid_argument("GenSpec: 2*K*B + background must fit in vocab_size");
    if (!label_prior.empty()) {
      if (static_cast<int>(label_prior.size()) != num_classes)
        throw std::invalid_argument("GenSpec: label_prior length != num_classes");
      double s = 0.0;
      for (double p : label_prior) {
        if (p < 0.0) throw std::invalid_argument("GenSpec: negative label_prior entry");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("GenSpec: label_prior must sum to 1");
    }
    for (int c : {n_labeled_src, n_unlabeled_tgt, n_unlabeled_src, n_test_tgt, n_test_src, n_general})
      if (c < 0) throw std::invalid_argument("GenSpec: negative split count");
  }
};

struct Document {
  std::vector<std::string> tokens;
  int label = -1;  // -1 means unlabeled
  Language language = Language::src;
  Domain domain = Domain::src;
  // Provenance of the label: translation rewrites tokens and language but the
  // label still comes from the original document, so these stay fixed. The
  // zero-shot guard keys on label provenance, not on the surface language.
  Language label_language = Language::src;
  Domain label_domain = Domain::src;
  std::string id;
};

struct CorpusBundle {
  std::vector<Document> labeled_src;
  std::vector<Document> unlabeled_tgt;
  std::vector<Document> unlabeled_src;
  std::vector<Document> test_tgt;
  std::vector<Document> test_src;
  std::vector<Document> general_pretrain;
  GenSpec gen_spec;
  std::uint64_t seed = 0;
};

// ---- surface forms ---------------------------------------------------------

inline std::string surface_form(const GenSpec& spec, Language lang, int index) {
  if (spec.shared_surface || lang == Language::src) return "s" + std::to_string(index);
  return "t" + std::to_string(index);
}

inline int surface_index(const std::string& tok) {
  if (tok.size() < 2 || (tok[0] != 's' && tok[0] != 't')) throw std::invalid_argument("surface_index: bad token " + tok);
  return std::stoi(tok.substr(1));
}

// ---- token distributions (closed form) -------------------------------------

// P(token index j | class k) in the given domain.
inline double token_prob(const GenSpec& spec, Domain domain, int k, int j) {
  int B = spec.topic_block_size;
  double p_src = 0.0;
  if (B == 0) {
    // no topic blocks: all mass is background, classes are indistinguishable
    p_src = (j >= spec.background_lo()) ? 1.0 / spec.background_size() : 0.0;
  } else if (j >= spec.background_lo())
    p_src = spec.background_mass / spec.background_size();
  else if (j >= k * B && j < (k + 1) * B)
    p_src = (1.0 - spec.background_mass) / B;
  if (domain != Domain::tgt) return p_src;
  double drift = 0.0;
  int dlo = (spec.num_classes + k) * B;
  if (B > 0 && j >= dlo && j < dlo + B) drift = 1.0 / B;
  return (1.0 - spec.domain_drift) * p_src + spec.domain_drift * drift;
}

// ---- document sampling -----------------------------------------------------

inline int sample_token_index(const GenSpec& spec, Domain domain, int k, Rng& rng) {
  int B = spec.topic_block_size;
  if (B == 0) return spec.background_lo() + static_cast<int>(rng.next_below(spec.background_size()));
  if (domain == Domain::tgt && rng.next_double() < spec.domain_drift)
    return (spec.num_classes + k) * B + static_cast<int>(rng.next_below(B));
  if (rng.next_double() < spec.background_mass)
    return spec.background_lo() + static_cast<int>(rng.next_below(spec.background_size()));
  if (B == 0)  // degenerate: no topic signal, fall back to background
    return spec.background_lo() + static_cast<int>(rng.next_below(spec.background_size()));
  return k * B + static_cast<int>(rng.next_below(B));
}

inline int sample_label(const GenSpec& spec, Rng& rng) {
  return static_cast<int>(rng.next_categorical(spec.prior()));
}

// Draws n documents from one (domain, language) cell. The general domain uses
// the drift-free source distribution with a uniform label that is discarded.
inline std::vector<Document> sample_documents(const GenSpec& spec, Domain domain, Language language, int n,
                                              bool labeled, std::uint64_t seed, const std::string& id_prefix) {
  spec.validate();
  Rng rng = Rng::derive(seed, "docs/" + id_prefix);
  std::vector<Document> docs;
  docs.reserve(n);
  std::vector<double> uniform(spec.num_classes, 1.0 / spec.num_classes);
  for (int i = 0; i < n; ++i) {
    Document d;
    d.domain = domain;
    d.language = language;
    d.label_language = language;
    d.label_domain = domain;
    d.id = id_prefix + "-" + std::to_string(i);
    int k = (domain == Domain::general) ? static_cast<int>(rng.next_categorical(uniform)) : sample_label(spec, rng);
    int len = static_cast<int>(rng.next_int(spec.len_min, spec.len_max));
    Domain sample_domain = (domain == Domain::general) ? Domain::src : domain;
    d.tokens.reserve(len);
    for (int t = 0; t < len; ++t)
      d.tokens.push_back(surface_form(spec, language, sample_token_index(spec, sample_domain, k, rng)));
    if (labeled) d.label = k;
    docs.push_back(std::move(d));
  }
  return docs;
}

inline CorpusBundle generate_corpus(const GenSpec& spec, std::uint64_t seed) {
  spec.validate();
  CorpusBundle b;
  b.gen_spec = spec;
  b.seed = seed;
  b.labeled_src = sample_documents(spec, Domain::src, Language::src, spec.n_labeled_src, true, seed, "L_src");
  b.unlabeled_tgt = sample_documents(spec, Domain::tgt, Language::tgt, spec.n_unlabeled_tgt, false, seed, "U_tgt");
  b.unlabeled_src = sample_documents(spec, Domain::src, Language::src, spec.n_unlabeled_src, false, seed, "U_src");
  b.test_tgt = sample_documents(spec, Domain::tgt, Language::tgt, spec.n_test_tgt, true, seed, "test_tgt");
  b.test_src = sample_documents(spec, Domain::src, Language::src, spec.n_test_src, true, seed, "test_src");
  // general corpus: drift-free, both languages mixed 50/50
  {
    Rng lang_rng = Rng::derive(seed, "general_lang");
    int n = spec.n_general;
    std::vector<Document> gen;
    gen.reserve(n);
    Rng rng = Rng::derive(seed, "docs/general");
    std::vector<double> uniform(spec.num_classes, 1.0 / spec.num_classes);
    for (int i = 0; i < n; ++i) {
      Language lang = (lang_rng.next_double() < 0.5) ? Language::src : Language::tgt;
      Document d;
      d.domain = Domain::general;
      d.language = lang;
      d.label_language = lang;
      d.label_domain = Domain::general;
      d.id = "general-" + std::to_string(i);
      int k = static_cast<int>(rng.next_categorical(uniform));
      int len = static_cast<int>(rng.next_int(spec.len_min, spec.len_max));
      d.tokens.reserve(len);
      for (int t = 0; t < len; ++t)
        d.tokens.push_back(surface_form(spec, lang, sample_token_index(spec, Domain::src, k, rng)));
      gen.push_back(std::move(d));
    }
    b.general_pretrain = std::move(gen);
  }
  return b;
}

// ---- Bayes oracle ----------------------------------------------------------

// Exact posterior argmax under the generative model; ties break to the lowest
// class index. Classes with zero likelihood are excluded.
inline int posterior_argmax(const GenSpec& spec, Domain domain, const std::vector<int>& token_indices) {
  const auto prior = spec.prior();
  int best = 0;
  double best_lp = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < spec.num_classes; ++k) {
    double lp = prior[k] > 0.0 ? std::log(prior[k]) : -std::numeric_limits<double>::infinity();
    for (int j : token_indices) {
      double p = token_prob(spec, domain, k, j);
      if (p <= 0.0) {
        lp = -std::numeric_limits<double>::infinity();
        break;
      }
      lp += std::log(p);
    }
    if (lp > best_lp) {
      best_lp = lp;
      best = k;
    }
  }
  return best;
}

// Monte-Carlo estimate of the Bayes error in the stated domain.
inline double bayes_error(const GenSpec& spec, Domain domain, int n_samples, std::uint64_t seed) {
  spec.validate();
  if (n_samples <= 0) throw std::invalid_argument("bayes_error: n_samples must be positive");
  if (domain == Domain::general) throw std::invalid_argument("bayes_error: domain must be src or tgt");
  Rng rng = Rng::derive(seed, "bayes_error");
  int errors = 0;
  std::vector<int> toks;
  for (int i = 0; i < n_samples; ++i) {
    int k = sample_label(spec, rng);
    int len = static_cast<int>(rng.next_int(spec.len_min, spec.len_max));
    toks.clear();
    for (int t = 0; t < len; ++t) toks.push_back(sample_token_index(spec, domain, k, rng));
    if (posterior_argmax(spec, domain, toks) != k) ++errors;
  }
  return static_cast<double>(errors) / n_samples;
}

// ---- cipher translation channel --------------------------------------------

enum class Direction { src_to_tgt, tgt_to_src };

// Token bijection (index i <-> index i across the two surface vocabularies)
// plus a confusion sampler: row i puts mass 1-eps on i and eps/m on each of
// the m cyclically adjacent indices within the same block. This doubles as
// the "MT system" and the augmentation function.
struct CipherChannel {
  GenSpec spec;  // block layout source
  double confusion_eps = 0.0;
  int neighborhood_size = 4;
  std::uint64_t rng_seed = 0;

  static CipherChannel make(const GenSpec& spec, double eps, int m, std::uint64_t rng_seed) {
    spec.validate();
    if (eps < 0.0 || eps >= 1.0) throw std::invalid_argument("CipherChannel: eps outside [0,1)");
    if (m <= 0) throw std::invalid_argument("CipherChannel: neighborhood_size must be positive");
    if (eps > 0.0) {
      int min_block = spec.background_size();
      if (spec.topic_block_size > 0) min_block = std::min(min_block, spec.topic_block_size);
      if (m >= min_block)
        throw std::invalid_argument("CipherChannel: neighborhood_size must be smaller than the smallest block");
    }
    return CipherChannel{spec, eps, m, rng_seed};
  }

  // [lo, lo+size) block containing index j.
  std::pair<int, int> block_of(int j) const {
    int B = spec.topic_block_size;
    if (j < spec.background_lo() && B > 0) return {(j / B) * B, B};
    return {spec.background_lo(), spec.background_size()};
  }

  std::vector<int> neighbors(int i) const {
    auto [lo, size] = block_of(i);
    std::vector<int> out;
    out.reserve(neighborhood_size);
    int rel = i - lo;
    for (int step = 1; static_cast<int>(out.size()) < neighborhood_size; ++step) {
      int fwd = lo + (rel + step) % size;
      if (fwd != i) out.push_back(fwd);
      if (static_cast<int>(out.size()) == neighborhood_size) break;
      int bwd = lo + ((rel - step) % size + size) % size;
      if (bwd != i && bwd != fwd) out.push_back(bwd);
    }
    return out;
  }

  // Full confusion row over the support {i} + neighbors(i).
  std::pair<std::vector<int>, std::vector<double>> row(int i) const {
    std::vector<int> support{i};
    std::vector<double> probs{1.0 - confusion_eps};
    if (confusion_eps > 0.0) {
      for (int j : neighbors(i)) {
        support.push_back(j);
        probs.push_back(confusion_eps / neighborhood_size);
      }
    }
    return {support, probs};
  }

  // Samples an output index with probability proportional to C[i,j]^(1/mu);
  // mu = 0 is the argmax with lowest-index tie-break.
  int sample_output(int i, double mu, Rng& rng) const {
    auto [support, probs] = row(i);
    if (support.size() == 1) return support[0];
    if (mu == 0.0) {
      double best = probs[0];
      int best_j = support[0];
      for (std::size_t s = 1; s < support.size(); ++s)
        if (probs[s] > best || (probs[s] == best && support[s] < best_j)) {
          best = probs[s];
          best_j = support[s];
        }
      return best_j;
    }
    std::vector<double> w(probs.size());
    for (std::size_t s = 0; s < probs.size(); ++s) w[s] = std::pow(probs[s], 1.0 / mu);
    return support[rng.next_categorical(w)];
  }
};

inline Document translate(const Document& doc, const CipherChannel& channel, Direction dir, double mu, Rng& rng) {
  Language origin = (dir == Direction::src_to_tgt) ? Language::src : Language::tgt;
  Language dest = (dir == Direction::src_to_tgt) ? Language::tgt : Language::src;
  if (!channel.spec.shared_surface && doc.language != origin)
    throw std::invalid_argument("translate: document language does not match direction origin");
  if (mu < 0.0) throw std::invalid_argument("translate: temperature must be >= 0");
  Document out = doc;
  out.language = channel.spec.shared_surface ? doc.language : dest;
  for (auto& tok : out.tokens) {
    int j = channel.sample_output(surface_index(tok), mu, rng);
    tok = surface_form(channel.spec, dest, j);
  }
  return out;
}

// Round-trip paraphrase: tgt -> src -> tgt at the same temperature.
inline Document back_translate(const Document& doc, const CipherChannel& channel, double mu, Rng& rng) {
  if (!channel.spec.shared_surface && doc.language != Language::tgt)
    throw std::invalid_argument("back_translate: document must be target-language");
  Document mid = translate(doc, channel, Direction::tgt_to_src, mu, rng);
  return translate(mid, channel, Direction::src_to_tgt, mu, rng);
}

// ---- JSONL serialization ---------------------------------------------------

inline nlohmann::json document_to_json(const Document& d) {
  nlohmann::json j;
  j["id"] = d.id;
  j["tokens"] = d.tokens;
  if (d.label >= 0)
    j["label"] = d.label;
  else
    j["label"] = nullptr;
  j["language"] = to_string(d.language);
  j["domain"] = to_string(d.domain);
  j["label_language"] = to_string(d.label_language);
  j["label_domain"] = to_string(d.label_domain);
  return j;
}

inline Document document_from_json(const nlohmann::json& j, int line_no) {
  static const std::vector<std::string> known{"id", "tokens", "label", "language", "domain", "label_language", "label_domain"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      std::cerr << "warning: line " << line_no << ": unknown field '" << it.key() << "' ignored\n";
  }
  Document d;
  try {
    d.id = j.at("id").get<std::string>();
    d.tokens = j.at("tokens").get<std::vector<std::string>>();
    d.label = j.at("label").is_null() ? -1 : j.at("label").get<int>();
    std::string lang = j.at("language").get<std::string>();
    std::string dom = j.at("domain").get<std::string>();
    d.language = lang == "src" ? Language::src : Language::tgt;
    d.domain = dom == "src" ? Domain::src : (dom == "tgt" ? Domain::tgt : Domain::general);
    if (lang != "src" && lang != "tgt") throw std::invalid_argument("bad language");
    if (dom != "src" && dom != "tgt" && dom != "general") throw std::invalid_argument("bad domain");
    // label provenance defaults to the document's own language/domain
    std::string llang = j.value("label_language", lang);
    std::string ldom = j.value("label_domain", dom);
    if (llang != "src" && llang != "tgt") throw std::invalid_argument("bad label_language");
    if (ldom != "src" && ldom != "tgt" && ldom != "general") throw std::invalid_argument("bad label_domain");
    d.label_language = llang == "src" ? Language::src : Language::tgt;
    d.label_domain = ldom == "src" ? Domain::src : (ldom == "tgt" ? Domain::tgt : Domain::general);
  } catch (const std::exception& e) {
    throw std::runtime_error("parse error at line " + std::to_string(line_no) + ": " + e.what());
  }
  return d;
}

inline void write_jsonl(const std::vector<Document>& split, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_jsonl: cannot open " + path);
  for (const auto& d : split) f << document_to_json(d).dump() << "\n";
}

// Reads a split; when num_classes >= 0 labels are validated against it.
inline std::vector<Document> read_jsonl(const std::string& path, int num_classes = -1) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_jsonl: cannot open " + path);
  std::vector<Document> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error("parse error at line " + std::to_string(line_no) + ": invalid JSON");
    Document d = document_from_json(j, line_no);
    if (num_classes >= 0 && d.label >= num_classes)
      throw std::runtime_error("validation error at line " + std::to_string(line_no) + ": label " +
                               std::to_string(d.label) + " out of range for K=" + std::to_string(num_classes));
    out.push_back(std::move(d));
  }
  return out;
}

// ---- GenSpec JSON ----------------------------------------------------------

inline nlohmann::json genspec_to_json(const GenSpec& s) {
  return nlohmann::json{{"vocab_size", s.vocab_size},
                        {"num_classes", s.num_classes},
                        {"topic_block_size", s.topic_block_size},
                        {"background_mass", s.background_mass},
                        {"domain_drift", s.domain_drift},
                        {"len_min", s.len_min},
                        {"len_max", s.len_max},
                        {"label_prior", s.label_prior},
                        {"n_labeled_src", s.n_labeled_src},
                        {"n_unlabeled_tgt", s.n_unlabeled_tgt},
                        {"n_unlabeled_src", s.n_unlabeled_src},
                        {"n_test_tgt", s.n_test_tgt},
                        {"n_test_src", s.n_test_src},
                        {"n_general", s.n_general},
                        {"shared_surface", s.shared_surface}};
}

inline GenSpec genspec_from_json(const nlohmann::json& j) {
  GenSpec s;
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.topic_block_size = j.value("topic_block_size", s.topic_block_size);
  s.background_mass = j.value("background_mass", s.background_mass);
  s.domain_drift = j.value("domain_drift", s.domain_drift);
  s.len_min = j.value("len_min", s.len_min);
  s.len_max = j.value("len_max", s.len_max);
  s.label_prior = j.value("label_prior", s.label_prior);
  s.n_labeled_src = j.value("n_labeled_src", s.n_labeled_src);
  s.n_unlabeled_tgt = j.value("n_unlabeled_tgt", s.n_unlabeled_tgt);
  s.n_unlabeled_src = j.value("n_unlabeled_src", s.n_unlabeled_src);
  s.n_test_tgt = j.value("n_test_tgt", s.n_test_tgt);
  s.n_test_src = j.value("n_test_src", s.n_test_src);
  s.n_general = j.value("n_general", s.n_general);
  s.shared_surface = j.value("shared_surface", s.shared_surface);
  s.validate();
  return s;
}

}  // namespace xluda
