// Copyright 2026 The xluda authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xluda/tensor.hpp"

namespace xluda {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::vector<double>> m;  // first moments, one entry per parameter
  std::vector<std::vector<double>> v;  // second moments

  static AdamState make(const std::vector<Tensor>& params, double lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& p : params) {
      s.m.emplace_back(p->size(), 0.0);
      s.v.emplace_back(p->size(), 0.0);
    }
    return s;
  }
};

// Standard Adam with bias correction; reads each parameter's grad accumulator.
inline void adam_step(const std::vector<Tensor>& params, AdamState& state) {
  if (params.size() != state.m.size()) throw std::invalid_argument("adam_step: state/parameter count mismatch");
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p->grad.size() != p->values.size()) p->ensure_grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p->size(); ++j) {
      double g = p->grad[j];
      if (std::isnan(g))
        throw std::runtime_error("adam_step: NaN gradient in parameter " + std::to_string(i) + " at index " +
                                 std::to_string(j));
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p->values[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

inline nlohmann::json adam_to_json(const AdamState& s) {
  return nlohmann::json{{"lr", s.lr}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"eps", s.eps},
                        {"t", s.t},   {"m", s.m},         {"v", s.v}};
}

inline AdamState adam_from_json(const nlohmann::json& j) {
  AdamState s;
  s.lr = j.at("lr");
  s.beta1 = j.at("beta1");
  s.beta2 = j.at("beta2");
  s.eps = j.at("eps");
  s.t = j.at("t");
  s.m = j.at("m").get<std::vector<std::vector<double>>>();
  s.v = j.at("v").get<std::vector<std::vector<double>>>();
  return s;
}

// ---- training signal annealing ---------------------------------------------

enum class TsaMode { none, linear, log_mode, exp_mode };

inline std::string to_string(TsaMode m) {
  switch (m) {
    case TsaMode::none: return "none";
    case TsaMode::linear: return "linear";
    case TsaMode::log_mode: return "log";
    default: return "exp";
  }
}

inline TsaMode tsa_mode_from_string(const std::string& s) {
  if (s == "none") return TsaMode::none;
  if (s == "linear") return TsaMode::linear;
  if (s == "log") return TsaMode::log_mode;
  if (s == "exp") return TsaMode::exp_mode;
  throw std::invalid_argument("unknown TSA mode: " + s);
}

struct TsaSchedule {
  TsaMode mode = TsaMode::none;
  std::int64_t total_steps = 1;
  int num_classes = 2;
};

// Confidence threshold eta(t) in [1/K, 1], non-decreasing in t; t > T clamps.
inline double tsa_threshold(const TsaSchedule& s, std::int64_t t) {
  if (t < 0) throw std::invalid_argument("tsa_threshold: negative step");
  if (s.mode == TsaMode::none) return 1.0;
  double frac = std::min(1.0, static_cast<double>(t) / static_cast<double>(s.total_steps));
  double alpha;
  switch (s.mode) {
    case TsaMode::linear: alpha = frac; break;
    case TsaMode::log_mode: alpha = 1.0 - std::exp(-5.0 * frac); break;
    default: alpha = std::exp(5.0 * (frac - 1.0)); break;
  }
  double inv_k = 1.0 / s.num_classes;
  return alpha * (1.0 - inv_k) + inv_k;
}

// Per-example {0,1} weights: examples whose correct-class probability exceeds
// eta are dropped from the supervised CE term this step. Applied outside the
// gradient; an all-masked batch contributes zero loss.
inline std::vector<double> tsa_mask(const std::vector<double>& probs, const std::vector<int>& labels, double eta) {
  std::size_t batch = labels.size();
  if (batch == 0 || probs.size() % batch != 0) throw std::invalid_argument("tsa_mask: geometry mismatch");
  std::size_t K = probs.size() / batch;
  std::vector<double> w(batch, 1.0);
  for (std::size_t r = 0; r < batch; ++r) {
    if (labels[r] < 0) {
      w[r] = 0.0;
      continue;
    }
    if (probs[r * K + labels[r]] > eta) w[r] = 0.0;
  }
  return w;
}

}  // namespace xluda
