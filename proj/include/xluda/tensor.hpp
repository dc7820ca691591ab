// Copyright 2026 The xluda authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xluda/rng.hpp"

namespace xluda {

// Dense 64-bit tensor with reverse-mode autodiff. Tensors are 1-D or 2-D
// row-major; a scalar is shape {1}. Intermediate nodes live on a Tape in
// execution order, so the reverse sweep is topological by construction and
// every reduction has a fixed summation order.

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // same length as values when requires_grad
  bool requires_grad = false;
  std::function<void()> backward_fn;

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  void ensure_grad() {
    requires_grad = true;
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
  void zero_grad() { grad.assign(values.size(), 0.0); }
};

using Tensor = std::shared_ptr<TensorNode>;

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

inline EMap mat(const Tensor& t) { return EMap(t->values.data(), static_cast<long>(t->rows()), static_cast<long>(t->cols())); }
inline ECMap cmat(const Tensor& t) { return ECMap(t->values.data(), static_cast<long>(t->rows()), static_cast<long>(t->cols())); }
inline EMap gmat(const Tensor& t) { return EMap(t->grad.data(), static_cast<long>(t->rows()), static_cast<long>(t->cols())); }

inline Tensor make_tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad = false) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (n != values.size()) throw std::invalid_argument("make_tensor: shape/value length mismatch");
  auto t = std::make_shared<TensorNode>();
  t->shape = std::move(shape);
  t->values = std::move(values);
  if (requires_grad) t->ensure_grad();
  return t;
}

inline Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

inline Tensor scalar_tensor(double v) { return make_tensor({1}, {v}); }

inline std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < t->shape.size(); ++i) os << (i ? "," : "") << t->shape[i];
  os << "]";
  return os.str();
}

[[noreturn]] inline void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

class Tape {
public:
  bool grad_enabled = true;

  // Backward closures capture their own output node, which forms an ownership
  // cycle (node -> closure -> node). Clearing the closures on tape destruction
  // breaks the cycles so intermediate nodes are actually freed.
  ~Tape() {
    for (auto& n : nodes_) n->backward_fn = nullptr;
  }

  Tensor record(Tensor t) {
    nodes_.push_back(t);
    return t;
  }

  // Reverse sweep from a scalar loss. Visits each recorded node exactly once,
  // in reverse execution order; gradient accumulation is additive, so calling
  // backward twice without zeroing doubles every gradient.
  void backward(const Tensor& loss) {
    if (loss->size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      auto& n = *it;
      if (n->requires_grad && n->backward_fn) n->backward_fn();
    }
  }

  std::size_t num_nodes() const { return nodes_.size(); }

private:
  std::vector<Tensor> nodes_;
};

namespace detail {

inline Tensor result_like(Tape& tape, std::vector<std::size_t> shape, std::size_t n, bool needs_grad) {
  auto t = std::make_shared<TensorNode>();
  t->shape = std::move(shape);
  t->values.resize(n);
  if (needs_grad && tape.grad_enabled) t->ensure_grad();
  return tape.record(t);
}

inline bool wants_grad(const Tape& tape, std::initializer_list<Tensor> inputs) {
  if (!tape.grad_enabled) return false;
  for (const auto& t : inputs)
    if (t->requires_grad) return true;
  return false;
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

inline Tensor add(Tape& tape, Tensor a, Tensor b) {
  if (a->shape != b->shape) shape_error("add", a, b);
  bool g = detail::wants_grad(tape, {a, b});
  Tensor out = detail::result_like(tape, a->shape, a->size(), g);
  for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = a->values[i] + b->values[i];
  if (g) {
    out->backward_fn = [out, a, b]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i];
      }
    };
  }
  return out;
}

// Adds a length-C vector to every row of an [R,C] matrix.
inline Tensor add_bias(Tape& tape, Tensor a, Tensor bias) {
  if (bias->size() != a->cols()) shape_error("add_bias", a, bias);
  bool g = detail::wants_grad(tape, {a, bias});
  Tensor out = detail::result_like(tape, a->shape, a->size(), g);
  std::size_t R = a->rows(), C = a->cols();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out->values[r * C + c] = a->values[r * C + c] + bias->values[c];
  if (g) {
    out->backward_fn = [out, a, bias, R, C]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) bias->grad[c] += out->grad[r * C + c];
      }
    };
  }
  return out;
}

inline Tensor mul(Tape& tape, Tensor a, Tensor b) {
  if (a->shape != b->shape) shape_error("mul", a, b);
  bool g = detail::wants_grad(tape, {a, b});
  Tensor out = detail::result_like(tape, a->shape, a->size(), g);
  for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = a->values[i] * b->values[i];
  if (g) {
    out->backward_fn = [out, a, b]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * b->values[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i] * a->values[i];
      }
    };
  }
  return out;
}

inline Tensor scale(Tape& tape, Tensor a, double c) {
  bool g = detail::wants_grad(tape, {a});
  Tensor out = detail::result_like(tape, a->shape, a->size(), g);
  for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = a->values[i] * c;
  if (g) {
    out->backward_fn = [out, a, c]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * c;
    };
  }
  return out;
}

inline Tensor relu(Tape& tape, Tensor a) {
  bool g = detail::wants_grad(tape, {a});
  Tensor out = detail::result_like(tape, a->shape, a->size(), g);
  for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = a->values[i] > 0.0 ? a->values[i] : 0.0;
  if (g) {
    out->backward_fn = [out, a]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->size(); ++i)
        if (a->values[i] > 0.0) a->grad[i] += out->grad[i];
    };
  }
  return out;
}

inline Tensor stop_gradient(Tape& tape, Tensor a) {
  Tensor out = detail::result_like(tape, a->shape, a->size(), false);
  out->values = a->values;
  return out;
}

// ---- linear algebra --------------------------------------------------------

inline Tensor matmul(Tape& tape, Tensor a, Tensor b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->cols() != b->rows()) shape_error("matmul", a, b);
  bool g = detail::wants_grad(tape, {a, b});
  std::size_t R = a->rows(), C = b->cols();
  Tensor out = detail::result_like(tape, {R, C}, R * C, g);
  mat(out) = cmat(a) * cmat(b);
  if (g) {
    out->backward_fn = [out, a, b]() {
      auto go = ECMap(out->grad.data(), static_cast<long>(out->rows()), static_cast<long>(out->cols()));
      if (a->requires_grad) {
        a->ensure_grad();
        gmat(a) += go * cmat(b).transpose();
      }
      if (b->requires_grad) {
        b->ensure_grad();
        gmat(b) += cmat(a).transpose() * go;
      }
    };
  }
  return out;
}

// a * b^T
inline Tensor matmul_nt(Tape& tape, Tensor a, Tensor b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->cols() != b->cols()) shape_error("matmul_nt", a, b);
  bool g = detail::wants_grad(tape, {a, b});
  std::size_t R = a->rows(), C = b->rows();
  Tensor out = detail::result_like(tape, {R, C}, R * C, g);
  mat(out) = cmat(a) * cmat(b).transpose();
  if (g) {
    out->backward_fn = [out, a, b]() {
      auto go = ECMap(out->grad.data(), static_cast<long>(out->rows()), static_cast<long>(out->cols()));
      if (a->requires_grad) {
        a->ensure_grad();
        gmat(a) += go * cmat(b);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        gmat(b) += go.transpose() * cmat(a);
      }
    };
  }
  return out;
}

// Gathers rows of `table` at `ids`; duplicated ids accumulate gradient.
inline Tensor embedding_lookup(Tape& tape, Tensor table, const std::vector<int>& ids) {
  if (table->shape.size() != 2) throw std::invalid_argument("embedding_lookup: table must be 2-D");
  std::size_t C = table->cols();
  bool g = detail::wants_grad(tape, {table});
  Tensor out = detail::result_like(tape, {ids.size(), C}, ids.size() * C, g);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    int id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= table->rows())
      throw std::invalid_argument("embedding_lookup: id out of range");
    std::copy_n(table->values.begin() + static_cast<long>(id * C), C, out->values.begin() + static_cast<long>(r * C));
  }
  if (g) {
    out->backward_fn = [out, table, ids, C]() {
      table->ensure_grad();
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t c = 0; c < C; ++c) table->grad[ids[r] * C + c] += out->grad[r * C + c];
    };
  }
  return out;
}

// Per-row layer norm with learned gain/bias over the last dimension.
inline Tensor layer_norm(Tape& tape, Tensor x, Tensor gain, Tensor bias, double eps = 1e-5) {
  std::size_t R = x->rows(), C = x->cols();
  if (gain->size() != C || bias->size() != C) shape_error("layer_norm", x, gain);
  bool g = detail::wants_grad(tape, {x, gain, bias});
  Tensor out = detail::result_like(tape, x->shape, x->size(), g);
  auto xhat = std::make_shared<std::vector<double>>(x->size());
  auto inv_std = std::make_shared<std::vector<double>>(R);
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = &x->values[r * C];
    double mean = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean += row[c];
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(C);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < C; ++c) {
      double xh = (row[c] - mean) * is;
      (*xhat)[r * C + c] = xh;
      out->values[r * C + c] = xh * gain->values[c] + bias->values[c];
    }
  }
  if (g) {
    out->backward_fn = [out, x, gain, bias, xhat, inv_std, R, C]() {
      for (std::size_t r = 0; r < R; ++r) {
        const double* go = &out->grad[r * C];
        const double* xh = &(*xhat)[r * C];
        if (gain->requires_grad) {
          gain->ensure_grad();
          bias->ensure_grad();
          for (std::size_t c = 0; c < C; ++c) {
            gain->grad[c] += go[c] * xh[c];
            bias->grad[c] += go[c];
          }
        }
        if (x->requires_grad) {
          x->ensure_grad();
          double sum_gy = 0.0, sum_gyxh = 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            double gy = go[c] * gain->values[c];
            sum_gy += gy;
            sum_gyxh += gy * xh[c];
          }
          double n = static_cast<double>(C);
          for (std::size_t c = 0; c < C; ++c) {
            double gy = go[c] * gain->values[c];
            x->grad[r * C + c] += (*inv_std)[r] * (gy - sum_gy / n - xh[c] * sum_gyxh / n);
          }
        }
      }
    };
  }
  return out;
}

// ---- reductions & structure ------------------------------------------------

inline Tensor reduce_mean(Tape& tape, Tensor a) {
  bool g = detail::wants_grad(tape, {a});
  Tensor out = detail::result_like(tape, {1}, 1, g);
  double s = 0.0;
  for (double v : a->values) s += v;
  double n = static_cast<double>(a->size());
  out->values[0] = s / n;
  if (g) {
    out->backward_fn = [out, a, n]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[0] / n;
    };
  }
  return out;
}

// Row-wise log(sum(exp(x))) with max-shift, output shape [R,1].
inline Tensor logsumexp_rows(Tape& tape, Tensor x) {
  std::size_t R = x->rows(), C = x->cols();
  bool g = detail::wants_grad(tape, {x});
  Tensor out = detail::result_like(tape, {R, 1}, R, g);
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = &x->values[r * C];
    double m = row[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(row[c] - m);
    out->values[r] = m + std::log(s);
  }
  if (g) {
    out->backward_fn = [out, x, R, C]() {
      x->ensure_grad();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
          x->grad[r * C + c] += out->grad[r] * std::exp(x->values[r * C + c] - out->values[r]);
    };
  }
  return out;
}

inline Tensor concat_rows(Tape& tape, Tensor a, Tensor b) {
  if (a->cols() != b->cols()) shape_error("concat_rows", a, b);
  bool g = detail::wants_grad(tape, {a, b});
  std::size_t C = a->cols(), Ra = a->rows(), Rb = b->rows();
  Tensor out = detail::result_like(tape, {Ra + Rb, C}, (Ra + Rb) * C, g);
  std::copy(a->values.begin(), a->values.end(), out->values.begin());
  std::copy(b->values.begin(), b->values.end(), out->values.begin() + static_cast<long>(a->size()));
  if (g) {
    out->backward_fn = [out, a, b]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[a->size() + i];
      }
    };
  }
  return out;
}

inline Tensor slice_rows(Tape& tape, Tensor a, std::size_t start, std::size_t count) {
  if (start + count > a->rows()) throw std::invalid_argument("slice_rows: range out of bounds");
  std::size_t C = a->cols();
  bool g = detail::wants_grad(tape, {a});
  Tensor out = detail::result_like(tape, {count, C}, count * C, g);
  std::copy_n(a->values.begin() + static_cast<long>(start * C), count * C, out->values.begin());
  if (g) {
    out->backward_fn = [out, a, start, C]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < out->size(); ++i) a->grad[start * C + i] += out->grad[i];
    };
  }
  return out;
}

inline Tensor gather_rows(Tape& tape, Tensor a, const std::vector<std::size_t>& rows) {
  std::size_t C = a->cols();
  bool g = detail::wants_grad(tape, {a});
  Tensor out = detail::result_like(tape, {rows.size(), C}, rows.size() * C, g);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= a->rows()) throw std::invalid_argument("gather_rows: index out of range");
    std::copy_n(a->values.begin() + static_cast<long>(rows[r] * C), C, out->values.begin() + static_cast<long>(r * C));
  }
  if (g) {
    out->backward_fn = [out, a, rows, C]() {
      a->ensure_grad();
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < C; ++c) a->grad[rows[r] * C + c] += out->grad[r * C + c];
    };
  }
  return out;
}

// ---- fused attention -------------------------------------------------------

// Multi-head scaled dot-product self-attention over a batch of equal-length
// sequences packed as [batch*seq, d]. key_mask[b*seq+t] == 0 excludes position
// t of example b as a key (PAD); masked keys receive zero attention weight.
inline Tensor attention(Tape& tape, Tensor q, Tensor k, Tensor v, std::size_t batch, std::size_t seq,
                        std::size_t n_heads, const std::vector<double>& key_mask) {
  std::size_t d = q->cols();
  if (k->shape != q->shape || v->shape != q->shape) shape_error("attention", q, k);
  if (q->rows() != batch * seq || d % n_heads != 0) throw std::invalid_argument("attention: bad geometry");
  if (key_mask.size() != batch * seq) throw std::invalid_argument("attention: mask length mismatch");
  std::size_t hd = d / n_heads;
  double scale_f = 1.0 / std::sqrt(static_cast<double>(hd));
  bool g = detail::wants_grad(tape, {q, k, v});
  Tensor out = detail::result_like(tape, q->shape, q->size(), g);
  // attention weights kept for backward: [batch][head][seq*seq]
  auto probs = std::make_shared<std::vector<double>>(batch * n_heads * seq * seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      double* P = &(*probs)[(b * n_heads + h) * seq * seq];
      for (std::size_t i = 0; i < seq; ++i) {
        double m = -1e300;
        double* Pi = &P[i * seq];
        const double* qi = &q->values[(b * seq + i) * d + h * hd];
        for (std::size_t j = 0; j < seq; ++j) {
          if (key_mask[b * seq + j] == 0.0) {
            Pi[j] = -1e300;
            continue;
          }
          const double* kj = &k->values[(b * seq + j) * d + h * hd];
          double s = 0.0;
          for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
          Pi[j] = s * scale_f;
          m = std::max(m, Pi[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < seq; ++j) {
          Pi[j] = (Pi[j] <= -1e299) ? 0.0 : std::exp(Pi[j] - m);
          z += Pi[j];
        }
        for (std::size_t j = 0; j < seq; ++j) Pi[j] /= z;
        double* oi = &out->values[(b * seq + i) * d + h * hd];
        for (std::size_t c = 0; c < hd; ++c) oi[c] = 0.0;
        for (std::size_t j = 0; j < seq; ++j) {
          double p = Pi[j];
          if (p == 0.0) continue;
          const double* vj = &v->values[(b * seq + j) * d + h * hd];
          for (std::size_t c = 0; c < hd; ++c) oi[c] += p * vj[c];
        }
      }
    }
  }
  if (g) {
    out->backward_fn = [out, q, k, v, probs, batch, seq, n_heads, hd, d, scale_f]() {
      q->ensure_grad();
      k->ensure_grad();
      v->ensure_grad();
      std::vector<double> dP(seq);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < n_heads; ++h) {
          const double* P = &(*probs)[(b * n_heads + h) * seq * seq];
          for (std::size_t i = 0; i < seq; ++i) {
            const double* Pi = &P[i * seq];
            const double* goi = &out->grad[(b * seq + i) * d + h * hd];
            // dV and dP
            double dot = 0.0;
            for (std::size_t j = 0; j < seq; ++j) {
              const double* vj = &v->values[(b * seq + j) * d + h * hd];
              double s = 0.0;
              for (std::size_t c = 0; c < hd; ++c) s += goi[c] * vj[c];
              dP[j] = s;
              dot += s * Pi[j];
              if (Pi[j] != 0.0) {
                double* dvj = &v->grad[(b * seq + j) * d + h * hd];
                for (std::size_t c = 0; c < hd; ++c) dvj[c] += Pi[j] * goi[c];
              }
            }
            // softmax backward then into q, k
            const double* qi = &q->values[(b * seq + i) * d + h * hd];
            double* dqi = &q->grad[(b * seq + i) * d + h * hd];
            for (std::size_t j = 0; j < seq; ++j) {
              double ds = Pi[j] * (dP[j] - dot) * scale_f;
              if (ds == 0.0) continue;
              const double* kj = &k->values[(b * seq + j) * d + h * hd];
              double* dkj = &k->grad[(b * seq + j) * d + h * hd];
              for (std::size_t c = 0; c < hd; ++c) {
                dqi[c] += ds * kj[c];
                dkj[c] += ds * qi[c];
              }
            }
          }
        }
      }
    };
  }
  return out;
}

// ---- losses ----------------------------------------------------------------

inline void softmax_row(const double* logits, double* out, std::size_t C) {
  double m = logits[0];
  for (std::size_t c = 1; c < C; ++c) m = std::max(m, logits[c]);
  double z = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    out[c] = std::exp(logits[c] - m);
    z += out[c];
  }
  for (std::size_t c = 0; c < C; ++c) out[c] /= z;
}

// Mean of -log softmax(logits)[label] over rows whose label is >= 0 and whose
// weight is nonzero. Rows with label < 0 (ignore sentinel) contribute nothing.
// If `weights` is empty all rows weigh 1. An all-ignored batch yields loss 0.
inline Tensor cross_entropy_logits(Tape& tape, Tensor logits, const std::vector<int>& labels,
                                   const std::vector<double>& weights = {}) {
  std::size_t R = logits->rows(), C = logits->cols();
  if (labels.size() != R) throw std::invalid_argument("cross_entropy_logits: labels length mismatch");
  if (!weights.empty() && weights.size() != R) throw std::invalid_argument("cross_entropy_logits: weights length mismatch");
  bool g = detail::wants_grad(tape, {logits});
  Tensor out = detail::result_like(tape, {1}, 1, g);
  auto probs = std::make_shared<std::vector<double>>(R * C);
  double total = 0.0, wsum = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    double w = weights.empty() ? 1.0 : weights[r];
    if (labels[r] < 0 || w == 0.0) continue;
    if (static_cast<std::size_t>(labels[r]) >= C) throw std::invalid_argument("cross_entropy_logits: label out of range");
    softmax_row(&logits->values[r * C], &(*probs)[r * C], C);
    total += -std::log(std::max((*probs)[r * C + labels[r]], 1e-300)) * w;
    wsum += w;
  }
  out->values[0] = wsum > 0.0 ? total / wsum : 0.0;
  if (g) {
    out->backward_fn = [out, logits, probs, labels, weights, R, C, wsum]() {
      if (wsum <= 0.0) return;
      logits->ensure_grad();
      double go = out->grad[0];
      for (std::size_t r = 0; r < R; ++r) {
        double w = weights.empty() ? 1.0 : weights[r];
        if (labels[r] < 0 || w == 0.0) continue;
        for (std::size_t c = 0; c < C; ++c) {
          double p = (*probs)[r * C + c];
          double target = (static_cast<std::size_t>(labels[r]) == c) ? 1.0 : 0.0;
          logits->grad[r * C + c] += go * w * (p - target) / wsum;
        }
      }
    };
  }
  return out;
}

// Mean over rows of KL(softmax(logits) || q_const). Gradient flows through the
// first (softmax) argument; the second is a fixed distribution per row.
inline Tensor kl_softmax_vs_const(Tape& tape, Tensor logits, const std::vector<double>& q_const) {
  std::size_t R = logits->rows(), C = logits->cols();
  if (q_const.size() != R * C) throw std::invalid_argument("kl_softmax_vs_const: size mismatch");
  bool g = detail::wants_grad(tape, {logits});
  Tensor out = detail::result_like(tape, {1}, 1, g);
  auto probs = std::make_shared<std::vector<double>>(R * C);
  double total = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    softmax_row(&logits->values[r * C], &(*probs)[r * C], C);
    for (std::size_t c = 0; c < C; ++c) {
      double p = (*probs)[r * C + c];
      if (p > 0.0) total += p * (std::log(p) - std::log(std::max(q_const[r * C + c], 1e-12)));
    }
  }
  out->values[0] = total / static_cast<double>(R);
  if (g) {
    out->backward_fn = [out, logits, probs, q_const, R, C]() {
      logits->ensure_grad();
      double go = out->grad[0] / static_cast<double>(R);
      for (std::size_t r = 0; r < R; ++r) {
        double klr = 0.0;
        std::vector<double> term(C);
        for (std::size_t c = 0; c < C; ++c) {
          double p = (*probs)[r * C + c];
          term[c] = p > 0.0 ? std::log(p) - std::log(std::max(q_const[r * C + c], 1e-12)) : 0.0;
          klr += p * term[c];
        }
        for (std::size_t c = 0; c < C; ++c) {
          double p = (*probs)[r * C + c];
          logits->grad[r * C + c] += go * p * (term[c] - klr);
        }
      }
    };
  }
  return out;
}

// Mean over rows of KL(p_const || softmax(logits)). Gradient flows through the
// second (softmax) argument.
inline Tensor kl_const_vs_softmax(Tape& tape, const std::vector<double>& p_const, Tensor logits) {
  std::size_t R = logits->rows(), C = logits->cols();
  if (p_const.size() != R * C) throw std::invalid_argument("kl_const_vs_softmax: size mismatch");
  bool g = detail::wants_grad(tape, {logits});
  Tensor out = detail::result_like(tape, {1}, 1, g);
  auto probs = std::make_shared<std::vector<double>>(R * C);
  double total = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    softmax_row(&logits->values[r * C], &(*probs)[r * C], C);
    for (std::size_t c = 0; c < C; ++c) {
      double p = p_const[r * C + c];
      if (p > 0.0) total += p * (std::log(p) - std::log(std::max((*probs)[r * C + c], 1e-12)));
    }
  }
  out->values[0] = total / static_cast<double>(R);
  if (g) {
    out->backward_fn = [out, logits, probs, p_const, R, C]() {
      logits->ensure_grad();
      double go = out->grad[0] / static_cast<double>(R);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
          logits->grad[r * C + c] += go * ((*probs)[r * C + c] - p_const[r * C + c]);
    };
  }
  return out;
}

// Plain KL between two probability rows; 0*log 0 = 0, q clamped below at 1e-12.
inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * (std::log(p[i]) - std::log(std::max(q[i], 1e-12)));
  return s;
}

// ---- utilities -------------------------------------------------------------

inline void zero_grads(const std::vector<Tensor>& params) {
  for (const auto& p : params) p->zero_grad();
}

// Central-difference check of autodiff gradients. `f` must be a deterministic
// scalar function of the current parameter values that records onto a fresh
// tape and runs backward (populating grads) when `with_grad` is true.
// Relative error is |a-b| / max(|a|,|b|,1e-8), maximized over a deterministic
// sample of at least `min_coords` coordinates across all parameters.
inline double grad_check(const std::function<double(bool with_grad)>& f, const std::vector<Tensor>& params,
                         double h = 1e-5, std::size_t min_coords = 200, std::uint64_t seed = 0) {
  zero_grads(params);
  f(true);
  std::vector<std::vector<double>> saved;
  saved.reserve(params.size());
  for (const auto& p : params) saved.push_back(p->grad);

  std::size_t total = 0;
  for (const auto& p : params) total += p->size();
  Rng rng = Rng::derive(seed, "grad_check");
  double max_rel = 0.0;
  std::size_t n_coords = std::min(min_coords, total);
  for (std::size_t s = 0; s < n_coords; ++s) {
    std::size_t flat = (total <= min_coords) ? s : static_cast<std::size_t>(rng.next_below(total));
    std::size_t pi = 0, off = flat;
    while (off >= params[pi]->size()) {
      off -= params[pi]->size();
      ++pi;
    }
    double orig = params[pi]->values[off];
    params[pi]->values[off] = orig + h;
    double fp = f(false);
    params[pi]->values[off] = orig - h;
    double fm = f(false);
    params[pi]->values[off] = orig;
    double fd = (fp - fm) / (2.0 * h);
    double ad = saved[pi][off];
    double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace xluda
