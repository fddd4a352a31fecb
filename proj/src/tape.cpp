#include "typespace/tape.hpp"

#include "typespace/errors.hpp"

#include <algorithm>
#include <cmath>

namespace typespace {

namespace {

[[noreturn]] void shape_error(const char *op, const Tensor &a, const Tensor &b) {
  throw ContractViolation(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                          b.shape_str());
}

void require_same(const char *op, const Tensor &a, const Tensor &b) {
  if (a.rows != b.rows || a.cols != b.cols)
    shape_error(op, a, b);
}

// c += a * b
void gemm_acc(const Tensor &a, const Tensor &b, Tensor &c) {
  const std::size_t n = b.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    double *ci = c.row_ptr(i);
    const double *ai = a.row_ptr(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      const double *bk = b.row_ptr(k);
      for (std::size_t j = 0; j < n; ++j)
        ci[j] += aik * bk[j];
    }
  }
}

Tensor transpose(const Tensor &a) {
  Tensor t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j)
      t(j, i) = a(i, j);
  return t;
}

// c += a^T * b, accumulated row by row of a and b.
void gemm_at_acc(const Tensor &a, const Tensor &b, Tensor &c) {
  const std::size_t n = b.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double *ai = a.row_ptr(i);
    const double *bi = b.row_ptr(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      if (aik == 0.0)
        continue;
      double *ck = c.row_ptr(k);
      for (std::size_t j = 0; j < n; ++j)
        ck[j] += aik * bi[j];
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0)
    return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

void check_segments(const char *op, const Tensor &a, const std::vector<int> &segment,
                    std::size_t num_segments) {
  if (segment.size() != a.rows)
    throw ContractViolation(std::string(op) + ": " + std::to_string(segment.size()) +
                            " segment ids for " + a.shape_str());
  for (int s : segment)
    if (s < 0 || static_cast<std::size_t>(s) >= num_segments)
      throw ContractViolation(std::string(op) + ": segment id " + std::to_string(s) +
                              " out of range");
}

} // namespace

void Tape::check(Var v) const {
  if (v < 0 || static_cast<std::size_t>(v) >= nodes_.size())
    throw ContractViolation("tape: unknown variable " + std::to_string(v));
}

Tape::Var Tape::push(Tensor value, bool needs_grad, std::function<void()> back) {
#ifndef NDEBUG
  if (!value.all_finite())
    throw NonFiniteValue("tape: non-finite value produced");
#endif
  if (done_)
    throw ContractViolation("tape: recording after backward");
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size()) - 1;
}

Tensor &Tape::g(Var v) {
  auto &n = nodes_[v];
  if (n.grad.data.size() != n.value.data.size() || n.grad.rows != n.value.rows)
    n.grad = Tensor(n.value.rows, n.value.cols);
  return n.grad;
}

const Tensor &Tape::grad(Var v) const {
  check(v);
  if (!done_)
    throw ContractViolation("tape: grad() before backward()");
  return nodes_[v].grad;
}

Tape::Var Tape::constant(Tensor value) { return push(std::move(value), false); }

Tape::Var Tape::input(Tensor value) { return push(std::move(value), true); }

Tape::Var Tape::param(int id) {
  if (!params_)
    throw ContractViolation("tape: no parameter store");
  Var v = push(params_->value(id), true);
  nodes_[v].param = id;
  return v;
}

Tape::Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor &A = value(a), &B = value(b);
  if (A.cols != B.rows)
    shape_error("matmul", A, B);
  Tensor C(A.rows, B.cols);
  gemm_acc(A, B, C);
  return push(std::move(C), needs(a) || needs(b), [this, a, b, self = (Var)nodes_.size()] {
    const Tensor &G = nodes_[self].grad;
    if (needs(a)) {
      Tensor bt = transpose(value(b));
      gemm_acc(G, bt, g(a));
    }
    if (needs(b))
      gemm_at_acc(value(a), G, g(b));
  });
}

Tape::Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  require_same("add", value(a), value(b));
  Tensor C = value(a);
  const auto &bd = value(b).data;
  for (std::size_t i = 0; i < C.data.size(); ++i)
    C.data[i] += bd[i];
  return push(std::move(C), needs(a) || needs(b), [this, a, b, self = (Var)nodes_.size()] {
    const auto &G = nodes_[self].grad.data;
    for (Var v : {a, b})
      if (needs(v)) {
        auto &d = g(v).data;
        for (std::size_t i = 0; i < d.size(); ++i)
          d[i] += G[i];
      }
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  require_same("sub", value(a), value(b));
  Tensor C = value(a);
  const auto &bd = value(b).data;
  for (std::size_t i = 0; i < C.data.size(); ++i)
    C.data[i] -= bd[i];
  return push(std::move(C), needs(a) || needs(b), [this, a, b, self = (Var)nodes_.size()] {
    const auto &G = nodes_[self].grad.data;
    if (needs(a)) {
      auto &d = g(a).data;
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] += G[i];
    }
    if (needs(b)) {
      auto &d = g(b).data;
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] -= G[i];
    }
  });
}

Tape::Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  require_same("mul", value(a), value(b));
  Tensor C = value(a);
  const auto &bd = value(b).data;
  for (std::size_t i = 0; i < C.data.size(); ++i)
    C.data[i] *= bd[i];
  return push(std::move(C), needs(a) || needs(b), [this, a, b, self = (Var)nodes_.size()] {
    const auto &G = nodes_[self].grad.data;
    if (needs(a)) {
      auto &d = g(a).data;
      const auto &o = value(b).data;
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] += G[i] * o[i];
    }
    if (needs(b)) {
      auto &d = g(b).data;
      const auto &o = value(a).data;
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] += G[i] * o[i];
    }
  });
}

Tape::Var Tape::add_bias(Var a, Var bias) {
  check(a);
  check(bias);
  const Tensor &A = value(a), &B = value(bias);
  if (B.rows != 1 || B.cols != A.cols)
    shape_error("add_bias", A, B);
  Tensor C = A;
  for (std::size_t i = 0; i < C.rows; ++i) {
    double *ci = C.row_ptr(i);
    for (std::size_t j = 0; j < C.cols; ++j)
      ci[j] += B.data[j];
  }
  return push(std::move(C), needs(a) || needs(bias),
              [this, a, bias, self = (Var)nodes_.size()] {
                const Tensor &G = nodes_[self].grad;
                if (needs(a)) {
                  auto &d = g(a).data;
                  for (std::size_t i = 0; i < d.size(); ++i)
                    d[i] += G.data[i];
                }
                if (needs(bias)) {
                  Tensor &d = g(bias);
                  for (std::size_t i = 0; i < G.rows; ++i) {
                    const double *gi = G.row_ptr(i);
                    for (std::size_t j = 0; j < G.cols; ++j)
                      d.data[j] += gi[j];
                  }
                }
              });
}

Tape::Var Tape::scale(Var a, double s) {
  check(a);
  Tensor C = value(a);
  for (double &v : C.data)
    v *= s;
  return push(std::move(C), needs(a), [this, a, s, self = (Var)nodes_.size()] {
    const auto &G = nodes_[self].grad.data;
    auto &d = g(a).data;
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] += G[i] * s;
  });
}

Tape::Var Tape::sigmoid(Var a) {
  check(a);
  Tensor C = value(a);
  for (double &v : C.data)
    v = stable_sigmoid(v);
  return push(std::move(C), needs(a), [this, a, self = (Var)nodes_.size()] {
    const auto &G = nodes_[self].grad.data;
    const auto &Y = nodes_[self].value.data;
    auto &d = g(a).data;
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] += G[i] * Y[i] * (1.0 - Y[i]);
  });
}

Tape::Var Tape::tanh(Var a) {
  check(a);
  Tensor C = value(a);
  for (double &v : C.data)
    v = std::tanh(v);
  return push(std::move(C), needs(a), [this, a, self = (Var)nodes_.size()] {
    const auto &G = nodes_[self].grad.data;
    const auto &Y = nodes_[self].value.data;
    auto &d = g(a).data;
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] += G[i] * (1.0 - Y[i] * Y[i]);
  });
}

Tape::Var Tape::hinge(Var a, double margin) {
  check(a);
  Tensor C = value(a);
  for (double &v : C.data)
    v = std::max(v + margin, 0.0);
  return push(std::move(C), needs(a), [this, a, margin, self = (Var)nodes_.size()] {
    const auto &G = nodes_[self].grad.data;
    const auto &X = value(a).data;
    auto &d = g(a).data;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (X[i] + margin > 0)
        d[i] += G[i];
  });
}

Tape::Var Tape::segment_sum(Var a, const std::vector<int> &segment,
                            std::size_t num_segments) {
  check(a);
  const Tensor &A = value(a);
  check_segments("segment_sum", A, segment, num_segments);
  Tensor C(num_segments, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double *c = C.row_ptr(segment[i]);
    const double *r = A.row_ptr(i);
    for (std::size_t j = 0; j < A.cols; ++j)
      c[j] += r[j];
  }
  return push(std::move(C), needs(a), [this, a, segment, self = (Var)nodes_.size()] {
    const Tensor &G = nodes_[self].grad;
    Tensor &d = g(a);
    for (std::size_t i = 0; i < d.rows; ++i) {
      const double *gs = G.row_ptr(segment[i]);
      double *di = d.row_ptr(i);
      for (std::size_t j = 0; j < d.cols; ++j)
        di[j] += gs[j];
    }
  });
}

Tape::Var Tape::segment_max(Var a, const std::vector<int> &segment,
                            std::size_t num_segments) {
  check(a);
  const Tensor &A = value(a);
  check_segments("segment_max", A, segment, num_segments);
  const std::size_t cols = A.cols;
  Tensor C(num_segments, cols);
  std::vector<int> arg(num_segments * cols, -1);
  for (std::size_t i = 0; i < A.rows; ++i) {
    const std::size_t s = segment[i];
    const double *r = A.row_ptr(i);
    double *c = C.row_ptr(s);
    int *w = arg.data() + s * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      if (w[j] < 0 || r[j] > c[j]) {
        c[j] = r[j];
        w[j] = static_cast<int>(i);
      }
    }
  }
  return push(std::move(C), needs(a),
              [this, a, arg = std::move(arg), cols, self = (Var)nodes_.size()] {
                const Tensor &G = nodes_[self].grad;
                Tensor &d = g(a);
                for (std::size_t k = 0; k < arg.size(); ++k)
                  if (arg[k] >= 0)
                    d(arg[k], k % cols) += G.data[k];
              });
}

Tape::Var Tape::gather_rows(Var a, const std::vector<int> &index) {
  check(a);
  const Tensor &A = value(a);
  Tensor C(index.size(), A.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= A.rows)
      throw ContractViolation("gather_rows: index " + std::to_string(index[i]) +
                              " out of range for " + A.shape_str());
    std::copy_n(A.row_ptr(index[i]), A.cols, C.row_ptr(i));
  }
  return push(std::move(C), needs(a), [this, a, index, self = (Var)nodes_.size()] {
    const Tensor &G = nodes_[self].grad;
    Tensor &d = g(a);
    for (std::size_t i = 0; i < index.size(); ++i) {
      const double *gi = G.row_ptr(i);
      double *di = d.row_ptr(index[i]);
      for (std::size_t j = 0; j < d.cols; ++j)
        di[j] += gi[j];
    }
  });
}

Tape::Var Tape::concat_rows(const std::vector<Var> &parts) {
  if (parts.empty())
    throw ContractViolation("concat_rows: no inputs");
  std::size_t rows = 0;
  const std::size_t cols = value(parts.front()).cols;
  bool any = false;
  for (Var p : parts) {
    check(p);
    if (value(p).cols != cols)
      shape_error("concat_rows", value(parts.front()), value(p));
    rows += value(p).rows;
    any = any || needs(p);
  }
  Tensor C(rows, cols);
  std::size_t at = 0;
  for (Var p : parts) {
    const auto &d = value(p).data;
    std::copy(d.begin(), d.end(), C.data.begin() + at);
    at += d.size();
  }
  return push(std::move(C), any, [this, parts, self = (Var)nodes_.size()] {
    const auto &G = nodes_[self].grad.data;
    std::size_t at = 0;
    for (Var p : parts) {
      std::size_t n = value(p).data.size();
      if (needs(p)) {
        auto &d = g(p).data;
        for (std::size_t i = 0; i < n; ++i)
          d[i] += G[at + i];
      }
      at += n;
    }
  });
}

Tape::Var Tape::l1_rows(Var a, Var b) {
  check(a);
  check(b);
  require_same("l1_rows", value(a), value(b));
  const Tensor &A = value(a), &B = value(b);
  Tensor C(A.rows, 1);
  for (std::size_t i = 0; i < A.rows; ++i) {
    const double *x = A.row_ptr(i), *y = B.row_ptr(i);
    double s = 0;
    for (std::size_t j = 0; j < A.cols; ++j)
      s += std::abs(x[j] - y[j]);
    C.data[i] = s;
  }
  return push(std::move(C), needs(a) || needs(b), [this, a, b, self = (Var)nodes_.size()] {
    const Tensor &G = nodes_[self].grad;
    const Tensor &A = value(a), &B = value(b);
    Tensor *da = needs(a) ? &g(a) : nullptr;
    Tensor *db = needs(b) ? &g(b) : nullptr;
    for (std::size_t i = 0; i < A.rows; ++i) {
      const double gi = G.data[i];
      for (std::size_t j = 0; j < A.cols; ++j) {
        double diff = A(i, j) - B(i, j);
        double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
        if (da)
          (*da)(i, j) += gi * s;
        if (db)
          (*db)(i, j) -= gi * s;
      }
    }
  });
}

Tape::Var Tape::softmax_xent(Var logits, const std::vector<int> &target) {
  check(logits);
  const Tensor &X = value(logits);
  if (target.size() != X.rows)
    throw ContractViolation("softmax_xent: " + std::to_string(target.size()) +
                            " targets for " + X.shape_str());
  Tensor C(X.rows, 1);
  Tensor probs(X.rows, X.cols);
  for (std::size_t i = 0; i < X.rows; ++i) {
    if (target[i] < 0 || static_cast<std::size_t>(target[i]) >= X.cols)
      throw ContractViolation("softmax_xent: target " + std::to_string(target[i]) +
                              " out of range for " + X.shape_str());
    const double *x = X.row_ptr(i);
    double m = *std::max_element(x, x + X.cols);
    double z = 0;
    for (std::size_t j = 0; j < X.cols; ++j)
      z += std::exp(x[j] - m);
    double lse = m + std::log(z);
    for (std::size_t j = 0; j < X.cols; ++j)
      probs(i, j) = std::exp(x[j] - lse);
    C.data[i] = lse - x[target[i]];
  }
  return push(std::move(C), needs(logits),
              [this, logits, target, probs = std::move(probs), self = (Var)nodes_.size()] {
                const Tensor &G = nodes_[self].grad;
                Tensor &d = g(logits);
                for (std::size_t i = 0; i < d.rows; ++i) {
                  const double gi = G.data[i];
                  for (std::size_t j = 0; j < d.cols; ++j)
                    d(i, j) += gi * (probs(i, j) - (static_cast<int>(j) == target[i] ? 1.0 : 0.0));
                }
              });
}

Tape::Var Tape::sum(Var a) {
  check(a);
  double s = 0;
  for (double v : value(a).data)
    s += v;
  return push(Tensor::scalar(s), needs(a), [this, a, self = (Var)nodes_.size()] {
    const double G = nodes_[self].grad.data[0];
    for (double &v : g(a).data)
      v += G;
  });
}

Tape::Var Tape::mean(Var a) {
  check(a);
  const std::size_t n = value(a).data.size();
  if (n == 0)
    return constant(Tensor::scalar(0.0));
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

void Tape::backward(Var loss) {
  check(loss);
  if (done_)
    throw ContractViolation("tape: backward() called twice");
  if (value(loss).rows != 1 || value(loss).cols != 1)
    throw ContractViolation("backward: loss must be 1x1, got " + value(loss).shape_str());
  done_ = true;
  g(loss).data[0] = 1.0;
  for (Var v = loss; v >= 0; --v) {
    auto &n = nodes_[v];
    if (!n.needs_grad || n.grad.data.size() != n.value.data.size() || n.value.data.empty())
      continue;
    if (n.back)
      n.back();
  }
  for (Var v = 0; v < static_cast<Var>(nodes_.size()); ++v) {
    auto &n = nodes_[v];
    if (n.grad.data.size() != n.value.data.size() || n.grad.rows != n.value.rows)
      n.grad = Tensor(n.value.rows, n.value.cols);
    if (n.param >= 0) {
      auto &dst = params_->grad(n.param).data;
      for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] += n.grad.data[i];
    }
  }
}

GruWeights GruWeights::create(ParamStore &store, const std::string &prefix, std::size_t dim,
                              Rng &rng, double scale) {
  auto make = [&](const char *name, std::size_t r, std::size_t c) {
    Tensor t(r, c);
    init_uniform(t, rng, scale);
    return store.add(prefix + name, std::move(t));
  };
  GruWeights w{};
  w.w_z = make("w_z", dim, dim);
  w.u_z = make("u_z", dim, dim);
  w.b_z = make("b_z", 1, dim);
  w.w_r = make("w_r", dim, dim);
  w.u_r = make("u_r", dim, dim);
  w.b_r = make("b_r", 1, dim);
  w.w_h = make("w_h", dim, dim);
  w.u_h = make("u_h", dim, dim);
  w.b_h = make("b_h", 1, dim);
  return w;
}

GruWeights GruWeights::find(const ParamStore &store, const std::string &prefix) {
  auto id = [&](const char *name) { return store.id(prefix + name); };
  return {id("w_z"), id("u_z"), id("b_z"), id("w_r"), id("u_r"),
          id("b_r"), id("w_h"), id("u_h"), id("b_h")};
}

GruVars GruVars::bind(Tape &tape, const GruWeights &w, const ParamStore *frozen) {
  auto leaf = [&](int id) {
    return frozen ? tape.constant(frozen->value(id)) : tape.param(id);
  };
  return {leaf(w.w_z), leaf(w.u_z), leaf(w.b_z), leaf(w.w_r), leaf(w.u_r),
          leaf(w.b_r), leaf(w.w_h), leaf(w.u_h), leaf(w.b_h)};
}

Tape::Var gru_cell(Tape &tape, Tape::Var x, Tape::Var h, const GruVars &w) {
  const Tensor &X = tape.value(x), &H = tape.value(h), &Wz = tape.value(w.w_z);
  if (X.rows != H.rows || X.cols != Wz.rows || H.cols != tape.value(w.u_z).rows)
    throw ContractViolation("gru_cell: dimension mismatch x " + X.shape_str() + ", h " +
                            H.shape_str() + ", W " + Wz.shape_str());
  auto gate = [&](Tape::Var wx, Tape::Var uh, Tape::Var b, Tape::Var hin) {
    return tape.add_bias(tape.add(tape.matmul(x, wx), tape.matmul(hin, uh)), b);
  };
  Tape::Var z = tape.sigmoid(gate(w.w_z, w.u_z, w.b_z, h));
  Tape::Var r = tape.sigmoid(gate(w.w_r, w.u_r, w.b_r, h));
  Tape::Var c = tape.tanh(gate(w.w_h, w.u_h, w.b_h, tape.mul(r, h)));
  return tape.add(h, tape.mul(z, tape.sub(c, h)));
}

} // namespace typespace
