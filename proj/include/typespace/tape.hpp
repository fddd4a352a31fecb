#pragma once

#include "typespace/tensor.hpp"

#include <functional>
#include <vector>

namespace typespace {

/// Reverse-mode differentiation over a recorded sequence of matrix
/// operations. A tape records one forward pass; `backward` may run once.
class Tape {
public:
  using Var = int;

  explicit Tape(ParamStore *params = nullptr) : params_(params) {}

  /// A value that receives no gradient.
  Var constant(Tensor value);
  /// A leaf whose gradient is kept on the tape (see grad()).
  Var input(Tensor value);
  /// A leaf bound to a parameter; backward() accumulates into the store.
  Var param(int id);

  const ParamStore *params() const { return params_; }
  const Tensor &value(Var v) const { return nodes_[v].value; }
  /// Gradient of the loss w.r.t. `v`; zero-filled if `v` did not contribute.
  const Tensor &grad(Var v) const;

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  /// Adds the 1 x n row `bias` to every row of `a`.
  Var add_bias(Var a, Var bias);
  Var scale(Var a, double s);
  Var sigmoid(Var a);
  Var tanh(Var a);
  /// max(a + margin, 0) elementwise.
  Var hinge(Var a, double margin);

  /// Output row s is the sum (resp. elementwise maximum) of the rows i of `a`
  /// with segment[i] == s. Empty segments produce zero rows. Maximum ties go
  /// to the lowest row index.
  Var segment_sum(Var a, const std::vector<int> &segment, std::size_t num_segments);
  Var segment_max(Var a, const std::vector<int> &segment, std::size_t num_segments);
  /// Output row i is row index[i] of `a`.
  Var gather_rows(Var a, const std::vector<int> &index);
  /// Stacks the rows of all inputs (equal column counts).
  Var concat_rows(const std::vector<Var> &parts);

  /// n x 1 column of L1 distances between row i of `a` and row i of `b`.
  /// The subgradient at equal components is 0.
  Var l1_rows(Var a, Var b);
  /// n x 1 column of -log softmax(logits[i])[target[i]].
  Var softmax_xent(Var logits, const std::vector<int> &target);

  Var sum(Var a);
  Var mean(Var a);

  /// Propagates gradients from the 1 x 1 `loss`. Throws ContractViolation on
  /// a second call.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    int param = -1;
    std::function<void()> back;
  };

  Var push(Tensor value, bool needs_grad, std::function<void()> back = {});
  Tensor &g(Var v);
  bool needs(Var v) const { return nodes_[v].needs_grad; }
  void check(Var v) const;

  ParamStore *params_;
  std::vector<Node> nodes_;
  bool done_ = false;
};

/// Parameter ids of one GRU cell.
struct GruWeights {
  int w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h;

  static GruWeights create(ParamStore &store, const std::string &prefix, std::size_t dim,
                           Rng &rng, double scale = 0.1);
  /// Looks up weights created earlier under `prefix`.
  static GruWeights find(const ParamStore &store, const std::string &prefix);
};

/// The GRU's parameters bound on one tape.
struct GruVars {
  Tape::Var w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h;
  /// With `frozen`, the weights are read from it as constants.
  static GruVars bind(Tape &tape, const GruWeights &w, const ParamStore *frozen = nullptr);
};

/// Row-wise gated recurrent unit:
///   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
///   c = tanh(x Wh + (r * h) Uh + bh), h' = (1 - z) * h + z * c.
Tape::Var gru_cell(Tape &tape, Tape::Var x, Tape::Var h, const GruVars &w);

} // namespace typespace
