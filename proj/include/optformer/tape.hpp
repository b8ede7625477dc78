// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "optformer/tensor.hpp"

namespace optformer {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the owning
// tape is alive and not reset.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  bool valid() const { return tape != nullptr && idx >= 0; }
};

// Record of primitive operations sufficient to compute the gradient of a
// scalar output with respect to any recorded input. Nodes are appended in
// program order, so reverse index order is a valid topological order for
// the backward sweep; replaying is deterministic by construction.
class Tape {
 public:
  // Differentiable leaf (parameters, probed activations).
  Var input(Tensor value);
  // Non-differentiable leaf (data, frozen auxiliary streams).
  Var constant(Tensor value);

  const Tensor& val(Var v) const { return nodes_[static_cast<std::size_t>(v.idx)].value; }
  // Gradient storage is lazy: untouched nodes hold no buffer until read.
  const Tensor& grad(Var v) { return grad_mut(v); }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.idx)].requires_grad; }

  // Backward from a scalar output: seeds d(out)/d(out) = 1.
  void backward(Var scalar_out);
  // Backward from an arbitrary output with an explicit cotangent seed
  // (used to extract Jacobian rows one output component at a time).
  void backward_seed(Var out, const Tensor& seed);

  void zero_grads();
  void reset() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // Internal: append an op node. `pull` propagates this node's grad into its
  // parents; it is dropped when no parent requires grad.
  Var emit(Tensor value, bool requires_grad, std::function<void(Tape&)> pull);
  Tensor& grad_mut(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.idx)];
    if (n.grad.data.empty() && n.value.numel() > 0) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
  }
  Tensor& val_mut(Var v) { return nodes_[static_cast<std::size_t>(v.idx)].value; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> pull;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---- primitive ops ----------------------------------------------------
// Elementwise ops broadcast a 1-element operand against any shape.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);      // c is a plain constant
Var add_const(Var a, double c);

Var matmul(Var a, Var b);        // (m,k)x(k,n) -> (m,n)
Var transpose(Var a);            // 2-D
Var reshape(Var a, std::vector<int> shape);
Var slice_rows(Var a, int r0, int r1);
Var slice_cols(Var a, int c0, int c1);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

Var sum(Var a);                  // -> scalar {1}
Var mean(Var a);                 // -> scalar {1}

Var sqrt_elem(Var a);            // requires strictly positive input
Var sigmoid(Var a);
Var softplus(Var a);
Var silu(Var a);                 // x * sigmoid(x)

Var rowwise_mul(Var x, Var g);   // (T,d) * (d,) broadcast over rows
Var rowwise_add(Var x, Var b);

// Row normalization: each row centered to mean 0 and scaled to unit RMS of
// the centered values (variance computed with 1/d), with an eps floor
// inside the square root. Affine gain/bias are applied by the caller.
Var layernorm_rows(Var x, double eps);

// Row-causal softmax on a (T,T) score matrix: row i is a softmax over
// columns j <= i, entries above the diagonal are exactly zero.
Var causal_softmax(Var scores);

// Mean token-level cross-entropy of logits (T,V) against integer targets.
Var cross_entropy_mean(Var logits, const std::vector<int>& targets);

// Rows of an embedding table (V,d) selected by ids -> (T,d).
Var gather_rows(Var table, const std::vector<int>& ids);

// sqrt(sum of squares) as a scalar node.
Var frobenius_norm(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

}  // namespace optformer
