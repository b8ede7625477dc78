// SPDX-License-Identifier: Apache-2.0
#include "optformer/tape.hpp"

#include <algorithm>
#include <cmath>

#include "optformer/error.hpp"

namespace optformer {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw ShapeError(std::string(op) + ": operands on different tapes");
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// C(m,n) += op(A) * op(B); op(A) is (m,k) after optional transpose.
void gemm_acc(const double* A, const double* B, double* C, int m, int k, int n, bool tA, bool tB) {
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double a = tA ? A[static_cast<std::size_t>(p) * m + i] : A[static_cast<std::size_t>(i) * k + p];
      if (a == 0.0) continue;
      double* crow = C + static_cast<std::size_t>(i) * n;
      if (!tB) {
        const double* brow = B + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
      } else {
        for (int j = 0; j < n; ++j) crow[j] += a * B[static_cast<std::size_t>(j) * k + p];
      }
    }
  }
}

}  // namespace

Var Tape::input(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = false;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::emit(Tensor value, bool requires_grad, std::function<void(Tape&)> pull) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.pull = std::move(pull);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var scalar_out) {
  if (val(scalar_out).numel() != 1) throw ShapeError("backward: output is not a scalar");
  backward_seed(scalar_out, Tensor::scalar(1.0));
}

void Tape::backward_seed(Var out, const Tensor& seed) {
  check_same_shape(nodes_[static_cast<std::size_t>(out.idx)].value, seed, "backward_seed");
  Tensor& og = grad_mut(out);
  for (std::size_t i = 0; i < seed.data.size(); ++i) og.data[i] += seed.data[i];
  for (int i = out.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.pull && !n.grad.data.empty()) n.pull(*this);
  }
}

void Tape::zero_grads() {
  for (Node& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
}

// ---- elementwise binary with scalar broadcast ---------------------------

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  Tape& t = *a.tape;
  const Tensor &av = t.val(a), &bv = t.val(b);
  const bool as = av.numel() == 1, bs = bv.numel() == 1;
  if (!as && !bs) check_same_shape(av, bv, "add");
  const Tensor& big = bs ? av : bv;
  Tensor out = Tensor::zeros(big.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = av.data[as ? 0 : i] + bv.data[bs ? 0 : i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  const int ai = a.idx, bi = b.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), rg, [ai, bi, oi, as, bs](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    Tensor& gb = tp.grad_mut(Var{&tp, bi});
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[as ? 0 : i] += g.data[i];
      gb.data[bs ? 0 : i] += g.data[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  Tape& t = *a.tape;
  const Tensor &av = t.val(a), &bv = t.val(b);
  const bool as = av.numel() == 1, bs = bv.numel() == 1;
  if (!as && !bs) check_same_shape(av, bv, "sub");
  const Tensor& big = bs ? av : bv;
  Tensor out = Tensor::zeros(big.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = av.data[as ? 0 : i] - bv.data[bs ? 0 : i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  const int ai = a.idx, bi = b.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), rg, [ai, bi, oi, as, bs](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    Tensor& gb = tp.grad_mut(Var{&tp, bi});
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[as ? 0 : i] += g.data[i];
      gb.data[bs ? 0 : i] -= g.data[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  Tape& t = *a.tape;
  const Tensor &av = t.val(a), &bv = t.val(b);
  const bool as = av.numel() == 1, bs = bv.numel() == 1;
  if (!as && !bs) check_same_shape(av, bv, "mul");
  const Tensor& big = bs ? av : bv;
  Tensor out = Tensor::zeros(big.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = av.data[as ? 0 : i] * bv.data[bs ? 0 : i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  const int ai = a.idx, bi = b.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), rg, [ai, bi, oi, as, bs](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    const Tensor& av2 = tp.val(Var{&tp, ai});
    const Tensor& bv2 = tp.val(Var{&tp, bi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    Tensor& gb = tp.grad_mut(Var{&tp, bi});
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[as ? 0 : i] += g.data[i] * bv2.data[bs ? 0 : i];
      gb.data[bs ? 0 : i] += g.data[i] * av2.data[as ? 0 : i];
    }
  });
}

Var div(Var a, Var b) {
  require_same_tape(a, b, "div");
  Tape& t = *a.tape;
  const Tensor &av = t.val(a), &bv = t.val(b);
  const bool as = av.numel() == 1, bs = bv.numel() == 1;
  if (!as && !bs) check_same_shape(av, bv, "div");
  const Tensor& big = bs ? av : bv;
  Tensor out = Tensor::zeros(big.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = av.data[as ? 0 : i] / bv.data[bs ? 0 : i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  const int ai = a.idx, bi = b.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), rg, [ai, bi, oi, as, bs](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    const Tensor& av2 = tp.val(Var{&tp, ai});
    const Tensor& bv2 = tp.val(Var{&tp, bi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    Tensor& gb = tp.grad_mut(Var{&tp, bi});
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double y = bv2.data[bs ? 0 : i];
      ga.data[as ? 0 : i] += g.data[i] / y;
      gb.data[bs ? 0 : i] -= g.data[i] * av2.data[as ? 0 : i] / (y * y);
    }
  });
}

Var neg(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.val(a);
  for (double& v : out.data) v = -v;
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(a), [ai, oi](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] -= g.data[i];
  });
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out = t.val(a);
  for (double& v : out.data) v *= c;
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(a), [ai, oi, c](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += c * g.data[i];
  });
}

Var add_const(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out = t.val(a);
  for (double& v : out.data) v += c;
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(a), [ai, oi](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tape& t = *a.tape;
  const Tensor &av = t.val(a), &bv = t.val(b);
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k)
    throw ShapeError("matmul: inner dims disagree " + av.shape_str() + " x " + bv.shape_str());
  Tensor out = Tensor::zeros({m, n});
  gemm_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n, false, false);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  const int ai = a.idx, bi = b.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), rg, [ai, bi, oi, m, k, n](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    const Tensor& av2 = tp.val(Var{&tp, ai});
    const Tensor& bv2 = tp.val(Var{&tp, bi});
    if (tp.requires_grad(Var{&tp, ai}))   // dA += g * B^T : (m,n)x(n,k)
      gemm_acc(g.data.data(), bv2.data.data(), tp.grad_mut(Var{&tp, ai}).data.data(), m, n, k, false, true);
    if (tp.requires_grad(Var{&tp, bi}))   // dB += A^T * g : (k,m)x(m,n)
      gemm_acc(av2.data.data(), g.data.data(), tp.grad_mut(Var{&tp, bi}).data.data(), k, m, n, true, false);
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  require_rank2(av, "transpose");
  const int m = av.dim(0), n = av.dim(1);
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(a), [ai, oi, m, n](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Var reshape(Var a, std::vector<int> shape) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  if (Tensor::numel_of(shape) != av.numel())
    throw ShapeError("reshape: numel mismatch for " + av.shape_str());
  Tensor out(std::move(shape), av.data);
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(a), [ai, oi](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
  });
}

Var slice_rows(Var a, int r0, int r1) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  require_rank2(av, "slice_rows");
  const int m = av.dim(0), n = av.dim(1);
  if (r0 < 0 || r1 > m || r0 >= r1) throw ShapeError("slice_rows: bad row range");
  Tensor out = Tensor::zeros({r1 - r0, n});
  std::copy(av.data.begin() + static_cast<std::ptrdiff_t>(r0) * n,
            av.data.begin() + static_cast<std::ptrdiff_t>(r1) * n, out.data.begin());
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(a), [ai, oi, r0, n](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    const int rows = g.dim(0);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < n; ++j) ga.at(r0 + i, j) += g.at(i, j);
  });
}

Var slice_cols(Var a, int c0, int c1) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  require_rank2(av, "slice_cols");
  const int m = av.dim(0), n = av.dim(1);
  if (c0 < 0 || c1 > n || c0 >= c1) throw ShapeError("slice_cols: bad col range");
  Tensor out = Tensor::zeros({m, c1 - c0});
  for (int i = 0; i < m; ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = av.at(i, j);
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(a), [ai, oi, m, c0, c1](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (int i = 0; i < m; ++i)
      for (int j = c0; j < c1; ++j) ga.at(i, j) += g.at(i, j - c0);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  Tape& t = *parts[0].tape;
  const int n = t.val(parts[0]).dim(1);
  int total = 0;
  bool rg = false;
  for (Var p : parts) {
    require_same_tape(parts[0], p, "concat_rows");
    const Tensor& pv = t.val(p);
    require_rank2(pv, "concat_rows");
    if (pv.dim(1) != n) throw ShapeError("concat_rows: column count mismatch");
    total += pv.dim(0);
    rg = rg || t.requires_grad(p);
  }
  Tensor out = Tensor::zeros({total, n});
  int row = 0;
  std::vector<std::pair<int, int>> spans;  // (node idx, row count)
  spans.reserve(parts.size());
  for (Var p : parts) {
    const Tensor& pv = t.val(p);
    std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(row) * n);
    spans.emplace_back(p.idx, pv.dim(0));
    row += pv.dim(0);
  }
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), rg, [spans, oi, n](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    int r = 0;
    for (auto [pidx, rows] : spans) {
      Tensor& gp = tp.grad_mut(Var{&tp, pidx});
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < n; ++j) gp.at(i, j) += g.at(r + i, j);
      r += rows;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  Tape& t = *parts[0].tape;
  const int m = t.val(parts[0]).dim(0);
  int total = 0;
  bool rg = false;
  for (Var p : parts) {
    require_same_tape(parts[0], p, "concat_cols");
    const Tensor& pv = t.val(p);
    require_rank2(pv, "concat_cols");
    if (pv.dim(0) != m) throw ShapeError("concat_cols: row count mismatch");
    total += pv.dim(1);
    rg = rg || t.requires_grad(p);
  }
  Tensor out = Tensor::zeros({m, total});
  int col = 0;
  std::vector<std::pair<int, int>> spans;  // (node idx, col count)
  spans.reserve(parts.size());
  for (Var p : parts) {
    const Tensor& pv = t.val(p);
    const int w = pv.dim(1);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) out.at(i, col + j) = pv.at(i, j);
    spans.emplace_back(p.idx, w);
    col += w;
  }
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), rg, [spans, oi, m](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    int c = 0;
    for (auto [pidx, w] : spans) {
      Tensor& gp = tp.grad_mut(Var{&tp, pidx});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) gp.at(i, j) += g.at(i, c + j);
      c += w;
    }
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  double s = 0.0;
  for (double v : av.data) s += v;
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(Tensor::scalar(s), t.requires_grad(a), [ai, oi](Tape& tp) {
    const double g = tp.grad(Var{&tp, oi}).data[0];
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (double& v : ga.data) v += g;
  });
}

Var mean(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  const double inv = 1.0 / static_cast<double>(av.numel());
  double s = 0.0;
  for (double v : av.data) s += v;
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(Tensor::scalar(s * inv), t.requires_grad(a), [ai, oi, inv](Tape& tp) {
    const double g = tp.grad(Var{&tp, oi}).data[0] * inv;
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (double& v : ga.data) v += g;
  });
}

Var sqrt_elem(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.val(a);
  for (double& v : out.data) {
    if (!(v > 0.0)) throw NumericError("sqrt_elem: non-positive input");
    v = std::sqrt(v);
  }
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(a), [ai, oi](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    const Tensor& y = tp.val(Var{&tp, oi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += 0.5 * g.data[i] / y.data[i];
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.val(a);
  for (double& v : out.data) v = stable_sigmoid(v);
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(a), [ai, oi](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    const Tensor& y = tp.val(Var{&tp, oi});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (std::size_t i = 0; i < g.data.size(); ++i)
      ga.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Var softplus(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.val(a);
  for (double& v : out.data) v = stable_softplus(v);
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(a), [ai, oi](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    const Tensor& x = tp.val(Var{&tp, ai});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (std::size_t i = 0; i < g.data.size(); ++i)
      ga.data[i] += g.data[i] * stable_sigmoid(x.data[i]);
  });
}

Var silu(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.val(a);
  for (double& v : out.data) v = v * stable_sigmoid(v);
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(a), [ai, oi](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    const Tensor& x = tp.val(Var{&tp, ai});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double s = stable_sigmoid(x.data[i]);
      ga.data[i] += g.data[i] * (s + x.data[i] * s * (1.0 - s));
    }
  });
}

Var rowwise_mul(Var x, Var g) {
  require_same_tape(x, g, "rowwise_mul");
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  const Tensor& gv = t.val(g);
  require_rank2(xv, "rowwise_mul");
  const int m = xv.dim(0), n = xv.dim(1);
  if (gv.numel() != n) throw ShapeError("rowwise_mul: vector length != columns");
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = xv.at(i, j) * gv.data[static_cast<std::size_t>(j)];
  const bool rg = t.requires_grad(x) || t.requires_grad(g);
  const int xi = x.idx, gi = g.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), rg, [xi, gi, oi, m, n](Tape& tp) {
    const Tensor& gr = tp.grad(Var{&tp, oi});
    const Tensor& xv2 = tp.val(Var{&tp, xi});
    const Tensor& gv2 = tp.val(Var{&tp, gi});
    Tensor& gx = tp.grad_mut(Var{&tp, xi});
    Tensor& gg = tp.grad_mut(Var{&tp, gi});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        gx.at(i, j) += gr.at(i, j) * gv2.data[static_cast<std::size_t>(j)];
        gg.data[static_cast<std::size_t>(j)] += gr.at(i, j) * xv2.at(i, j);
      }
  });
}

Var rowwise_add(Var x, Var b) {
  require_same_tape(x, b, "rowwise_add");
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  const Tensor& bv = t.val(b);
  require_rank2(xv, "rowwise_add");
  const int m = xv.dim(0), n = xv.dim(1);
  if (bv.numel() != n) throw ShapeError("rowwise_add: vector length != columns");
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = xv.at(i, j) + bv.data[static_cast<std::size_t>(j)];
  const bool rg = t.requires_grad(x) || t.requires_grad(b);
  const int xi = x.idx, bi = b.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), rg, [xi, bi, oi, m, n](Tape& tp) {
    const Tensor& gr = tp.grad(Var{&tp, oi});
    Tensor& gx = tp.grad_mut(Var{&tp, xi});
    Tensor& gb = tp.grad_mut(Var{&tp, bi});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        gx.at(i, j) += gr.at(i, j);
        gb.data[static_cast<std::size_t>(j)] += gr.at(i, j);
      }
  });
}

Var layernorm_rows(Var x, double eps) {
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  require_rank2(xv, "layernorm_rows");
  const int m = xv.dim(0), n = xv.dim(1);
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xv.at(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double c = xv.at(i, j) - mu;
      var += c * c;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) out.at(i, j) = (xv.at(i, j) - mu) * inv;
  }
  const int xi = x.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(x), [xi, oi, m, n, eps](Tape& tp) {
    const Tensor& gr = tp.grad(Var{&tp, oi});
    const Tensor& xv2 = tp.val(Var{&tp, xi});
    Tensor& gx = tp.grad_mut(Var{&tp, xi});
    for (int i = 0; i < m; ++i) {
      double mu = 0.0;
      for (int j = 0; j < n; ++j) mu += xv2.at(i, j);
      mu /= n;
      double var = 0.0;
      for (int j = 0; j < n; ++j) {
        const double c = xv2.at(i, j) - mu;
        var += c * c;
      }
      var /= n;
      const double inv = 1.0 / std::sqrt(var + eps);
      // y_j = c_j * inv;  dc_j = g_j*inv - c_j*inv^3/n * sum_k(g_k c_k)
      double gc = 0.0;
      for (int j = 0; j < n; ++j) gc += gr.at(i, j) * (xv2.at(i, j) - mu);
      const double coef = gc * inv * inv * inv / n;
      double dc_mean = 0.0;
      for (int j = 0; j < n; ++j) {
        const double dc = gr.at(i, j) * inv - (xv2.at(i, j) - mu) * coef;
        dc_mean += dc;
      }
      dc_mean /= n;
      for (int j = 0; j < n; ++j) {
        const double dc = gr.at(i, j) * inv - (xv2.at(i, j) - mu) * coef;
        gx.at(i, j) += dc - dc_mean;
      }
    }
  });
}

Var causal_softmax(Var scores) {
  Tape& t = *scores.tape;
  const Tensor& sv = t.val(scores);
  require_rank2(sv, "causal_softmax");
  if (sv.dim(0) != sv.dim(1)) throw ShapeError("causal_softmax: expected square score matrix");
  const int n = sv.dim(0);
  Tensor out = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i) {
    double mx = sv.at(i, 0);
    for (int j = 1; j <= i; ++j) mx = std::max(mx, sv.at(i, j));
    double z = 0.0;
    for (int j = 0; j <= i; ++j) z += std::exp(sv.at(i, j) - mx);
    for (int j = 0; j <= i; ++j) out.at(i, j) = std::exp(sv.at(i, j) - mx) / z;
  }
  const int si = scores.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(std::move(out), t.requires_grad(scores), [si, oi, n](Tape& tp) {
    const Tensor& gr = tp.grad(Var{&tp, oi});
    const Tensor& p = tp.val(Var{&tp, oi});
    Tensor& gs = tp.grad_mut(Var{&tp, si});
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int j = 0; j <= i; ++j) dot += gr.at(i, j) * p.at(i, j);
      for (int j = 0; j <= i; ++j) gs.at(i, j) += p.at(i, j) * (gr.at(i, j) - dot);
    }
  });
}

Var cross_entropy_mean(Var logits, const std::vector<int>& targets) {
  Tape& t = *logits.tape;
  const Tensor& zv = t.val(logits);
  require_rank2(zv, "cross_entropy_mean");
  const int T = zv.dim(0), V = zv.dim(1);
  if (static_cast<int>(targets.size()) != T)
    throw ShapeError("cross_entropy_mean: target count != rows");
  for (int y : targets)
    if (y < 0 || y >= V) throw ConfigError("cross_entropy_mean: target id out of range");
  double loss = 0.0;
  for (int i = 0; i < T; ++i) {
    double mx = zv.at(i, 0);
    for (int j = 1; j < V; ++j) mx = std::max(mx, zv.at(i, j));
    double z = 0.0;
    for (int j = 0; j < V; ++j) z += std::exp(zv.at(i, j) - mx);
    loss += mx + std::log(z) - zv.at(i, targets[static_cast<std::size_t>(i)]);
  }
  loss /= T;
  const int zi = logits.idx;
  const int oi = static_cast<int>(t.size());
  const std::vector<int> tg = targets;
  return t.emit(Tensor::scalar(loss), t.requires_grad(logits), [zi, oi, T, V, tg](Tape& tp) {
    const double g = tp.grad(Var{&tp, oi}).data[0] / T;
    const Tensor& zv2 = tp.val(Var{&tp, zi});
    Tensor& gz = tp.grad_mut(Var{&tp, zi});
    for (int i = 0; i < T; ++i) {
      double mx = zv2.at(i, 0);
      for (int j = 1; j < V; ++j) mx = std::max(mx, zv2.at(i, j));
      double z = 0.0;
      for (int j = 0; j < V; ++j) z += std::exp(zv2.at(i, j) - mx);
      for (int j = 0; j < V; ++j) {
        const double p = std::exp(zv2.at(i, j) - mx) / z;
        gz.at(i, j) += g * (p - (j == tg[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
      }
    }
  });
}

Var gather_rows(Var table, const std::vector<int>& ids) {
  Tape& t = *table.tape;
  const Tensor& tv = t.val(table);
  require_rank2(tv, "gather_rows");
  const int V = tv.dim(0), d = tv.dim(1);
  for (int id : ids)
    if (id < 0 || id >= V) throw ConfigError("gather_rows: id out of range");
  const int T = static_cast<int>(ids.size());
  Tensor out = Tensor::zeros({T, d});
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = tv.at(ids[static_cast<std::size_t>(i)], j);
  const int ti = table.idx;
  const int oi = static_cast<int>(t.size());
  const std::vector<int> idv = ids;
  return t.emit(std::move(out), t.requires_grad(table), [ti, oi, d, idv](Tape& tp) {
    const Tensor& g = tp.grad(Var{&tp, oi});
    Tensor& gt = tp.grad_mut(Var{&tp, ti});
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (int j = 0; j < d; ++j) gt.at(idv[i], j) += g.at(static_cast<int>(i), j);
  });
}

Var frobenius_norm(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.val(a);
  double s = 0.0;
  for (double v : av.data) s += v * v;
  const double f = std::sqrt(s);
  const int ai = a.idx;
  const int oi = static_cast<int>(t.size());
  return t.emit(Tensor::scalar(f), t.requires_grad(a), [ai, oi](Tape& tp) {
    const double g = tp.grad(Var{&tp, oi}).data[0];
    const double f2 = tp.val(Var{&tp, oi}).data[0];
    if (f2 == 0.0) return;  // subgradient 0 at the origin
    const Tensor& av2 = tp.val(Var{&tp, ai});
    Tensor& ga = tp.grad_mut(Var{&tp, ai});
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g * av2.data[i] / f2;
  });
}

}  // namespace optformer
