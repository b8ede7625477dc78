// SPDX-License-Identifier: Apache-2.0
#include "optformer/nn.hpp"

#include <cmath>

#include "optformer/error.hpp"

namespace optformer {

Var layernorm(Var x, std::optional<Var> gain, std::optional<Var> bias, double eps) {
  const Tensor& xv = x.tape->val(x);
  if (xv.rank() != 2) throw ShapeError("layernorm: expected (T,d) input");
  if (xv.dim(1) < 2) throw ShapeError("layernorm: feature dimension must be >= 2");
  if (!(eps > 0.0)) throw ConfigError("layernorm: eps must be positive");
  if (!xv.all_finite()) throw NumericError("layernorm: non-finite input");
  Var y = layernorm_rows(x, eps);
  if (gain) y = rowwise_mul(y, *gain);
  if (bias) y = rowwise_add(y, *bias);
  return y;
}

Var attention_oracle(Var x_norm, const AttentionWeights& w, int heads) {
  Tape& t = *x_norm.tape;
  const Tensor& xv = t.val(x_norm);
  if (xv.rank() != 2) throw ShapeError("attention_oracle: expected (T,d) input");
  const int d = xv.dim(1);
  if (heads < 1 || d % heads != 0)
    throw ConfigError("attention_oracle: model dim not divisible by head count");
  const int hd = d / heads;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  Var q = matmul(x_norm, w.wq);
  Var k = matmul(x_norm, w.wk);
  Var v = matmul(x_norm, w.wv);

  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * hd, (h + 1) * hd);
    Var kh = slice_cols(k, h * hd, (h + 1) * hd);
    Var vh = slice_cols(v, h * hd, (h + 1) * hd);
    Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt_hd);
    Var probs = causal_softmax(scores);
    outs.push_back(matmul(probs, vh));
  }
  return matmul(concat_cols(outs), w.wo);
}

Var mlp_oracle(Var x_norm, const MlpWeights& w) {
  Tape& t = *x_norm.tape;
  const Tensor& xv = t.val(x_norm);
  if (xv.rank() != 2) throw ShapeError("mlp_oracle: expected (T,d) input");
  if (t.val(w.w1).dim(0) != xv.dim(1)) throw ShapeError("mlp_oracle: w1 rows != input dim");
  if (t.val(w.w1).dim(1) < 1) throw ShapeError("mlp_oracle: hidden width must be >= 1");
  Var h = silu(rowwise_add(matmul(x_norm, w.w1), w.b1));
  return rowwise_add(matmul(h, w.w2), w.b2);
}

Var ema(Var prev, Var fresh, Var decay, bool convex, std::optional<Var> gain) {
  check_same_shape(prev.tape->val(prev), fresh.tape->val(fresh), "ema");
  if (convex) {
    return decay * prev + add_const(neg(decay), 1.0) * fresh;
  }
  if (!gain) throw ConfigError("ema: non-convex form needs an explicit gain");
  return decay * prev + (*gain) * fresh;
}

}  // namespace optformer
