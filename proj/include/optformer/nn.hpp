// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "optformer/tape.hpp"

namespace optformer {

constexpr double kLayerNormEps = 1e-5;
constexpr double kAdamDenomEps = 1e-8;

// LayerNorm over the last axis of a (T,d) tensor: rows are centered to
// mean 0 and scaled to unit RMS before the optional gain/bias. Invariant
// to positive rescaling of the input up to the eps floor.
Var layernorm(Var x, std::optional<Var> gain, std::optional<Var> bias, double eps = kLayerNormEps);

struct AttentionWeights {
  Var wq, wk, wv, wo;  // each (d,d), no biases
};

// Causal multi-head softmax attention. Output at position t depends only
// on positions <= t. Requires d divisible by heads.
Var attention_oracle(Var x_norm, const AttentionWeights& w, int heads);

struct MlpWeights {
  Var w1, b1;  // (d,h), (h)
  Var w2, b2;  // (h,d), (d)
};

// Tokenwise two-layer MLP with a SiLU gate (x * sigmoid(x)); row t of the
// output depends only on row t of the input.
Var mlp_oracle(Var x_norm, const MlpWeights& w);

// Exponential moving average. Convex form: decay*prev + (1-decay)*fresh.
// Non-convex form: decay*prev + gain*fresh with the gain supplied
// separately (pass convex=false and a gain Var).
Var ema(Var prev, Var fresh, Var decay, bool convex, std::optional<Var> gain = std::nullopt);

}  // namespace optformer
