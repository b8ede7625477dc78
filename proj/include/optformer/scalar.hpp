// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "optformer/tape.hpp"

namespace optformer {

enum class ScalarKind { UnitInterval, Positive };

// A learned scalar gate in raw (unconstrained) form. Unit-interval scalars
// materialize through the logistic map into (0,1); positive scalars through
// softplus into (0,inf). Both maps are strictly monotone in raw.
struct ScalarParam {
  double raw = 0.0;
  ScalarKind kind = ScalarKind::UnitInterval;
};

inline double materialize(const ScalarParam& p) {
  if (p.kind == ScalarKind::UnitInterval) {
    if (p.raw >= 0.0) return 1.0 / (1.0 + std::exp(-p.raw));
    const double e = std::exp(p.raw);
    return e / (1.0 + e);
  }
  if (p.raw > 0.0) return p.raw + std::log1p(std::exp(-p.raw));
  return std::log1p(std::exp(p.raw));
}

// Tape-level materialization so gradients flow into the raw weight.
inline Var materialize(Var raw, ScalarKind kind) {
  return kind == ScalarKind::UnitInterval ? sigmoid(raw) : softplus(raw);
}

// raw value whose sigmoid is v (v in (0,1))
inline double logit(double v) { return std::log(v / (1.0 - v)); }
// raw value whose softplus is v (v > 0)
inline double softplus_inverse(double v) { return std::log(std::expm1(v)); }

}  // namespace optformer
