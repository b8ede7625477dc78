// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "optformer/tape.hpp"

namespace optformer {

// Quintic polar iteration coefficients. The scalar map
// f(x) = x*(a + b*x^2 + c*x^4) fixes 1 with f'(1) = 0 and is monotone
// toward 1 on (0, sqrt(7/3)); Frobenius pre-normalization puts every
// singular value in (0,1], inside that interval.
constexpr double kPolarA = 15.0 / 8.0;
constexpr double kPolarB = -10.0 / 8.0;
constexpr double kPolarC = 3.0 / 8.0;

// Orthogonal polar factor of a single (H,D) matrix by K quintic
// Newton-Schulz steps on the Frobenius-normalized input. A zero input
// returns zero (the flag reports it) instead of erroring.
Var newton_schulz_polar(Var m, int steps);
Tensor newton_schulz_polar(const Tensor& m, int steps, bool* zero_input = nullptr);

// Inverse matrix square root of a symmetric PSD (D,D) matrix by K Newton
// iterations built from matmuls. `ridge` is added to the diagonal before
// the iteration. Throws ValidationError on non-symmetric input and
// NumericError on detected divergence.
Var inv_sqrt_newton(Var r, int steps, double ridge);
Tensor inv_sqrt_newton(const Tensor& r, int steps, double ridge);

// ||Y*A*Y - I||_F, the defining residual of an inverse square root.
double inv_sqrt_residual(const Tensor& y, const Tensor& a);

// Largest eigenvalue magnitude of a symmetric matrix by plain power
// iteration (used for pre-scaling; not recorded on any tape).
double symmetric_spectral_norm_estimate(const Tensor& a);

}  // namespace optformer
