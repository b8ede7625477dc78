// SPDX-License-Identifier: Apache-2.0
#include "optformer/numerics.hpp"

#include <cmath>

#include "optformer/error.hpp"
#include "optformer/rng.hpp"

namespace optformer {

Var newton_schulz_polar(Var m, int steps) {
  Tape& t = *m.tape;
  const Tensor& mv = t.val(m);
  if (mv.rank() != 2) throw ShapeError("newton_schulz_polar: expected a 2-D matrix");
  if (steps < 1) throw ConfigError("newton_schulz_polar: steps must be >= 1");

  double fro = 0.0;
  for (double v : mv.data) fro += v * v;
  if (fro == 0.0) return t.constant(Tensor::zeros(mv.shape));

  Var y = div(m, frobenius_norm(m));
  for (int k = 0; k < steps; ++k) {
    Var gram = matmul(y, transpose(y));       // (H,H); y * p(y^T y) == p(y y^T) * y
    Var gy = matmul(gram, y);
    Var ggy = matmul(gram, gy);
    y = add(add(scale(y, kPolarA), scale(gy, kPolarB)), scale(ggy, kPolarC));
  }
  return y;
}

Tensor newton_schulz_polar(const Tensor& m, int steps, bool* zero_input) {
  Tape scratch;
  Var in = scratch.constant(m);
  bool zero = true;
  for (double v : m.data)
    if (v != 0.0) { zero = false; break; }
  if (zero_input) *zero_input = zero;
  return scratch.val(newton_schulz_polar(in, steps));
}

double symmetric_spectral_norm_estimate(const Tensor& a) {
  const int n = a.dim(0);
  Rng rng(0x5eedULL);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.normal();
  double lambda = 0.0;
  std::vector<double> av(static_cast<std::size_t>(n));
  for (int it = 0; it < 100; ++it) {
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += a.at(i, j) * v[static_cast<std::size_t>(j)];
      av[static_cast<std::size_t>(i)] = s;
    }
    double nrm = 0.0;
    for (double x : av) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) return 0.0;
    lambda = nrm;  // |lambda_max| since Rayleigh of normalized power iterate
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = av[static_cast<std::size_t>(i)] / nrm;
  }
  return lambda;
}

Var inv_sqrt_newton(Var r, int steps, double ridge) {
  Tape& t = *r.tape;
  const Tensor& rv = t.val(r);
  if (rv.rank() != 2 || rv.dim(0) != rv.dim(1))
    throw ShapeError("inv_sqrt_newton: expected a square matrix");
  if (steps < 1) throw ConfigError("inv_sqrt_newton: steps must be >= 1");
  if (ridge < 0.0) throw ConfigError("inv_sqrt_newton: ridge must be non-negative");
  const int n = rv.dim(0);

  double max_abs = 0.0, max_asym = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      max_abs = std::max(max_abs, std::abs(rv.at(i, j)));
      max_asym = std::max(max_asym, std::abs(rv.at(i, j) - rv.at(j, i)));
    }
  if (max_asym > 1e-8 * (1.0 + max_abs))
    throw ValidationError("inv_sqrt_newton: input is not symmetric");

  Var a = ridge > 0.0 ? add(r, t.constant(Tensor{{n, n}, [&] {
                          Tensor id = Tensor::identity(n);
                          for (double& v : id.data) v *= ridge;
                          return id.data;
                        }()}))
                      : r;

  // Detached pre-scaling by the spectral norm: the iterate limit does not
  // depend on the scale, so its gradient contribution is O(residual).
  const double s = symmetric_spectral_norm_estimate(t.val(a)) * (1.0 + 1e-9);
  if (s == 0.0) throw NumericError("inv_sqrt_newton: zero matrix has no inverse square root");

  Var b = scale(a, 1.0 / s);
  Var x = t.constant(Tensor::identity(n));
  for (int k = 0; k < steps; ++k) {
    Var xx = matmul(x, x);
    Var bxx = matmul(b, xx);
    x = sub(scale(x, 1.5), scale(matmul(x, bxx), 0.5));
    const Tensor& xv = t.val(x);
    double mx = 0.0;
    for (double v : xv.data) {
      if (!std::isfinite(v)) throw NumericError("inv_sqrt_newton: non-finite iterate at step " + std::to_string(k + 1));
      mx = std::max(mx, std::abs(v));
    }
    if (mx > 1e12)
      throw NumericError("inv_sqrt_newton: iterate norm growth detected at step " + std::to_string(k + 1));
  }
  return scale(x, 1.0 / std::sqrt(s));
}

Tensor inv_sqrt_newton(const Tensor& r, int steps, double ridge) {
  Tape scratch;
  Var in = scratch.constant(r);
  return scratch.val(inv_sqrt_newton(in, steps, ridge));
}

double inv_sqrt_residual(const Tensor& y, const Tensor& a) {
  const int n = a.dim(0);
  Tensor ay = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double v = a.at(i, k);
      if (v == 0.0) continue;
      for (int j = 0; j < n; ++j) ay.at(i, j) += v * y.at(k, j);
    }
  double res = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += y.at(i, k) * ay.at(k, j);
      const double diff = s - (i == j ? 1.0 : 0.0);
      res += diff * diff;
    }
  return std::sqrt(res);
}

}  // namespace optformer
