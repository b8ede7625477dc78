// SPDX-License-Identifier: Apache-2.0
#include "optformer/sharpness.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>

namespace optformer {

std::vector<double> flatten_params(const ParamStore& params) {
  std::vector<double> theta;
  theta.reserve(static_cast<std::size_t>(params.total_numel()));
  for (const auto& [name, t] : params.items())
    theta.insert(theta.end(), t.data.begin(), t.data.end());
  return theta;
}

void unflatten_params(ParamStore& params, const std::vector<double>& theta) {
  std::size_t off = 0;
  for (auto& [name, t] : params.items_mut()) {
    if (off + t.data.size() > theta.size())
      throw ShapeError("unflatten_params: vector too short");
    std::copy(theta.begin() + static_cast<std::ptrdiff_t>(off),
              theta.begin() + static_cast<std::ptrdiff_t>(off + t.data.size()), t.data.begin());
    off += t.data.size();
  }
  if (off != theta.size()) throw ShapeError("unflatten_params: vector size mismatch");
}

GradVecFn model_grad_fn(const ModelConfig& cfg, const ParamStore& shape_ref,
                        const std::vector<Batch>& batches) {
  // scratch copy keeps tensor shapes; theta supplies the values
  ParamStore scratch = shape_ref;
  auto scratch_ptr = std::make_shared<ParamStore>(std::move(scratch));
  return [cfg, scratch_ptr, batches](const std::vector<double>& theta) {
    unflatten_params(*scratch_ptr, theta);
    std::vector<double> acc(theta.size(), 0.0);
    for (const Batch& b : batches) {
      GradEval ge = loss_and_grads(cfg, *scratch_ptr, b);
      std::size_t off = 0;
      for (const Tensor& g : ge.grads) {
        for (double v : g.data) acc[off++] += v;
      }
    }
    const double inv = 1.0 / static_cast<double>(batches.size());
    for (double& v : acc) v *= inv;
    return acc;
  };
}

std::vector<double> hvp_central(const GradVecFn& grad, const std::vector<double>& theta,
                                const std::vector<double>& v) {
  double vnorm_sq = 0.0, tnorm_sq = 0.0;
  for (double x : v) vnorm_sq += x * x;
  for (double x : theta) tnorm_sq += x * x;
  const double vnorm = std::sqrt(vnorm_sq);
  if (vnorm == 0.0) throw ConfigError("hvp_central: zero direction");
  const double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
                   (1.0 + std::sqrt(tnorm_sq / static_cast<double>(theta.size())));

  std::vector<double> plus = theta, minus = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double step = h * v[i] / vnorm;
    plus[i] += step;
    minus[i] -= step;
  }
  std::vector<double> gp = grad(plus);
  std::vector<double> gm = grad(minus);
  std::vector<double> hv(theta.size());
  const double s = vnorm / (2.0 * h);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    hv[i] = (gp[i] - gm[i]) * s;
    if (!std::isfinite(hv[i])) throw NumericError("hvp_central: non-finite gradient difference");
  }
  return hv;
}

PowerIterResult power_iteration(const HvpFn& hvp, long n, int max_iters, double tol,
                                std::uint64_t seed, std::vector<double>* history) {
  if (max_iters < 1) throw ConfigError("power_iteration: max_iters must be >= 1");
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.normal();
  double nrm = 0.0;
  for (double x : v) nrm += x * x;
  nrm = std::sqrt(nrm);
  for (double& x : v) x /= nrm;

  PowerIterResult res;
  double prev = 0.0;
  for (int k = 0; k < max_iters; ++k) {
    std::vector<double> hv = hvp(v);
    double rayleigh = 0.0, hv_norm = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      rayleigh += v[i] * hv[i];
      hv_norm += hv[i] * hv[i];
    }
    hv_norm = std::sqrt(hv_norm);
    res.lambda_max = rayleigh;
    res.iters = k + 1;
    if (history) history->push_back(rayleigh);
    if (hv_norm == 0.0) {  // operator annihilated the probe
      res.lambda_max = 0.0;
      res.converged = true;
      return res;
    }
    if (k > 0 && std::abs(rayleigh - prev) / std::max(std::abs(rayleigh), 1e-300) < tol) {
      res.converged = true;
      return res;
    }
    prev = rayleigh;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = hv[i] / hv_norm;
  }
  return res;  // unconverged: last estimate, flagged
}

HutchinsonResult hutchinson_trace(const HvpFn& hvp, long n, int probes, std::uint64_t seed) {
  if (probes < 1) throw ConfigError("hutchinson_trace: probes must be >= 1");
  Rng rng(seed);
  HutchinsonResult res;
  res.probes = probes;
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(probes));
  for (int p = 0; p < probes; ++p) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = (rng.next_u64() & 1ULL) ? 1.0 : -1.0;
    std::vector<double> hv = hvp(v);
    double quad = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) quad += v[i] * hv[i];
    samples.push_back(quad);
  }
  for (double s : samples) res.estimate += s;
  res.estimate /= probes;
  if (probes > 1) {
    double ss = 0.0;
    for (double s : samples) ss += (s - res.estimate) * (s - res.estimate);
    res.stddev = std::sqrt(ss / (probes - 1));
  }
  res.trace_over_n = res.estimate / static_cast<double>(n);
  return res;
}

CurveResult filter_normalized_curve_fn(ParamStore& params, const LossFn& loss_fn,
                                       std::uint64_t direction_seed, double alpha_max,
                                       int grid_points) {
  if (grid_points < 3 || grid_points % 2 == 0)
    throw ConfigError("filter_normalized_curve: grid must be odd and >= 3 so alpha=0 is sampled");

  // draw one direction tensor per parameter tensor, rescaled to its norm
  Rng rng(direction_seed);
  std::vector<Tensor> direction;
  CurveResult res;
  direction.reserve(params.items().size());
  for (const auto& [name, t] : params.items()) {
    Tensor d = Tensor::zeros(t.shape);
    for (double& v : d.data) v = rng.normal();
    double dn = 0.0, tn = 0.0;
    for (double v : d.data) dn += v * v;
    for (double v : t.data) tn += v * v;
    dn = std::sqrt(dn);
    tn = std::sqrt(tn);
    if (tn == 0.0) {
      std::cerr << "[curve] zero-norm parameter tensor '" << name << "': direction left as drawn\n";
    } else if (dn > 0.0) {
      for (double& v : d.data) v *= tn / dn;
    }
    double final_norm = 0.0;
    for (double v : d.data) final_norm += v * v;
    res.direction_norms.push_back(std::sqrt(final_norm));
    direction.push_back(std::move(d));
  }

  const std::vector<double> saved = flatten_params(params);
  for (int g = 0; g < grid_points; ++g) {
    const double alpha =
        -alpha_max + 2.0 * alpha_max * static_cast<double>(g) / (grid_points - 1);
    for (std::size_t i = 0; i < params.items().size(); ++i) {
      Tensor& p = params.items_mut()[i].second;
      const Tensor& d = direction[i];
      for (std::size_t j = 0; j < p.data.size(); ++j) p.data[j] += alpha * d.data[j];
    }
    const double loss = loss_fn(params);
    unflatten_params(params, saved);  // exact restore
    res.points.push_back({alpha, loss});
    if (g == (grid_points - 1) / 2) res.loss_at_zero = loss;
  }
  double lo = res.points[0].loss, hi = res.points[0].loss;
  for (const CurvePoint& p : res.points) {
    lo = std::min(lo, p.loss);
    hi = std::max(hi, p.loss);
  }
  res.range = hi - lo;
  return res;
}

CurveResult filter_normalized_curve(const ModelConfig& cfg, ParamStore& params,
                                    const std::vector<Batch>& batches,
                                    std::uint64_t direction_seed, double alpha_max,
                                    int grid_points) {
  return filter_normalized_curve_fn(
      params, [&](const ParamStore& p) { return eval_loss(cfg, p, batches); }, direction_seed,
      alpha_max, grid_points);
}

double perplexity_eval(const ModelConfig& cfg, const ParamStore& params,
                       const std::vector<Batch>& batches) {
  return std::exp(eval_loss(cfg, params, batches));
}

SharpnessReport sharpness_probe(const ModelConfig& cfg, ParamStore& params,
                                const std::vector<Batch>& batches, const DiagnosticsConfig& diag,
                                std::uint64_t seed) {
  SharpnessReport rep;
  const std::vector<double> theta = flatten_params(params);
  rep.n_params = static_cast<long>(theta.size());
  GradVecFn grad = model_grad_fn(cfg, params, batches);
  HvpFn hvp = [&](const std::vector<double>& v) { return hvp_central(grad, theta, v); };

  PowerIterResult pi =
      power_iteration(hvp, rep.n_params, diag.power_iters, diag.power_tol, seed ^ 0x70776572ULL);
  rep.lambda_max = pi.lambda_max;
  rep.power_iters = pi.iters;
  rep.power_converged = pi.converged;

  HutchinsonResult hu =
      hutchinson_trace(hvp, rep.n_params, diag.hutchinson_probes, seed ^ 0x68757463ULL);
  rep.trace_estimate = hu.estimate;
  rep.trace_std = hu.stddev;
  rep.probes = hu.probes;
  rep.trace_over_n = hu.trace_over_n;

  rep.curve = filter_normalized_curve(cfg, params, batches, seed ^ 0x63757276ULL,
                                      diag.curve_alpha_max, diag.curve_points);
  return rep;
}

nlohmann::json sharpness_json(const SharpnessReport& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const CurvePoint& p : r.curve.points) curve.push_back({{"alpha", p.alpha}, {"loss", p.loss}});
  return {{"lambda_max", r.lambda_max},
          {"power_iters", r.power_iters},
          {"power_converged", r.power_converged},
          {"trace_estimate", r.trace_estimate},
          {"trace_std", r.trace_std},
          {"probes", r.probes},
          {"trace_over_n", r.trace_over_n},
          {"n_params", r.n_params},
          {"curve", curve},
          {"curve_range", r.curve.range},
          {"loss_at_zero", r.curve.loss_at_zero}};
}

std::string curve_csv(const CurveResult& r) {
  std::string out = "alpha,loss\n";
  char buf[80];
  for (const CurvePoint& p : r.points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p.alpha, p.loss);
    out += buf;
  }
  return out;
}

}  // namespace optformer
