// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <json.hpp>
#include <vector>

#include "optformer/train.hpp"

namespace optformer {

std::vector<double> flatten_params(const ParamStore& params);
void unflatten_params(ParamStore& params, const std::vector<double>& theta);

// Gradient of the mean probe-batch loss as a function of the flattened
// parameter vector.
using GradVecFn = std::function<std::vector<double>(const std::vector<double>&)>;
GradVecFn model_grad_fn(const ModelConfig& cfg, const ParamStore& shape_ref,
                        const std::vector<Batch>& batches);

// Hessian-vector product by central finite differences of the analytic
// gradient: Hv ~ (g(theta + h vhat) - g(theta - h vhat)) * ||v|| / (2h),
// h = cbrt(machine eps) * (1 + ||theta||/sqrt(N)).
std::vector<double> hvp_central(const GradVecFn& grad, const std::vector<double>& theta,
                                const std::vector<double>& v);

using HvpFn = std::function<std::vector<double>(const std::vector<double>&)>;

struct PowerIterResult {
  double lambda_max = 0.0;
  int iters = 0;
  bool converged = false;
};

// Rayleigh-quotient power iteration on an HVP operator, stopping when the
// relative eigenvalue change drops below tol. `history` (optional) receives
// the Rayleigh estimate of every iteration.
PowerIterResult power_iteration(const HvpFn& hvp, long n, int max_iters, double tol,
                                std::uint64_t seed, std::vector<double>* history = nullptr);

struct HutchinsonResult {
  double estimate = 0.0;   // mean of v^T H v over the probes
  double stddev = 0.0;     // sample standard deviation over the probes
  double trace_over_n = 0.0;
  int probes = 0;
};

// Trace estimate from seeded Rademacher probes (E[v v^T] = I).
HutchinsonResult hutchinson_trace(const HvpFn& hvp, long n, int probes, std::uint64_t seed);

struct CurvePoint {
  double alpha = 0.0;
  double loss = 0.0;
};

struct CurveResult {
  std::vector<CurvePoint> points;  // odd count, alpha = 0 in the middle
  double range = 0.0;              // max loss - min loss
  double loss_at_zero = 0.0;
  std::vector<double> direction_norms;  // per tensor, equals parameter norms
};

// Loss slice along a random direction rescaled per parameter tensor to
// that tensor's norm. Parameters are restored exactly afterwards.
using LossFn = std::function<double(const ParamStore&)>;
CurveResult filter_normalized_curve_fn(ParamStore& params, const LossFn& loss_fn,
                                       std::uint64_t direction_seed, double alpha_max,
                                       int grid_points);
CurveResult filter_normalized_curve(const ModelConfig& cfg, ParamStore& params,
                                    const std::vector<Batch>& batches,
                                    std::uint64_t direction_seed, double alpha_max,
                                    int grid_points);

// exp(mean token-level cross-entropy) on fixed batches.
double perplexity_eval(const ModelConfig& cfg, const ParamStore& params,
                       const std::vector<Batch>& batches);

struct SharpnessReport {
  double lambda_max = 0.0;
  int power_iters = 0;
  bool power_converged = false;
  double trace_estimate = 0.0;
  double trace_std = 0.0;
  int probes = 0;
  double trace_over_n = 0.0;
  long n_params = 0;
  CurveResult curve;
};

nlohmann::json sharpness_json(const SharpnessReport& r);
std::string curve_csv(const CurveResult& r);

// Full sharpness probe of a trained model on fixed validation batches.
SharpnessReport sharpness_probe(const ModelConfig& cfg, ParamStore& params,
                                const std::vector<Batch>& batches, const DiagnosticsConfig& diag,
                                std::uint64_t seed);

}  // namespace optformer
