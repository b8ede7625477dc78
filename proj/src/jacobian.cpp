// SPDX-License-Identifier: Apache-2.0
#include "optformer/jacobian.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>

namespace optformer {

Tensor full_block_jacobian(const ModelConfig& cfg, const ParamStore& params, int layer,
                           const LayerTrajectory& traj, long max_dense_dim) {
  cfg.validate();
  if (layer < 0 || layer >= cfg.layers) throw ConfigError("full_block_jacobian: bad layer index");
  const long n = traj.x.numel();
  if (n > max_dense_dim)
    throw SizeGuardError("full_block_jacobian: T*d = " + std::to_string(n) +
                         " too large for the dense diagnostic (guard " +
                         std::to_string(max_dense_dim) + ")");

  Tape tape;
  BoundModel model = bind_params(tape, cfg, params, /*trainable=*/false);
  Var x = tape.input(traj.x);

  // auxiliary streams enter as constants: differentiated through as fixed
  AuxState aux;
  if (traj.aux.v) aux.v = tape.constant(*traj.aux.v);
  if (traj.aux.m) aux.m = tape.constant(*traj.aux.m);
  if (traj.aux.s) aux.s = tape.constant(*traj.aux.s);
  for (const Tensor& r : traj.aux.r) aux.r.push_back(tape.constant(r));

  auto [x_out, aux_out] = block_forward(model, layer, x, aux);
  (void)aux_out;

  const int N = static_cast<int>(n);
  Tensor jac = Tensor::zeros({N, N});
  Tensor seed = Tensor::zeros(tape.val(x_out).shape);
  for (int k = 0; k < N; ++k) {
    tape.zero_grads();
    seed.data[static_cast<std::size_t>(k)] = 1.0;
    tape.backward_seed(x_out, seed);
    seed.data[static_cast<std::size_t>(k)] = 0.0;
    const Tensor& gx = tape.grad(x);
    for (int l = 0; l < N; ++l) jac.at(k, l) = gx.data[static_cast<std::size_t>(l)];
  }
  return jac;
}

SpectrumReport spectrum_metrics(const std::vector<Tensor>& layer_jacobians, double rel_cutoff) {
  if (layer_jacobians.empty()) throw ConfigError("spectrum_metrics: need at least one layer");
  if (!(rel_cutoff > 0.0 && rel_cutoff < 1.0))
    throw ConfigError("spectrum_metrics: relative cutoff must be in (0,1)");

  SpectrumReport report;
  report.cutoff = rel_cutoff;
  for (const Tensor& j : layer_jacobians) {
    if (j.rank() != 2) throw ShapeError("spectrum_metrics: Jacobian must be a matrix");
    Eigen::MatrixXd m(j.dim(0), j.dim(1));
    for (int r = 0; r < j.dim(0); ++r)
      for (int c = 0; c < j.dim(1); ++c) m(r, c) = j.at(r, c);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();

    SpectrumLayer layer;
    const double sigma_max = sv.size() > 0 ? sv(0) : 0.0;
    if (!(sigma_max > 0.0))
      throw NumericError("spectrum_metrics: degenerate spectrum (all singular values zero)");
    const double abs_cutoff = rel_cutoff * sigma_max;
    double fro_sq = 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      fro_sq += sv(i) * sv(i);
      if (sv(i) >= abs_cutoff) layer.kept_singular_values.push_back(sv(i));
    }
    if (layer.kept_singular_values.empty())
      throw NumericError("spectrum_metrics: degenerate spectrum (everything below cutoff)");
    layer.log_sigma_min = std::log(layer.kept_singular_values.back());
    layer.stable_rank = fro_sq / (sigma_max * sigma_max);
    layer.spread = layer.kept_singular_values.front() / layer.kept_singular_values.back();
    report.min_gain_persistence += layer.log_sigma_min;
    report.layers.push_back(std::move(layer));
  }
  return report;
}

std::string spectrum_csv(const SpectrumReport& report) {
  std::string out = "layer,sigma_min,stable_rank,spread\n";
  char buf[160];
  for (std::size_t l = 0; l < report.layers.size(); ++l) {
    const SpectrumLayer& s = report.layers[l];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", l,
                  std::exp(s.log_sigma_min), s.stable_rank, s.spread);
    out += buf;
  }
  return out;
}

nlohmann::json spectrum_json(const SpectrumReport& report) {
  nlohmann::json layers = nlohmann::json::array();
  for (const SpectrumLayer& s : report.layers) {
    layers.push_back({{"singular_values", s.kept_singular_values},
                      {"log_sigma_min", s.log_sigma_min},
                      {"stable_rank", s.stable_rank},
                      {"spread", s.spread}});
  }
  return {{"layers", layers},
          {"min_gain_persistence", report.min_gain_persistence},
          {"cutoff", report.cutoff}};
}

}  // namespace optformer
