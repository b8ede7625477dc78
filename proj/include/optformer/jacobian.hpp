// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "optformer/model.hpp"

namespace optformer {

struct SpectrumLayer {
  std::vector<double> kept_singular_values;  // descending, after the cutoff
  double log_sigma_min = 0.0;                // log of the smallest kept value
  double stable_rank = 0.0;                  // ||J||_F^2 / ||J||_2^2
  double spread = 0.0;                       // sigma_max_eff / sigma_min_eff
};

struct SpectrumReport {
  std::vector<SpectrumLayer> layers;
  double min_gain_persistence = 0.0;  // sum over layers of log_sigma_min
  double cutoff = 0.0;                // relative cutoff that was applied
};

// Dense (T*d)x(T*d) Jacobian of the complete block map (pre-norms, oracle,
// aux LayerNorms, scalar gates) with the auxiliary streams held fixed at
// their recorded trajectory values. Row k holds d(out_k)/d(x_in). Guarded
// by max_dense_dim on T*d.
Tensor full_block_jacobian(const ModelConfig& cfg, const ParamStore& params, int layer,
                           const LayerTrajectory& traj, long max_dense_dim = 4096);

// SVD every layer Jacobian, keep sigma >= rel_cutoff * sigma_max, and
// reduce to min-gain persistence, stable rank, and spread.
SpectrumReport spectrum_metrics(const std::vector<Tensor>& layer_jacobians, double rel_cutoff);

// CSV: layer,sigma_min,stable_rank,spread
std::string spectrum_csv(const SpectrumReport& report);
nlohmann::json spectrum_json(const SpectrumReport& report);

}  // namespace optformer
