// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "optformer/model.hpp"
#include "optformer/tensor.hpp"

namespace optformer {

enum class OptimizerKind { Muon, AdamW };

// The four parameter groups: 2-D projection matrices go to Muon; embedding
// tables, norm gains plus biases, and the raw per-layer scalar gates go to
// AdamW (scalars at a higher rate).
enum class ParamGroupKind { Matrix, Embedding, NormAndBias, Scalar };

ParamGroupKind classify_param(const std::string& name, const Tensor& t);

struct OptimConfig {
  double muon_lr = 0.02;
  double muon_beta = 0.95;     // Nesterov momentum
  int muon_ns_steps = 5;
  double adamw_lr = 3e-3;
  double scalar_lr_mult = 5.0;  // scalars train at this multiple of adamw_lr
  double emb_weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double grad_clip = 1.0;       // global-norm clip; <= 0 disables
};

struct AdamWState {
  Tensor m, v;
};

// One bias-corrected AdamW step with decoupled weight decay:
// x <- (1 - wd*lr) x - lr * mhat / (sqrt(vhat) + eps).
void adamw_step(Tensor& param, const Tensor& grad, AdamWState& state, long step_index,
                double lr, double weight_decay, double beta1, double beta2, double eps);

// One Muon step on a rank-2 tensor: Nesterov-blended momentum buffer,
// orthogonalized by the polar iteration, scaled by lr. Rejects non-rank-2
// tensors.
void muon_step(Tensor& weight, const Tensor& grad, Tensor& momentum, double lr, double beta,
               int ns_steps, bool nesterov = true);

// Scales all gradients in place so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor*>& grads, double max_norm);

// Optimizer for a whole ParamStore with the four-group routing above. One
// schedule multiplier applies to every group, so the LR ratios stay fixed.
class ModelOptimizer {
 public:
  ModelOptimizer(const ParamStore& params, OptimConfig cfg);

  // grads must be aligned with params.items() order.
  void step(ParamStore& params, const std::vector<Tensor>& grads, double lr_mult);

  long steps_taken() const { return step_; }
  const OptimConfig& config() const { return cfg_; }

  // serialization hooks: state tensors in deterministic order
  std::vector<std::pair<std::string, Tensor>> state_tensors() const;
  void load_state(const std::vector<std::pair<std::string, Tensor>>& state, long steps_taken);

  ParamGroupKind group_of(std::size_t param_index) const { return kinds_[param_index]; }

 private:
  OptimConfig cfg_;
  std::vector<ParamGroupKind> kinds_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, AdamWState> adamw_;
  std::unordered_map<std::string, Tensor> muon_momentum_;
  long step_ = 0;
};

}  // namespace optformer
