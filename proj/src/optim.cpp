// SPDX-License-Identifier: Apache-2.0
#include "optformer/optim.hpp"

#include <cmath>

#include "optformer/numerics.hpp"

namespace optformer {

ParamGroupKind classify_param(const std::string& name, const Tensor& t) {
  if (name.rfind("emb.", 0) == 0 || name.rfind("aux_emb.", 0) == 0)
    return ParamGroupKind::Embedding;
  if (name.find("scalar.") != std::string::npos) return ParamGroupKind::Scalar;
  if (t.rank() == 2) return ParamGroupKind::Matrix;
  return ParamGroupKind::NormAndBias;  // norm gains and MLP biases
}

void adamw_step(Tensor& param, const Tensor& grad, AdamWState& state, long step_index,
                double lr, double weight_decay, double beta1, double beta2, double eps) {
  check_same_shape(param, grad, "adamw_step");
  if (state.m.numel() == 0) {
    state.m = Tensor::zeros(param.shape);
    state.v = Tensor::zeros(param.shape);
  }
  check_same_shape(param, state.m, "adamw_step(state)");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_index));
  const double shrink = 1.0 - weight_decay * lr;
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    const double g = grad.data[i];
    state.m.data[i] = beta1 * state.m.data[i] + (1.0 - beta1) * g;
    state.v.data[i] = beta2 * state.v.data[i] + (1.0 - beta2) * g * g;
    const double mhat = state.m.data[i] / bc1;
    const double vhat = state.v.data[i] / bc2;
    param.data[i] = shrink * param.data[i] - lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void muon_step(Tensor& weight, const Tensor& grad, Tensor& momentum, double lr, double beta,
               int ns_steps, bool nesterov) {
  if (weight.rank() != 2)
    throw ConfigError("muon_step: only rank-2 tensors are routed to Muon, got " +
                      weight.shape_str());
  check_same_shape(weight, grad, "muon_step");
  if (momentum.numel() == 0) momentum = Tensor::zeros(weight.shape);
  check_same_shape(weight, momentum, "muon_step(momentum)");

  for (std::size_t i = 0; i < momentum.data.size(); ++i)
    momentum.data[i] = beta * momentum.data[i] + (1.0 - beta) * grad.data[i];

  Tensor blend = momentum;
  if (nesterov)
    for (std::size_t i = 0; i < blend.data.size(); ++i)
      blend.data[i] = beta * momentum.data[i] + (1.0 - beta) * grad.data[i];

  bool zero = false;
  Tensor update = newton_schulz_polar(blend, ns_steps, &zero);
  if (zero) return;
  for (std::size_t i = 0; i < weight.data.size(); ++i) weight.data[i] -= lr * update.data[i];
}

double clip_global_norm(std::vector<Tensor*>& grads, double max_norm) {
  double sq = 0.0;
  for (Tensor* g : grads)
    for (double v : g->data) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor* g : grads)
      for (double& v : g->data) v *= s;
  }
  return norm;
}

ModelOptimizer::ModelOptimizer(const ParamStore& params, OptimConfig cfg) : cfg_(std::move(cfg)) {
  kinds_.reserve(params.items().size());
  names_.reserve(params.items().size());
  for (const auto& [name, t] : params.items()) {
    kinds_.push_back(classify_param(name, t));
    names_.push_back(name);
  }
}

void ModelOptimizer::step(ParamStore& params, const std::vector<Tensor>& grads, double lr_mult) {
  if (grads.size() != params.items().size())
    throw ConfigError("ModelOptimizer::step: gradient count mismatch");
  ++step_;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor& p = params.items_mut()[i].second;
    const Tensor& g = grads[i];
    switch (kinds_[i]) {
      case ParamGroupKind::Matrix:
        muon_step(p, g, muon_momentum_[names_[i]], cfg_.muon_lr * lr_mult, cfg_.muon_beta,
                  cfg_.muon_ns_steps);
        break;
      case ParamGroupKind::Embedding:
        adamw_step(p, g, adamw_[names_[i]], step_, cfg_.adamw_lr * lr_mult,
                   cfg_.emb_weight_decay, cfg_.beta1, cfg_.beta2, cfg_.eps);
        break;
      case ParamGroupKind::NormAndBias:
        adamw_step(p, g, adamw_[names_[i]], step_, cfg_.adamw_lr * lr_mult, 0.0, cfg_.beta1,
                   cfg_.beta2, cfg_.eps);
        break;
      case ParamGroupKind::Scalar:
        adamw_step(p, g, adamw_[names_[i]], step_, cfg_.adamw_lr * cfg_.scalar_lr_mult * lr_mult,
                   0.0, cfg_.beta1, cfg_.beta2, cfg_.eps);
        break;
    }
  }
}

std::vector<std::pair<std::string, Tensor>> ModelOptimizer::state_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (kinds_[i] == ParamGroupKind::Matrix) {
      auto it = muon_momentum_.find(names_[i]);
      if (it != muon_momentum_.end() && it->second.numel() > 0)
        out.emplace_back("opt.muon." + names_[i], it->second);
    } else {
      auto it = adamw_.find(names_[i]);
      if (it != adamw_.end() && it->second.m.numel() > 0) {
        out.emplace_back("opt.adamw.m." + names_[i], it->second.m);
        out.emplace_back("opt.adamw.v." + names_[i], it->second.v);
      }
    }
  }
  return out;
}

void ModelOptimizer::load_state(const std::vector<std::pair<std::string, Tensor>>& state,
                                long steps_taken) {
  step_ = steps_taken;
  adamw_.clear();
  muon_momentum_.clear();
  for (const auto& [key, t] : state) {
    if (key.rfind("opt.muon.", 0) == 0) {
      muon_momentum_[key.substr(9)] = t;
    } else if (key.rfind("opt.adamw.m.", 0) == 0) {
      adamw_[key.substr(12)].m = t;
    } else if (key.rfind("opt.adamw.v.", 0) == 0) {
      adamw_[key.substr(12)].v = t;
    } else {
      throw ConfigError("ModelOptimizer::load_state: unknown state key '" + key + "'");
    }
  }
}

}  // namespace optformer
