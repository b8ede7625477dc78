// SPDX-License-Identifier: Apache-2.0
#include "optformer/sam.hpp"

#include <cmath>
#include <iostream>

namespace optformer {

SamMode sam_mode_from_string(const std::string& s) {
  if (s == "off") return SamMode::Off;
  if (s == "on") return SamMode::On;
  if (s == "sawd") return SamMode::Sawd;
  throw ConfigError("unknown sam mode '" + s + "' (valid: off, on, sawd)");
}

std::string to_string(SamMode m) {
  switch (m) {
    case SamMode::Off: return "off";
    case SamMode::On: return "on";
    case SamMode::Sawd: return "sawd";
  }
  return "?";
}

GradEval sam_wrap(const GradFn& grad_fn, ParamStore& params, double rho, bool* fell_back) {
  if (fell_back) *fell_back = false;
  if (rho < 0.0) throw ConfigError("sam_wrap: rho must be non-negative");
  GradEval base = grad_fn(params);
  if (rho == 0.0) return base;

  double sq = 0.0;
  for (const Tensor& g : base.grads)
    for (double v : g.data) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm == 0.0) {
    if (fell_back) *fell_back = true;
    std::cerr << "[sam] zero gradient: skipping perturbation, using plain gradient\n";
    return base;
  }

  // ascend to theta + rho * g/||g||, restore from a saved copy afterwards
  std::vector<Tensor> saved;
  saved.reserve(params.items().size());
  for (const auto& [name, t] : params.items()) saved.push_back(t);

  const double s = rho / norm;
  for (std::size_t i = 0; i < params.items().size(); ++i) {
    Tensor& p = params.items_mut()[i].second;
    const Tensor& g = base.grads[i];
    for (std::size_t j = 0; j < p.data.size(); ++j) p.data[j] += s * g.data[j];
  }
  GradEval perturbed = grad_fn(params);
  for (std::size_t i = 0; i < params.items().size(); ++i)
    params.items_mut()[i].second = saved[i];
  return perturbed;
}

bool sam_active(SamMode mode, const Schedule& schedule, long step) {
  switch (mode) {
    case SamMode::Off: return false;
    case SamMode::On: return true;
    case SamMode::Sawd:
      return schedule.kind == ScheduleKind::Wsd && step >= schedule.decay_start;
  }
  return false;
}

}  // namespace optformer
