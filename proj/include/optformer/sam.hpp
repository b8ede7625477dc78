// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "optformer/model.hpp"
#include "optformer/schedule.hpp"
#include "optformer/tensor.hpp"

namespace optformer {

struct GradEval {
  double loss = 0.0;
  std::vector<Tensor> grads;  // aligned with params.items()
};

using GradFn = std::function<GradEval(const ParamStore&)>;

enum class SamMode { Off, On, Sawd };

SamMode sam_mode_from_string(const std::string& s);
std::string to_string(SamMode m);

// Sharpness-aware gradient: evaluates grad_fn once at theta to get the
// ascent direction, once more at theta + rho * g/||g||, and restores the
// parameters exactly from a saved copy. Both evaluations must use the same
// minibatch (the caller's grad_fn closes over it). A zero gradient falls
// back to the plain gradient with a note on stderr.
GradEval sam_wrap(const GradFn& grad_fn, ParamStore& params, double rho,
                  bool* fell_back = nullptr);

// SAWD switches SAM on only during the decay phase of a wsd schedule.
bool sam_active(SamMode mode, const Schedule& schedule, long step);

}  // namespace optformer
