// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>
#include <limits>
#include <string>
#include <vector>

#include "optformer/model.hpp"

namespace optformer {

// Checkpoint = JSON manifest (<prefix>.json: names, shapes, dtype, byte
// offsets, run metadata) + raw little-endian float64 payload
// (<prefix>.bin). Round-trips bit-exactly.
struct Checkpoint {
  nlohmann::json config;  // resolved run config that produced this model
  ParamStore params;
  std::vector<std::pair<std::string, Tensor>> opt_state;
  long opt_steps = 0;
  long step = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path_prefix);
Checkpoint load_checkpoint(const std::string& path_prefix);

}  // namespace optformer
