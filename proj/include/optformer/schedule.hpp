// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "optformer/error.hpp"

namespace optformer {

enum class ScheduleKind { WarmupCosine, Wsd };

// Learning-rate multiplier schedule. warmup-cosine: linear warmup over W
// steps, then cosine decay to the floor. wsd: linear warmup, constant 1
// through the stable phase [W, D), then linear decay to the floor.
struct Schedule {
  ScheduleKind kind = ScheduleKind::WarmupCosine;
  long total = 1000;       // T
  long warmup = 100;       // W
  long decay_start = 800;  // D, wsd only
  double min_mult = 0.1;   // floor as a fraction of peak

  void validate() const {
    if (total < 1) throw ConfigError("Schedule: total steps must be >= 1");
    if (warmup < 0 || warmup > total) throw ConfigError("Schedule: need 0 <= warmup <= total");
    if (kind == ScheduleKind::Wsd && (decay_start < warmup || decay_start > total))
      throw ConfigError("Schedule: need warmup <= decay_start <= total");
    if (!(min_mult > 0.0 && min_mult <= 1.0))
      throw ConfigError("Schedule: floor must be in (0, 1]");
  }
};

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

// Multiplier in [0, 1] at step t; throws on t outside [0, total].
double schedule_value(const Schedule& s, long t);

}  // namespace optformer
