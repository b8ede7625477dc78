// SPDX-License-Identifier: Apache-2.0
#include "optformer/schedule.hpp"

#include <cmath>

namespace optformer {

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "warmup_cosine" || s == "cosine") return ScheduleKind::WarmupCosine;
  if (s == "wsd") return ScheduleKind::Wsd;
  throw ConfigError("unknown schedule kind '" + s + "' (valid: warmup_cosine, wsd)");
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::WarmupCosine ? "warmup_cosine" : "wsd";
}

double schedule_value(const Schedule& s, long t) {
  s.validate();
  if (t < 0 || t > s.total)
    throw ConfigError("schedule_value: step " + std::to_string(t) + " outside [0, " +
                      std::to_string(s.total) + "]");
  if (t < s.warmup) return static_cast<double>(t) / static_cast<double>(s.warmup);
  if (s.kind == ScheduleKind::Wsd) {
    if (t < s.decay_start) return 1.0;
    const double frac = s.total > s.decay_start
                            ? static_cast<double>(t - s.decay_start) /
                                  static_cast<double>(s.total - s.decay_start)
                            : 1.0;
    return 1.0 - (1.0 - s.min_mult) * frac;
  }
  // cosine decay from 1 at W to the floor at T
  if (s.total == s.warmup) return 1.0;
  const double frac =
      static_cast<double>(t - s.warmup) / static_cast<double>(s.total - s.warmup);
  return s.min_mult + (1.0 - s.min_mult) * 0.5 * (1.0 + std::cos(3.141592653589793 * frac));
}

}  // namespace optformer
