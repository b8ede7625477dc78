// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "optformer/error.hpp"

namespace optformer {

// The eleven residual-stream update templates. Every variant maps to
// exactly one substep rule; this enum is the single dispatch axis.
enum class BlockVariant {
  Vanilla,   // plain residual add
  HB,        // heavy-ball velocity stream
  Yurii,     // Nesterov lookahead velocity stream
  TMM,       // triple momentum: lookahead + learned reinjection gain
  Adam,      // per-coordinate first/second moments
  AdamW,     // Adam + decoupled residual decay
  RMSProp,   // second moment only
  Muon,      // orthogonalized momentum, per token per head
  Ortho,     // orthogonalized fresh oracle, no stream
  Shampoo,   // channel-side covariance preconditioner
  SOAP,      // first moment + channel-side covariance
};

const std::vector<BlockVariant>& all_variants();
std::string to_string(BlockVariant v);
BlockVariant variant_from_string(const std::string& name);
std::string valid_variant_names();

// Which auxiliary streams a variant propagates.
struct StreamSet {
  bool v = false;  // velocity (T,d)
  bool m = false;  // first moment (T,d); head-space layout for SOAP
  bool s = false;  // second moment (T,d), strictly positive
  bool r = false;  // per-token channel covariance (D,D), symmetric PSD
};
StreamSet streams_of(BlockVariant v);

// Which learned scalar gates a variant carries (one attention and one MLP
// copy of each).
struct ScalarSet {
  bool mu = false, beta = false, gamma = false, nu = false;
  bool beta1 = false, beta2 = false, beta_r = false, lambda = false;
};
ScalarSet scalars_of(BlockVariant v);

struct ModelConfig {
  int layers = 2;
  int heads = 4;
  int dim = 32;
  int context = 64;
  int vocab = 64;
  int mlp_mult = 4;
  BlockVariant variant = BlockVariant::Vanilla;
  std::uint64_t seed = 42;
  int ns_steps = 5;            // polar iteration steps (Muon/Ortho blocks)
  int inv_sqrt_steps = 10;     // Newton steps (Shampoo/SOAP blocks)
  double inv_sqrt_ridge = 1e-6;

  int head_dim() const { return dim / heads; }

  void validate() const {
    if (layers < 1) throw ConfigError("ModelConfig: layers must be >= 1");
    if (heads < 1 || dim % heads != 0)
      throw ConfigError("ModelConfig: dim must be divisible by heads");
    if (dim < 2) throw ConfigError("ModelConfig: dim must be >= 2");
    if (context < 1) throw ConfigError("ModelConfig: context must be >= 1");
    if (vocab < 2) throw ConfigError("ModelConfig: vocab must be >= 2");
    if (mlp_mult < 1) throw ConfigError("ModelConfig: mlp_mult must be >= 1");
  }
};

}  // namespace optformer
