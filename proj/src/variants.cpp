// SPDX-License-Identifier: Apache-2.0
#include "optformer/variants.hpp"

#include <algorithm>

namespace optformer {

const std::vector<BlockVariant>& all_variants() {
  static const std::vector<BlockVariant> v = {
      BlockVariant::Vanilla, BlockVariant::HB,      BlockVariant::Yurii,
      BlockVariant::TMM,     BlockVariant::Adam,    BlockVariant::AdamW,
      BlockVariant::RMSProp, BlockVariant::Muon,    BlockVariant::Ortho,
      BlockVariant::Shampoo, BlockVariant::SOAP};
  return v;
}

std::string to_string(BlockVariant v) {
  switch (v) {
    case BlockVariant::Vanilla: return "vanilla";
    case BlockVariant::HB: return "hb";
    case BlockVariant::Yurii: return "yurii";
    case BlockVariant::TMM: return "tmm";
    case BlockVariant::Adam: return "adam";
    case BlockVariant::AdamW: return "adamw";
    case BlockVariant::RMSProp: return "rmsprop";
    case BlockVariant::Muon: return "muon";
    case BlockVariant::Ortho: return "ortho";
    case BlockVariant::Shampoo: return "shampoo";
    case BlockVariant::SOAP: return "soap";
  }
  return "?";
}

std::string valid_variant_names() {
  std::string s;
  for (BlockVariant v : all_variants()) {
    if (!s.empty()) s += ", ";
    s += to_string(v);
  }
  return s;
}

BlockVariant variant_from_string(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (BlockVariant v : all_variants())
    if (to_string(v) == lower) return v;
  throw ConfigError("unknown variant '" + name + "' (valid: " + valid_variant_names() + ")");
}

StreamSet streams_of(BlockVariant v) {
  StreamSet s;
  switch (v) {
    case BlockVariant::Vanilla:
    case BlockVariant::Ortho:
      break;
    case BlockVariant::HB:
    case BlockVariant::Yurii:
    case BlockVariant::TMM:
      s.v = true;
      break;
    case BlockVariant::Adam:
    case BlockVariant::AdamW:
      s.m = true;
      s.s = true;
      break;
    case BlockVariant::RMSProp:
      s.s = true;
      break;
    case BlockVariant::Muon:
      s.m = true;
      break;
    case BlockVariant::Shampoo:
      s.r = true;
      break;
    case BlockVariant::SOAP:
      s.m = true;
      s.r = true;
      break;
  }
  return s;
}

ScalarSet scalars_of(BlockVariant v) {
  ScalarSet s;
  switch (v) {
    case BlockVariant::Vanilla:
      break;
    case BlockVariant::HB:
      s.beta = s.gamma = true;
      break;
    case BlockVariant::Yurii:
      s.mu = s.beta = s.gamma = true;
      break;
    case BlockVariant::TMM:
      s.mu = s.beta = s.gamma = s.nu = true;
      break;
    case BlockVariant::Adam:
      s.beta1 = s.beta2 = s.gamma = true;
      break;
    case BlockVariant::AdamW:
      s.beta1 = s.beta2 = s.gamma = s.lambda = true;
      break;
    case BlockVariant::RMSProp:
      s.beta2 = s.gamma = true;
      break;
    case BlockVariant::Muon:
      s.beta = s.gamma = true;
      break;
    case BlockVariant::Ortho:
      s.gamma = true;
      break;
    case BlockVariant::Shampoo:
      s.beta_r = s.gamma = true;
      break;
    case BlockVariant::SOAP:
      s.beta1 = s.beta_r = s.gamma = true;
      break;
  }
  return s;
}

}  // namespace optformer
