// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "optformer/nn.hpp"
#include "optformer/scalar.hpp"
#include "optformer/tape.hpp"
#include "optformer/variants.hpp"

namespace optformer {

// Ordered collection of named parameter tensors. Order is fixed by
// construction and drives serialization and flattening, so runs are
// reproducible.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items_mut() { return items_; }
  std::int64_t total_numel() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Fresh parameters for a config, drawn deterministically from cfg.seed.
// Names: emb.tok, emb.pos, aux_emb.{v,m}.{tok,pos}, ln_f.g and per layer
// layer<i>.{attn.wq|wk|wv|wo, mlp.w1|b1|w2|b2, ln1.g, ln2.g,
// ln_v.<a|m>.g, ln_u.<a|m>.g, scalar.<a|m>.<gate>}.
ParamStore init_params(const ModelConfig& cfg);

// Copy every tensor whose name exists in both stores (same-backbone
// comparisons across variants).
void copy_common(const ParamStore& src, ParamStore& dst);

// Scalar gate kind by gate name ("gamma" and "nu" are positive, the decay
// and lookahead gates live in (0,1)).
ScalarKind scalar_kind_of(const std::string& gate);

// ---- plain (off-tape) auxiliary streams ---------------------------------

struct AuxStreams {
  std::optional<Tensor> v;       // (T,d)
  std::optional<Tensor> m;       // (T,d); per-token (H,D) layout for SOAP
  std::optional<Tensor> s;       // (T,d), strictly positive
  std::vector<Tensor> r;         // per token (D,D), symmetric PSD
};

// Initial auxiliary streams for a token sequence: velocity/moment streams
// come from their dedicated learned token+position tables, the second
// moment starts at all-ones and each covariance at the identity.
AuxStreams init_aux_streams(const ModelConfig& cfg, const std::vector<int>& token_ids,
                            const ParamStore& params);

// ---- tape-bound model ----------------------------------------------------

// One tape leaf per parameter, in store order.
struct BoundModel {
  const ModelConfig* cfg = nullptr;
  Tape* tape = nullptr;
  std::vector<std::pair<std::string, Var>> vars;
  std::unordered_map<std::string, std::size_t> index;

  Var var_of(const std::string& name) const;
  bool has(const std::string& name) const { return index.count(name) > 0; }
};

BoundModel bind_params(Tape& tape, const ModelConfig& cfg, const ParamStore& params,
                       bool trainable);

// Tape-level auxiliary state carried through the layer stack.
struct AuxState {
  std::optional<Var> v, m, s;
  std::vector<Var> r;
};

// Materialized scalar gates and aux-LN gains for one substep.
struct SubstepParams {
  std::optional<Var> mu, beta, gamma, nu, beta1, beta2, beta_r, lambda;
  std::optional<Var> ln_v_gain, ln_u_gain;
};

SubstepParams bind_substep(const BoundModel& model, int layer, char substep /* 'a' or 'm' */);

// One optimizer substep: applies the variant's update rule to (x, aux)
// given an oracle that already includes its pre-norm. Throws
// ValidationError on an aux/variant mismatch and NumericError (naming the
// variant and substep) if any produced value is non-finite.
std::pair<Var, AuxState> apply_substep(BlockVariant variant, Var x, const AuxState& aux,
                                       const SubstepParams& sp,
                                       const std::function<Var(Var)>& oracle,
                                       const ModelConfig& cfg, const char* substep_name);

// Attention substep then MLP substep with the layer's (a) and (m) scalar
// copies.
std::pair<Var, AuxState> block_forward(const BoundModel& model, int layer, Var x,
                                       const AuxState& aux);

// Full forward: embeddings, aux-stream init, L blocks, final LayerNorm,
// weight-tied readout. Returns (T, vocab) logits.
Var model_forward(const BoundModel& model, const std::vector<int>& token_ids);

// Mean next-token cross-entropy of a (T+1)-token window.
Var sequence_loss(const BoundModel& model, const std::vector<int>& window);

// Aux-state construction on a tape (as constants when trainable==false is
// used in the binding; gradients flow into the tables otherwise).
AuxState init_aux_state(const BoundModel& model, const std::vector<int>& token_ids);

// ---- trajectory recording (for the Jacobian diagnostic) -----------------

struct LayerTrajectory {
  Tensor x;         // residual state entering the layer
  AuxStreams aux;   // auxiliary streams entering the layer
};

// Runs a forward pass and captures (x, aux) at the entry of every layer.
std::vector<LayerTrajectory> record_trajectory(const ModelConfig& cfg, const ParamStore& params,
                                               const std::vector<int>& token_ids);

}  // namespace optformer
