// SPDX-License-Identifier: Apache-2.0
#include "optformer/model.hpp"

#include <cmath>

#include "optformer/numerics.hpp"
#include "optformer/rng.hpp"

namespace optformer {

// ---- ParamStore ----------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (has(name)) throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  return items_[it->second].second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  return items_[it->second].second;
}

std::int64_t ParamStore::total_numel() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

// ---- init -----------------------------------------------------------------

ScalarKind scalar_kind_of(const std::string& gate) {
  return (gate == "gamma" || gate == "nu") ? ScalarKind::Positive : ScalarKind::UnitInterval;
}

namespace {

double default_raw(const std::string& gate) {
  // Decays start near 0.9, the lookahead near 0.5, gains near 1, and the
  // decoupled decay near zero so every variant starts in a stable regime.
  if (gate == "mu") return 0.0;
  if (gate == "lambda") return -5.0;
  if (gate == "gamma" || gate == "nu") return softplus_inverse(1.0);
  return logit(0.9);  // beta, beta1, beta2, betaR
}

std::vector<std::string> gate_names(BlockVariant v) {
  const ScalarSet s = scalars_of(v);
  std::vector<std::string> out;
  if (s.mu) out.push_back("mu");
  if (s.beta) out.push_back("beta");
  if (s.gamma) out.push_back("gamma");
  if (s.nu) out.push_back("nu");
  if (s.beta1) out.push_back("beta1");
  if (s.beta2) out.push_back("beta2");
  if (s.beta_r) out.push_back("betaR");
  if (s.lambda) out.push_back("lambda");
  return out;
}

bool uses_ln_v(BlockVariant v) {
  return v == BlockVariant::HB || v == BlockVariant::Yurii || v == BlockVariant::TMM;
}

bool uses_ln_u(BlockVariant v) {
  switch (v) {
    case BlockVariant::Adam:
    case BlockVariant::AdamW:
    case BlockVariant::RMSProp:
    case BlockVariant::Muon:
    case BlockVariant::Ortho:
    case BlockVariant::Shampoo:
    case BlockVariant::SOAP:
      return true;
    default:
      return false;
  }
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamStore store;
  Rng rng(cfg.seed);
  const double std0 = 0.02;
  const int d = cfg.dim, h = cfg.dim * cfg.mlp_mult;
  const StreamSet streams = streams_of(cfg.variant);

  store.add("emb.tok", rng.normal_tensor({cfg.vocab, d}, std0));
  store.add("emb.pos", rng.normal_tensor({cfg.context, d}, std0));
  if (streams.v) {
    store.add("aux_emb.v.tok", rng.normal_tensor({cfg.vocab, d}, std0));
    store.add("aux_emb.v.pos", rng.normal_tensor({cfg.context, d}, std0));
  }
  if (streams.m) {
    store.add("aux_emb.m.tok", rng.normal_tensor({cfg.vocab, d}, std0));
    store.add("aux_emb.m.pos", rng.normal_tensor({cfg.context, d}, std0));
  }

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    store.add(p + "attn.wq", rng.normal_tensor({d, d}, std0));
    store.add(p + "attn.wk", rng.normal_tensor({d, d}, std0));
    store.add(p + "attn.wv", rng.normal_tensor({d, d}, std0));
    store.add(p + "attn.wo", rng.normal_tensor({d, d}, std0));
    store.add(p + "mlp.w1", rng.normal_tensor({d, h}, std0));
    store.add(p + "mlp.b1", Tensor::zeros({h}));
    store.add(p + "mlp.w2", rng.normal_tensor({h, d}, std0));
    store.add(p + "mlp.b2", Tensor::zeros({d}));
    store.add(p + "ln1.g", Tensor::ones({d}));
    store.add(p + "ln2.g", Tensor::ones({d}));
    if (uses_ln_v(cfg.variant)) {
      store.add(p + "ln_v.a.g", Tensor::ones({d}));
      store.add(p + "ln_v.m.g", Tensor::ones({d}));
    }
    if (uses_ln_u(cfg.variant)) {
      store.add(p + "ln_u.a.g", Tensor::ones({d}));
      store.add(p + "ln_u.m.g", Tensor::ones({d}));
    }
    for (const char* sub : {"a", "m"})
      for (const std::string& gate : gate_names(cfg.variant))
        store.add(p + "scalar." + sub + "." + gate, Tensor::scalar(default_raw(gate)));
  }
  store.add("ln_f.g", Tensor::ones({d}));
  return store;
}

void copy_common(const ParamStore& src, ParamStore& dst) {
  for (auto& [name, t] : dst.items_mut()) {
    if (!src.has(name)) continue;
    const Tensor& s = src.get(name);
    check_same_shape(s, t, "copy_common");
    t = s;
  }
}

// ---- aux streams -----------------------------------------------------------

namespace {

void check_ids(const ModelConfig& cfg, const std::vector<int>& ids) {
  if (ids.empty()) throw ConfigError("empty token sequence");
  if (static_cast<int>(ids.size()) > cfg.context)
    throw ConfigError("sequence length " + std::to_string(ids.size()) + " exceeds context " +
                      std::to_string(cfg.context));
  for (int id : ids)
    if (id < 0 || id >= cfg.vocab) throw ConfigError("token id out of range");
}

Tensor table_lookup(const Tensor& tok, const Tensor& pos, const std::vector<int>& ids) {
  const int T = static_cast<int>(ids.size()), d = tok.dim(1);
  Tensor out = Tensor::zeros({T, d});
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < d; ++j)
      out.at(t, j) = tok.at(ids[static_cast<std::size_t>(t)], j) + pos.at(t, j);
  return out;
}

}  // namespace

AuxStreams init_aux_streams(const ModelConfig& cfg, const std::vector<int>& token_ids,
                            const ParamStore& params) {
  check_ids(cfg, token_ids);
  const StreamSet streams = streams_of(cfg.variant);
  const int T = static_cast<int>(token_ids.size());
  AuxStreams aux;
  if (streams.v)
    aux.v = table_lookup(params.get("aux_emb.v.tok"), params.get("aux_emb.v.pos"), token_ids);
  if (streams.m)
    aux.m = table_lookup(params.get("aux_emb.m.tok"), params.get("aux_emb.m.pos"), token_ids);
  if (streams.s) aux.s = Tensor::ones({T, cfg.dim});
  if (streams.r) aux.r.assign(static_cast<std::size_t>(T), Tensor::identity(cfg.head_dim()));
  return aux;
}

// ---- binding ---------------------------------------------------------------

Var BoundModel::var_of(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end()) throw ConfigError("BoundModel: unknown parameter '" + name + "'");
  return vars[it->second].second;
}

BoundModel bind_params(Tape& tape, const ModelConfig& cfg, const ParamStore& params,
                       bool trainable) {
  BoundModel m;
  m.cfg = &cfg;
  m.tape = &tape;
  m.vars.reserve(params.items().size());
  for (const auto& [name, t] : params.items()) {
    Var v = trainable ? tape.input(t) : tape.constant(t);
    m.index[name] = m.vars.size();
    m.vars.emplace_back(name, v);
  }
  return m;
}

SubstepParams bind_substep(const BoundModel& model, int layer, char substep) {
  const std::string p = "layer" + std::to_string(layer) + ".";
  const std::string s(1, substep);
  const BlockVariant variant = model.cfg->variant;
  SubstepParams sp;
  auto gate = [&](const char* g) {
    return materialize(model.var_of(p + "scalar." + s + "." + g), scalar_kind_of(g));
  };
  const ScalarSet set = scalars_of(variant);
  if (set.mu) sp.mu = gate("mu");
  if (set.beta) sp.beta = gate("beta");
  if (set.gamma) sp.gamma = gate("gamma");
  if (set.nu) sp.nu = gate("nu");
  if (set.beta1) sp.beta1 = gate("beta1");
  if (set.beta2) sp.beta2 = gate("beta2");
  if (set.beta_r) sp.beta_r = gate("betaR");
  if (set.lambda) sp.lambda = gate("lambda");
  if (uses_ln_v(variant)) sp.ln_v_gain = model.var_of(p + "ln_v." + s + ".g");
  if (uses_ln_u(variant)) sp.ln_u_gain = model.var_of(p + "ln_u." + s + ".g");
  return sp;
}

// ---- substep dispatch ------------------------------------------------------

namespace {

void require_stream(bool present, const char* stream, BlockVariant v) {
  if (!present)
    throw ValidationError("apply_substep: variant " + to_string(v) + " requires aux stream '" +
                          stream + "'");
}

void require_absent(bool present, const char* stream, BlockVariant v) {
  if (present)
    throw ValidationError("apply_substep: variant " + to_string(v) +
                          " does not propagate aux stream '" + stream + "'");
}

void check_aux_contract(BlockVariant v, const AuxState& aux) {
  const StreamSet s = streams_of(v);
  (s.v ? require_stream : require_absent)(aux.v.has_value(), "v", v);
  (s.m ? require_stream : require_absent)(aux.m.has_value(), "m", v);
  (s.s ? require_stream : require_absent)(aux.s.has_value(), "s", v);
  (s.r ? require_stream : require_absent)(!aux.r.empty(), "r", v);
}

Var adam_direction(Var m, Var s) {
  return div(m, add_const(sqrt_elem(s), kAdamDenomEps));
}

// Per-token, per-head orthogonal polar factor of a (T,d) stream.
Var per_token_polar(Var stream, const ModelConfig& cfg) {
  const int T = stream.tape->val(stream).dim(0);
  const int H = cfg.heads, D = cfg.head_dim();
  std::vector<Var> rows;
  rows.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    Var mt = reshape(slice_rows(stream, t, t + 1), {H, D});
    rows.push_back(reshape(newton_schulz_polar(mt, cfg.ns_steps), {1, cfg.dim}));
  }
  return concat_rows(rows);
}

// Per-token channel-side preconditioning: updates each token's covariance
// with the fresh oracle gram and right-multiplies the source stream by the
// covariance inverse square root. Returns the (T,d) update and new R.
std::pair<Var, std::vector<Var>> channel_precondition(Var source, Var oracle_out,
                                                      const std::vector<Var>& r, Var beta_r,
                                                      const ModelConfig& cfg) {
  const int T = source.tape->val(source).dim(0);
  const int H = cfg.heads, D = cfg.head_dim();
  std::vector<Var> rows, r_new;
  rows.reserve(static_cast<std::size_t>(T));
  r_new.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    Var gt = reshape(slice_rows(oracle_out, t, t + 1), {H, D});
    Var gram = matmul(transpose(gt), gt);  // (D,D)
    Var rt = ema(r[static_cast<std::size_t>(t)], gram, beta_r, /*convex=*/true);
    Var rinv = inv_sqrt_newton(rt, cfg.inv_sqrt_steps, cfg.inv_sqrt_ridge);
    Var st = reshape(slice_rows(source, t, t + 1), {H, D});
    rows.push_back(reshape(matmul(st, rinv), {1, cfg.dim}));
    r_new.push_back(rt);
  }
  return {concat_rows(rows), std::move(r_new)};
}

}  // namespace

std::pair<Var, AuxState> apply_substep(BlockVariant variant, Var x, const AuxState& aux,
                                       const SubstepParams& sp,
                                       const std::function<Var(Var)>& oracle,
                                       const ModelConfig& cfg, const char* substep_name) {
  check_aux_contract(variant, aux);
  Tape& tape = *x.tape;
  AuxState out = aux;
  Var x_next = x;

  switch (variant) {
    case BlockVariant::Vanilla: {
      x_next = add(x, oracle(x));
      break;
    }
    case BlockVariant::HB: {
      Var g = oracle(x);
      Var v2 = layernorm(ema(*aux.v, g, *sp.beta, /*convex=*/false, sp.gamma), sp.ln_v_gain,
                         std::nullopt);
      x_next = add(x, v2);
      out.v = v2;
      break;
    }
    case BlockVariant::Yurii: {
      Var lookahead = add(x, mul(*sp.mu, *aux.v));
      Var g = oracle(lookahead);
      Var v2 = layernorm(ema(*aux.v, g, *sp.beta, /*convex=*/false, sp.gamma), sp.ln_v_gain,
                         std::nullopt);
      x_next = add(x, v2);
      out.v = v2;
      break;
    }
    case BlockVariant::TMM: {
      Var lookahead = add(x, mul(*sp.mu, *aux.v));
      Var g = oracle(lookahead);
      Var v2 = layernorm(ema(*aux.v, g, *sp.beta, /*convex=*/false, sp.gamma), sp.ln_v_gain,
                         std::nullopt);
      x_next = add(x, mul(*sp.nu, v2));
      out.v = v2;
      break;
    }
    case BlockVariant::Adam: {
      Var g = oracle(x);
      Var m2 = ema(*aux.m, g, *sp.beta1, /*convex=*/true);
      Var s2 = ema(*aux.s, mul(g, g), *sp.beta2, /*convex=*/true);
      Var upd = layernorm(adam_direction(m2, s2), sp.ln_u_gain, std::nullopt);
      x_next = add(x, mul(*sp.gamma, upd));
      out.m = m2;
      out.s = s2;
      break;
    }
    case BlockVariant::AdamW: {
      Var g = oracle(x);
      Var m2 = ema(*aux.m, g, *sp.beta1, /*convex=*/true);
      Var s2 = ema(*aux.s, mul(g, g), *sp.beta2, /*convex=*/true);
      Var upd = layernorm(adam_direction(m2, s2), sp.ln_u_gain, std::nullopt);
      Var shrunk = mul(add_const(neg(*sp.lambda), 1.0), x);  // (1-lambda) x
      x_next = add(shrunk, mul(*sp.gamma, upd));
      out.m = m2;
      out.s = s2;
      break;
    }
    case BlockVariant::RMSProp: {
      Var g = oracle(x);
      Var s2 = ema(*aux.s, mul(g, g), *sp.beta2, /*convex=*/true);
      Var upd = layernorm(adam_direction(g, s2), sp.ln_u_gain, std::nullopt);
      x_next = add(x, mul(*sp.gamma, upd));
      out.s = s2;
      break;
    }
    case BlockVariant::Muon: {
      Var g = oracle(x);
      Var m2 = ema(*aux.m, g, *sp.beta, /*convex=*/true);
      Var upd = layernorm(per_token_polar(m2, cfg), sp.ln_u_gain, std::nullopt);
      x_next = add(x, mul(*sp.gamma, upd));
      out.m = m2;
      break;
    }
    case BlockVariant::Ortho: {
      Var g = oracle(x);
      Var upd = layernorm(per_token_polar(g, cfg), sp.ln_u_gain, std::nullopt);
      x_next = add(x, mul(*sp.gamma, upd));
      break;
    }
    case BlockVariant::Shampoo: {
      Var g = oracle(x);
      auto [pre, r2] = channel_precondition(g, g, aux.r, *sp.beta_r, cfg);
      Var upd = layernorm(pre, sp.ln_u_gain, std::nullopt);
      x_next = add(x, mul(*sp.gamma, upd));
      out.r = std::move(r2);
      break;
    }
    case BlockVariant::SOAP: {
      Var g = oracle(x);
      Var m2 = ema(*aux.m, g, *sp.beta1, /*convex=*/true);
      auto [pre, r2] = channel_precondition(m2, g, aux.r, *sp.beta_r, cfg);
      Var upd = layernorm(pre, sp.ln_u_gain, std::nullopt);
      x_next = add(x, mul(*sp.gamma, upd));
      out.m = m2;
      out.r = std::move(r2);
      break;
    }
  }

  if (!tape.val(x_next).all_finite())
    throw NumericError("apply_substep: non-finite state (variant=" + to_string(variant) +
                       ", substep=" + substep_name + ")");
  return {x_next, std::move(out)};
}

std::pair<Var, AuxState> block_forward(const BoundModel& model, int layer, Var x,
                                       const AuxState& aux) {
  const ModelConfig& cfg = *model.cfg;
  const std::string p = "layer" + std::to_string(layer) + ".";
  AttentionWeights aw{model.var_of(p + "attn.wq"), model.var_of(p + "attn.wk"),
                      model.var_of(p + "attn.wv"), model.var_of(p + "attn.wo")};
  MlpWeights mw{model.var_of(p + "mlp.w1"), model.var_of(p + "mlp.b1"),
                model.var_of(p + "mlp.w2"), model.var_of(p + "mlp.b2")};
  Var ln1 = model.var_of(p + "ln1.g");
  Var ln2 = model.var_of(p + "ln2.g");

  auto attn_oracle = [&](Var xin) {
    return attention_oracle(layernorm(xin, ln1, std::nullopt), aw, cfg.heads);
  };
  auto mlp_ora = [&](Var xin) { return mlp_oracle(layernorm(xin, ln2, std::nullopt), mw); };

  SubstepParams spa = bind_substep(model, layer, 'a');
  SubstepParams spm = bind_substep(model, layer, 'm');
  auto [x_half, aux_half] = apply_substep(cfg.variant, x, aux, spa, attn_oracle, cfg, "attention");
  return apply_substep(cfg.variant, x_half, aux_half, spm, mlp_ora, cfg, "mlp");
}

AuxState init_aux_state(const BoundModel& model, const std::vector<int>& token_ids) {
  const ModelConfig& cfg = *model.cfg;
  check_ids(cfg, token_ids);
  const StreamSet streams = streams_of(cfg.variant);
  const int T = static_cast<int>(token_ids.size());
  Tape& tape = *model.tape;
  AuxState aux;
  if (streams.v)
    aux.v = add(gather_rows(model.var_of("aux_emb.v.tok"), token_ids),
                slice_rows(model.var_of("aux_emb.v.pos"), 0, T));
  if (streams.m)
    aux.m = add(gather_rows(model.var_of("aux_emb.m.tok"), token_ids),
                slice_rows(model.var_of("aux_emb.m.pos"), 0, T));
  if (streams.s) aux.s = tape.constant(Tensor::ones({T, cfg.dim}));
  if (streams.r) {
    aux.r.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) aux.r.push_back(tape.constant(Tensor::identity(cfg.head_dim())));
  }
  return aux;
}

Var model_forward(const BoundModel& model, const std::vector<int>& token_ids) {
  const ModelConfig& cfg = *model.cfg;
  check_ids(cfg, token_ids);
  const int T = static_cast<int>(token_ids.size());
  Var tok = model.var_of("emb.tok");
  Var x = add(gather_rows(tok, token_ids), slice_rows(model.var_of("emb.pos"), 0, T));
  AuxState aux = init_aux_state(model, token_ids);
  for (int l = 0; l < cfg.layers; ++l) {
    auto [x2, aux2] = block_forward(model, l, x, aux);
    x = x2;
    aux = std::move(aux2);
  }
  x = layernorm(x, model.var_of("ln_f.g"), std::nullopt);
  return matmul(x, transpose(tok));  // weight-tied readout
}

Var sequence_loss(const BoundModel& model, const std::vector<int>& window) {
  if (window.size() < 2) throw ConfigError("sequence_loss: window needs at least 2 tokens");
  std::vector<int> inputs(window.begin(), window.end() - 1);
  std::vector<int> targets(window.begin() + 1, window.end());
  return cross_entropy_mean(model_forward(model, inputs), targets);
}

std::vector<LayerTrajectory> record_trajectory(const ModelConfig& cfg, const ParamStore& params,
                                               const std::vector<int>& token_ids) {
  Tape tape;
  BoundModel model = bind_params(tape, cfg, params, /*trainable=*/false);
  check_ids(cfg, token_ids);
  const int T = static_cast<int>(token_ids.size());
  Var x = add(gather_rows(model.var_of("emb.tok"), token_ids),
              slice_rows(model.var_of("emb.pos"), 0, T));
  AuxState aux = init_aux_state(model, token_ids);

  auto snapshot = [&](Var xv, const AuxState& a) {
    LayerTrajectory lt;
    lt.x = tape.val(xv);
    if (a.v) lt.aux.v = tape.val(*a.v);
    if (a.m) lt.aux.m = tape.val(*a.m);
    if (a.s) lt.aux.s = tape.val(*a.s);
    for (Var rv : a.r) lt.aux.r.push_back(tape.val(rv));
    return lt;
  };

  std::vector<LayerTrajectory> traj;
  traj.reserve(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    traj.push_back(snapshot(x, aux));
    auto [x2, aux2] = block_forward(model, l, x, aux);
    x = x2;
    aux = std::move(aux2);
  }
  return traj;
}

}  // namespace optformer
