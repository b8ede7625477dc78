// SPDX-License-Identifier: Apache-2.0
#include "optformer/runconfig.hpp"

#include <fstream>
#include <set>

namespace optformer {

namespace {

// Strict object reader: every key must be consumed, leftovers are errors.
class Strict {
 public:
  Strict(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it != j_.end()) {
      try {
        out = it->get<T>();
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where_ + "." + key + ": " + e.what());
      }
    }
    seen_.insert(key);
  }

  bool sub(const char* key, nlohmann::json& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return false;
    out = *it;
    return true;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  Strict s(j, "model");
  s.get("layers", m.layers);
  s.get("heads", m.heads);
  s.get("dim", m.dim);
  s.get("context", m.context);
  s.get("vocab", m.vocab);
  s.get("mlp_mult", m.mlp_mult);
  std::string variant = to_string(m.variant);
  s.get("variant", variant);
  m.variant = variant_from_string(variant);
  s.get("ns_steps", m.ns_steps);
  s.get("inv_sqrt_steps", m.inv_sqrt_steps);
  s.get("inv_sqrt_ridge", m.inv_sqrt_ridge);
  s.finish();
  m.validate();
  return m;
}

static nlohmann::json model_config_to_json(const ModelConfig& m) {
  return {{"layers", m.layers},     {"heads", m.heads},
          {"dim", m.dim},           {"context", m.context},
          {"vocab", m.vocab},       {"mlp_mult", m.mlp_mult},
          {"variant", to_string(m.variant)}, {"ns_steps", m.ns_steps},
          {"inv_sqrt_steps", m.inv_sqrt_steps}, {"inv_sqrt_ridge", m.inv_sqrt_ridge}};
}

CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
  CorpusSpec c;
  Strict s(j, "corpus");
  s.get("name", c.name);
  s.get("vocab", c.vocab);
  s.get("seed", c.seed);
  s.get("train_tokens", c.train_tokens);
  s.get("val_tokens", c.val_tokens);
  s.finish();
  c.validate();
  return c;
}

static nlohmann::json corpus_spec_to_json(const CorpusSpec& c) {
  return {{"name", c.name},
          {"vocab", c.vocab},
          {"seed", c.seed},
          {"train_tokens", c.train_tokens},
          {"val_tokens", c.val_tokens}};
}

static OptimConfig optim_config_from_json(const nlohmann::json& j) {
  OptimConfig o;
  Strict s(j, "optim");
  s.get("muon_lr", o.muon_lr);
  s.get("muon_beta", o.muon_beta);
  s.get("muon_ns_steps", o.muon_ns_steps);
  s.get("adamw_lr", o.adamw_lr);
  s.get("scalar_lr_mult", o.scalar_lr_mult);
  s.get("emb_weight_decay", o.emb_weight_decay);
  s.get("beta1", o.beta1);
  s.get("beta2", o.beta2);
  s.get("eps", o.eps);
  s.get("grad_clip", o.grad_clip);
  s.finish();
  return o;
}

static nlohmann::json optim_config_to_json(const OptimConfig& o) {
  return {{"muon_lr", o.muon_lr},       {"muon_beta", o.muon_beta},
          {"muon_ns_steps", o.muon_ns_steps}, {"adamw_lr", o.adamw_lr},
          {"scalar_lr_mult", o.scalar_lr_mult}, {"emb_weight_decay", o.emb_weight_decay},
          {"beta1", o.beta1},           {"beta2", o.beta2},
          {"eps", o.eps},               {"grad_clip", o.grad_clip}};
}

static Schedule schedule_from_json(const nlohmann::json& j, long default_total) {
  Schedule sc;
  sc.total = default_total;
  sc.warmup = default_total / 10;
  sc.decay_start = (default_total * 4) / 5;
  Strict s(j, "schedule");
  std::string kind = to_string(sc.kind);
  s.get("kind", kind);
  sc.kind = schedule_kind_from_string(kind);
  s.get("total", sc.total);
  s.get("warmup", sc.warmup);
  s.get("decay_start", sc.decay_start);
  s.get("min_mult", sc.min_mult);
  s.finish();
  sc.validate();
  return sc;
}

static nlohmann::json schedule_to_json(const Schedule& sc) {
  return {{"kind", to_string(sc.kind)},
          {"total", sc.total},
          {"warmup", sc.warmup},
          {"decay_start", sc.decay_start},
          {"min_mult", sc.min_mult}};
}

static TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig t;
  Strict s(j, "train");
  s.get("steps", t.steps);
  s.get("batch", t.batch);
  s.get("eval_every", t.eval_every);
  s.get("eval_batches", t.eval_batches);
  s.get("grad_clip", t.grad_clip);
  std::string sam = to_string(t.sam);
  s.get("sam", sam);
  t.sam = sam_mode_from_string(sam);
  s.get("sam_rho", t.sam_rho);
  s.finish();
  if (t.steps < 0 || t.batch < 1 || t.eval_every < 1 || t.eval_batches < 1)
    throw ConfigError("train: bad steps/batch/eval settings");
  return t;
}

static nlohmann::json train_config_to_json(const TrainConfig& t) {
  return {{"steps", t.steps},
          {"batch", t.batch},
          {"eval_every", t.eval_every},
          {"eval_batches", t.eval_batches},
          {"grad_clip", t.grad_clip},
          {"sam", to_string(t.sam)},
          {"sam_rho", t.sam_rho}};
}

static FinetuneConfig finetune_config_from_json(const nlohmann::json& j) {
  FinetuneConfig f;
  Strict s(j, "finetune");
  s.get("steps", f.steps);
  s.get("batch", f.batch);
  s.get("eval_every", f.eval_every);
  s.get("eval_batches", f.eval_batches);
  s.get("lr", f.lr);
  s.get("weight_decay", f.weight_decay);
  s.get("beta1", f.beta1);
  s.get("beta2", f.beta2);
  s.get("eps", f.eps);
  s.get("grad_clip", f.grad_clip);
  s.get("warmup_frac", f.warmup_frac);
  s.get("min_mult", f.min_mult);
  s.finish();
  return f;
}

static nlohmann::json finetune_config_to_json(const FinetuneConfig& f) {
  return {{"steps", f.steps},         {"batch", f.batch},
          {"eval_every", f.eval_every}, {"eval_batches", f.eval_batches},
          {"lr", f.lr},               {"weight_decay", f.weight_decay},
          {"beta1", f.beta1},         {"beta2", f.beta2},
          {"eps", f.eps},             {"grad_clip", f.grad_clip},
          {"warmup_frac", f.warmup_frac}, {"min_mult", f.min_mult}};
}

static DiagnosticsConfig diagnostics_config_from_json(const nlohmann::json& j) {
  DiagnosticsConfig d;
  Strict s(j, "diagnostics");
  s.get("spectrum_cutoff", d.spectrum_cutoff);
  s.get("power_iters", d.power_iters);
  s.get("power_tol", d.power_tol);
  s.get("hutchinson_probes", d.hutchinson_probes);
  s.get("curve_alpha_max", d.curve_alpha_max);
  s.get("curve_points", d.curve_points);
  s.get("probe_batches", d.probe_batches);
  s.get("probe_batch_size", d.probe_batch_size);
  s.get("max_dense_dim", d.max_dense_dim);
  s.finish();
  if (d.curve_points < 3 || d.curve_points % 2 == 0)
    throw ConfigError("diagnostics.curve_points must be odd and >= 3");
  return d;
}

static nlohmann::json diagnostics_config_to_json(const DiagnosticsConfig& d) {
  return {{"spectrum_cutoff", d.spectrum_cutoff},
          {"power_iters", d.power_iters},
          {"power_tol", d.power_tol},
          {"hutchinson_probes", d.hutchinson_probes},
          {"curve_alpha_max", d.curve_alpha_max},
          {"curve_points", d.curve_points},
          {"probe_batches", d.probe_batches},
          {"probe_batch_size", d.probe_batch_size},
          {"max_dense_dim", d.max_dense_dim}};
}

static FilterLabConfig filterlab_config_from_json(const nlohmann::json& j) {
  FilterLabConfig f;
  Strict s(j, "filterlab");
  s.get("kappa_grid", f.kappa_grid);
  s.get("depth", f.depth);
  s.get("epsilon_grid", f.epsilon_grid);
  s.get("redundancy_samples", f.redundancy_samples);
  s.get("seed", f.seed);
  s.finish();
  if (f.kappa_grid.empty()) throw ConfigError("filterlab.kappa_grid must be non-empty");
  return f;
}

static nlohmann::json filterlab_config_to_json(const FilterLabConfig& f) {
  return {{"kappa_grid", f.kappa_grid},
          {"depth", f.depth},
          {"epsilon_grid", f.epsilon_grid},
          {"redundancy_samples", f.redundancy_samples},
          {"seed", f.seed}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  Strict s(j, "config");
  s.get("seed", cfg.seed);
  s.get("out", cfg.out);
  nlohmann::json sub;
  if (s.sub("model", sub)) cfg.model = model_config_from_json(sub);
  if (s.sub("corpus", sub)) cfg.corpus = corpus_spec_from_json(sub);
  if (s.sub("optim", sub)) cfg.optim = optim_config_from_json(sub);
  if (s.sub("train", sub)) cfg.train = train_config_from_json(sub);
  // schedule defaults depend on the step budget, so parse it after train
  if (s.sub("schedule", sub))
    cfg.schedule = schedule_from_json(sub, cfg.train.steps);
  else
    cfg.schedule = schedule_from_json(nlohmann::json::object(), cfg.train.steps);
  if (s.sub("finetune", sub)) cfg.finetune = finetune_config_from_json(sub);
  if (s.sub("diagnostics", sub)) cfg.diagnostics = diagnostics_config_from_json(sub);
  if (s.sub("filterlab", sub)) cfg.filterlab = filterlab_config_from_json(sub);
  s.finish();
  cfg.model.seed = cfg.seed;
  if (cfg.model.vocab != cfg.corpus.vocab)
    throw ConfigError("config: model.vocab must equal corpus.vocab");
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out;
  j["model"] = model_config_to_json(cfg.model);
  j["corpus"] = corpus_spec_to_json(cfg.corpus);
  j["optim"] = optim_config_to_json(cfg.optim);
  j["schedule"] = schedule_to_json(cfg.schedule);
  j["train"] = train_config_to_json(cfg.train);
  j["finetune"] = finetune_config_to_json(cfg.finetune);
  j["diagnostics"] = diagnostics_config_to_json(cfg.diagnostics);
  j["filterlab"] = filterlab_config_to_json(cfg.filterlab);
  return j;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("failed to parse " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace optformer
