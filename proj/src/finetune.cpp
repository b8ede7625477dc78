// SPDX-License-Identifier: Apache-2.0
#include "optformer/finetune.hpp"

#include <cmath>
#include <cstdio>
#include <unordered_map>

namespace optformer {

ForgettingResult finetune_forgetting(const Checkpoint& source_ckpt, const CorpusSpec& target,
                                     const FinetuneConfig& ft, std::uint64_t data_seed,
                                     const std::string& cache_dir) {
  const ModelConfig model_cfg = model_config_from_json(source_ckpt.config.at("model"));
  const CorpusSpec source = corpus_spec_from_json(source_ckpt.config.at("corpus"));
  target.validate();
  if (source.same_identity(target))
    throw ValidationError("finetune_forgetting: target corpus is identical to the source corpus");
  if (target.vocab != source.vocab)
    throw ValidationError("finetune_forgetting: target vocab differs from the model vocab");

  Corpus source_corpus = gen_corpus(source, cache_dir);
  Corpus target_corpus = gen_corpus(target, cache_dir);

  const int window = model_cfg.context + 1;
  Rng root(data_seed);
  Rng src_rng = root.fork(1);
  Rng tgt_rng = root.fork(2);
  Rng data_rng = root.fork(3);
  const std::vector<Batch> src_eval =
      draw_fixed_batches(source_corpus.val, ft.batch, window, ft.eval_batches, src_rng);
  const std::vector<Batch> tgt_eval =
      draw_fixed_batches(target_corpus.val, ft.batch, window, ft.eval_batches, tgt_rng);

  ParamStore params = source_ckpt.params;

  // Fixed fine-tuning recipe: warmup then cosine decay to a floor.
  Schedule sched;
  sched.kind = ScheduleKind::WarmupCosine;
  sched.total = std::max<long>(ft.steps, 1);
  sched.warmup = static_cast<long>(std::llround(ft.warmup_frac * static_cast<double>(ft.steps)));
  sched.min_mult = ft.min_mult;

  ForgettingResult result;
  result.source_batch_hash = batch_hash(src_eval);
  result.target_batch_hash = batch_hash(tgt_eval);
  result.source_loss_before = eval_loss(model_cfg, params, src_eval);

  // One flat AdamW group for every parameter, regardless of how the model
  // was pretrained.
  std::unordered_map<std::string, AdamWState> state;
  long step_index = 0;

  auto evaluate = [&](long step) {
    ForgettingRow row;
    row.step = step;
    row.source_loss = step == 0 ? result.source_loss_before : eval_loss(model_cfg, params, src_eval);
    row.target_loss = eval_loss(model_cfg, params, tgt_eval);
    row.lr_mult = ft.steps > 0 ? schedule_value(sched, std::min(step, sched.total)) : 0.0;
    result.curve.push_back(row);
    return row.source_loss;
  };

  double last_source = evaluate(0);
  for (long step = 0; step < ft.steps; ++step) {
    Batch batch = draw_batch(target_corpus.train, ft.batch, window, data_rng);
    GradEval ge = loss_and_grads(model_cfg, params, batch);
    if (!std::isfinite(ge.loss))
      throw NumericError("finetune_forgetting: non-finite loss at step " + std::to_string(step));
    std::vector<Tensor*> grad_ptrs;
    for (Tensor& g : ge.grads) grad_ptrs.push_back(&g);
    clip_global_norm(grad_ptrs, ft.grad_clip);
    const double lr = ft.lr * schedule_value(sched, step + 1);
    ++step_index;
    for (std::size_t i = 0; i < params.items().size(); ++i)
      adamw_step(params.items_mut()[i].second, ge.grads[i], state[params.items()[i].first],
                 step_index, lr, ft.weight_decay, ft.beta1, ft.beta2, ft.eps);
    if ((step + 1) % ft.eval_every == 0 || step + 1 == ft.steps) last_source = evaluate(step + 1);
  }

  result.source_loss_after = last_source;
  result.forgetting = forgetting_from(result.source_loss_before, result.source_loss_after);
  return result;
}

std::string forgetting_curve_csv(const ForgettingResult& r) {
  std::string out = "step,source_loss,target_loss,lr_mult\n";
  char buf[160];
  for (const ForgettingRow& row : r.curve) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g\n", row.step, row.source_loss,
                  row.target_loss, row.lr_mult);
    out += buf;
  }
  return out;
}

}  // namespace optformer
