// SPDX-License-Identifier: Apache-2.0
#include "optformer/train.hpp"

#include <cmath>
#include <cstdio>

namespace optformer {

namespace {

// Batch loss as a single tape: mean over windows of per-window mean CE.
Var batch_loss(const BoundModel& model, const Batch& batch) {
  Var acc{};
  for (std::size_t i = 0; i < batch.windows.size(); ++i) {
    Var l = sequence_loss(model, batch.windows[i]);
    acc = i == 0 ? l : add(acc, l);
  }
  return scale(acc, 1.0 / static_cast<double>(batch.windows.size()));
}

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string run_record_csv(const RunRecord& record) {
  std::string out = "step,train_loss,val_loss,lr_mult\n";
  for (const EvalRow& r : record.rows) {
    out += std::to_string(r.step) + "," + fmt_full(r.train_loss) + "," + fmt_full(r.val_loss) +
           "," + fmt_full(r.lr_mult) + "\n";
  }
  return out;
}

double eval_loss(const ModelConfig& cfg, const ParamStore& params,
                 const std::vector<Batch>& batches) {
  double total = 0.0;
  long n = 0;
  for (const Batch& b : batches) {
    Tape tape;
    BoundModel model = bind_params(tape, cfg, params, /*trainable=*/false);
    for (const auto& w : b.windows) {
      total += tape.val(sequence_loss(model, w)).data[0];
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

GradEval loss_and_grads(const ModelConfig& cfg, const ParamStore& params, const Batch& batch) {
  Tape tape;
  BoundModel model = bind_params(tape, cfg, params, /*trainable=*/true);
  Var loss = batch_loss(model, batch);
  tape.backward(loss);
  GradEval out;
  out.loss = tape.val(loss).data[0];
  out.grads.reserve(model.vars.size());
  for (const auto& [name, var] : model.vars) out.grads.push_back(tape.grad(var));
  return out;
}

TrainResult train(const RunConfig& cfg, const std::string& cache_dir) {
  cfg.model.validate();
  if (cfg.train.steps > 0) {
    cfg.schedule.validate();
    if (cfg.schedule.total != cfg.train.steps)
      throw ConfigError("train: schedule.total must equal train.steps");
  }

  Corpus corpus = gen_corpus(cfg.corpus, cache_dir);
  ParamStore params = init_params(cfg.model);
  ModelOptimizer optimizer(params, cfg.optim);

  const int window = cfg.model.context + 1;
  Rng root(cfg.seed);
  Rng data_rng = root.fork(1);
  Rng eval_rng = root.fork(2);
  Rng probe_rng = root.fork(3);
  const std::vector<Batch> val_batches =
      draw_fixed_batches(corpus.val, cfg.train.batch, window, cfg.train.eval_batches, eval_rng);
  const std::vector<Batch> train_probe =
      draw_fixed_batches(corpus.train, cfg.train.batch, window, cfg.train.eval_batches, probe_rng);

  TrainResult result;
  result.record.eval_batch_hash = batch_hash(val_batches);
  result.record.best_val_loss = std::numeric_limits<double>::infinity();

  auto snapshot_best = [&](long step, double val) {
    result.best.config = run_config_to_json(cfg);
    result.best.params = params;
    result.best.opt_state = optimizer.state_tensors();
    result.best.opt_steps = optimizer.steps_taken();
    result.best.step = step;
    result.best.best_val_loss = val;
  };

  auto evaluate = [&](long step) {
    EvalRow row;
    row.step = step;
    row.train_loss = eval_loss(cfg.model, params, train_probe);
    row.val_loss = eval_loss(cfg.model, params, val_batches);
    row.lr_mult =
        cfg.train.steps > 0 ? schedule_value(cfg.schedule, std::min(step, cfg.schedule.total)) : 0.0;
    if (!std::isfinite(row.train_loss) || !std::isfinite(row.val_loss))
      throw NumericError("train: non-finite evaluation loss at step " + std::to_string(step));
    result.record.rows.push_back(row);
    if (row.val_loss < result.record.best_val_loss) {
      result.record.best_val_loss = row.val_loss;
      result.record.best_step = step;
      snapshot_best(step, row.val_loss);
    }
  };

  try {
    for (long step = 0; step <= cfg.train.steps; ++step) {
      if (step % cfg.train.eval_every == 0 || step == cfg.train.steps) evaluate(step);
      if (step == cfg.train.steps) break;

      Batch batch = draw_batch(corpus.train, cfg.train.batch, window, data_rng);
      GradFn grad_fn = [&](const ParamStore& p) { return loss_and_grads(cfg.model, p, batch); };
      GradEval ge;
      if (sam_active(cfg.train.sam, cfg.schedule, step + 1))
        ge = sam_wrap(grad_fn, params, cfg.train.sam_rho);
      else
        ge = grad_fn(params);

      if (!std::isfinite(ge.loss))
        throw NumericError("train: non-finite training loss at step " + std::to_string(step));
      std::vector<Tensor*> grad_ptrs;
      grad_ptrs.reserve(ge.grads.size());
      for (Tensor& g : ge.grads) {
        if (!g.all_finite())
          throw NumericError("train: non-finite gradient at step " + std::to_string(step));
        grad_ptrs.push_back(&g);
      }
      clip_global_norm(grad_ptrs, cfg.train.grad_clip);
      optimizer.step(params, ge.grads, schedule_value(cfg.schedule, step + 1));
    }
  } catch (const NumericError& e) {
    // abort with the last-good checkpoint and a diagnostic
    result.record.diverged = true;
    result.record.divergence_note = e.what();
  }
  return result;
}

}  // namespace optformer
